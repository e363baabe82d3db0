"""Smoke test for the `overhang` extension module.

Build it first:  cargo build --release -p overhang-py --features extension-module
then run:        python3 python/smoke.py
"""

import importlib.util
import json
import math
import pathlib
import shutil
import sys
import tempfile


def load():
    try:
        import overhang  # noqa: F401
        return sys.modules["overhang"]
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    lib = root / "target" / "release" / "liboverhang.so"
    if not lib.exists():
        sys.exit(f"extension not built: {lib} missing")
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "overhang.so")
    spec = importlib.util.spec_from_file_location("overhang", tmp / "overhang.so")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    oh = load()

    centered = oh.Geometry([(1.2, 0.0, 0), (1.2, 0.3, 1)])
    stable, margin = centered.stability()
    assert stable and math.isclose(margin, 0.3, abs_tol=1e-9), (stable, margin)
    tipping = oh.Geometry([(1.2, 0.0, 0), (1.2, 0.65, 1)])
    assert not tipping.is_stable()
    assert math.isclose(centered.overhang(), 0.9, abs_tol=1e-9)
    assert centered.order_dependency() == (1, 1, 0.0)

    p = oh.Predictor("ipe", samples=1000).probability(oh.Geometry([(1.2, 0.0, 0), (1.2, 0.6, 1)]))
    assert 0.45 <= p <= 0.55, p

    tasks = oh.frozen_suite()
    assert len(tasks) == 20 and tasks[0].id == "task-00"
    assert [t.widths for t in oh.generate_tasks(20, 20)] == [t.widths for t in tasks]

    state = oh.State(tasks[0])
    assert len(state.geometry) == 1 and len(state.remaining) == 5
    assert state.validate(0.0, 0) == "penetrates"
    assert state.validate(0.0, 1) == "valid"
    assert (0.0, 1) in state.candidates()
    after = state.apply(0.0, 1)
    assert len(after.remaining) == 4

    reward, actions, trace = oh.run_episode(tasks[0], predictor="veridical")
    assert len(actions) == 5 and reward > 0.0
    record = json.loads(trace)
    assert record["format"] == oh.FORMAT_TAG
    ll = oh.Predictor("veridical").log_likelihood(trace)
    assert [s for s, _ in ll] == [2, 3, 4, 5, 6]
    summary = json.loads(oh.summarize(trace + "\n"))
    assert math.isclose(summary["reward"]["mean"], reward)

    try:
        oh.Geometry([(1.0, 0.0, 0)])
    except ValueError:
        pass
    else:
        raise AssertionError("bad width accepted")

    print("python smoke: ok")


if __name__ == "__main__":
    main()
