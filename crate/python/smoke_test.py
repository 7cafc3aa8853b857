"""Smoke test for the evfb extension.

Build and run from the repository root:

    cargo build --release -p evfb-py --features extension-module
    cp target/release/libevfb.so python/evfb.so
    python3 python/smoke_test.py
"""

import json
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import evfb  # noqa: E402


def main():
    assert abs(evfb.bessel_j0(0.0) - 1.0) < 1e-15
    assert abs(evfb.correlation(3, 0.1) - evfb.bessel_j0(2 * math.pi * 0.1)) < 1e-15

    spec = evfb.GridSpec(3, 4, 4)
    assert (spec.m, spec.n) == (4, 4)
    assert spec.quantize(1.0, 0.99) == (spec.quantize(1.0, 0.0)[0], 3)

    model = evfb.estimate_model(spec, 3, 0.1, 40_000, seed=7)
    for row in model.ptilde + model.p0 + [model.p1_row]:
        assert abs(sum(row) - 1.0) < 1e-9

    free = evfb.solve(spec, model, 100.0, 0.0)
    assert all(all(row) for row in free.policy)
    assert free.is_threshold

    costly = evfb.solve(spec, model, 100.0, 1.0)
    assert costly.is_threshold
    assert costly.j <= free.j
    assert abs(evfb.average_reward(costly.policy, spec, model, 100.0, 1.0) - costly.j) < 1e-9
    assert json.loads(costly.to_json())["J"] == costly.j

    sim = evfb.simulate(costly.policy, spec, 3, 0.1, 100.0, 1.0, slots=20_000, seed=3)
    assert abs(sim["net"] - (sim["throughput"] - sim["feedback_rate"])) < 1e-9
    assert sim == evfb.simulate(costly.policy, spec, 3, 0.1, 100.0, 1.0, slots=20_000, seed=3)

    cb = evfb.lloyd_codebook(3, 8, seed=1, training=2_000, iterations=5)
    assert len(cb) == 8
    assert evfb.Codebook.from_json(cb.to_json()).vectors == cb.vectors
    _, eps = cb.nearest(cb.vectors[0])
    assert abs(eps - 1.0) < 1e-12

    stats = evfb.epsilon_statistics(cb, 100.0, spec, 5_000, seed=2)
    assert 0.0 < stats.mean_eps < 1.0
    qmodel = evfb.estimate_model(spec, 3, 0.1, 40_000, seed=7, codebook=cb)
    curve = evfb.sweep([0.0, 1.0], spec, qmodel, 3, 0.1, 100.0, slots=20_000, seed=3, codebook=cb, eps=stats)
    assert [p["alpha"] for p in curve] == [0.0, 1.0]

    try:
        evfb.GridSpec(3, 0, 4)
    except ValueError:
        pass
    else:
        raise AssertionError("zero-size grid accepted")

    print("evfb smoke test passed")


if __name__ == "__main__":
    main()
