"""Quick end-to-end check of the Python bindings."""

import json
import math
from pathlib import Path

import numpy as np

import wmg

ROOT = Path(__file__).resolve().parent.parent


def main():
    swap = wmg.Graph(2, [(0, 1, 1.0, 2.0), (1, 0, 1.0, 3.0)])
    ev = wmg.evaluate(swap)
    assert ev.k == 3.75 and ev.k_w == 3.8 and ev.s == 0.0, ev
    assert np.allclose(ev.M, [[5.0, 2.0], [3.0, 5.0]])

    g = wmg.Graph.load(str(ROOT / "fixtures" / "random5.csv"))
    ev = wmg.evaluate(g)
    pi = np.array(ev.pi)
    assert abs(pi.sum() - 1.0) < 1e-12
    assert abs(pi @ np.array(ev.M) @ pi - ev.k) < 1e-9 * ev.k
    mc = wmg.monte_carlo(g, 0, 3, episodes=50_000, seed=1)
    assert abs(mc["mean"] - ev.M[0][3]) < 5 * mc["mean_se"], (mc, ev.M[0][3])

    worst = max(r["rel_err"] for r in wmg.check_gradients(g))
    assert worst <= 1e-4, worst

    r = wmg.Graph.random(5, seed=3, density=0.8, stochastic=0.6)
    out = wmg.optimize_policy(r, [0.2] * 5, 1e-3, iterations=200)
    p = np.array(out["P"])
    assert np.allclose(p.sum(axis=1), 1.0) and np.allclose(np.full(5, 0.2) @ p, 0.2, atol=1e-8)

    grid = json.loads((ROOT / "configs" / "grid4x4.json").read_text())["grid"]
    study = wmg.surveillance_study(json.dumps(grid), modes=["max-surprise"], iterations=100)
    assert [s["mode"] for s in study] == ["baseline", "max-surprise"]

    casc = wmg.run_cascades(seeds=2)
    assert [s["policy"] for s in casc["summary"]] == ["unsupervised", "supervised", "locally-supervised"]
    assert all(math.isfinite(x) for run in casc["runs"] for x in run["dk"])

    try:
        wmg.Graph.load(str(ROOT / "fixtures" / "invalid.json"))
    except ValueError as e:
        assert "row" in str(e).lower(), e
    else:
        raise AssertionError("invalid graph accepted")

    print("python smoke test ok")


if __name__ == "__main__":
    main()
