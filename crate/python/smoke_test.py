"""Smoke test for the liekit Python bindings.

Build first:  pip install --no-build-isolation -e crates/py
Run:          python3 python/smoke_test.py
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import numpy as np

import liekit


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    if not ok:
        check.failed += 1


check.failed = 0


def numeric_jr(group, tau, eps=1e-6):
    """d Log(Exp(tau)^-1 Exp(tau + h)) / dh by central differences."""
    x = group.exp(tau)
    n = len(tau)
    jac = np.zeros((n, n))
    for i in range(n):
        h = np.zeros(n)
        h[i] = eps
        plus = group.exp(list(np.add(tau, h))).rminus(x)
        minus = group.exp(list(np.subtract(tau, h))).rminus(x)
        jac[:, i] = (np.array(plus) - np.array(minus)) / (2 * eps)
    return jac


def main():
    rng = np.random.default_rng(0)
    for group, dof in [(liekit.SO2, 1), (liekit.SO3, 3), (liekit.SE2, 3), (liekit.SE3, 6)]:
        tau = list(rng.uniform(-1, 1, dof))
        x = group.exp(tau)
        check(f"{group.__name__} exp/log", np.allclose(x.log(), tau, atol=1e-12))
        y = group.exp(list(rng.uniform(-1, 1, dof)))
        ad = np.array(x.compose(y).adj()) - np.array(x.adj()) @ np.array(y.adj())
        check(f"{group.__name__} adjoint", np.abs(ad).max() < 1e-10)
        err = np.abs(np.array(group.jr(tau)) - numeric_jr(group, tau)).max()
        check(f"{group.__name__} jr vs finite differences", err < 1e-6, f"{err:.1e}")
        check(f"{group.__name__} plus/minus", np.allclose(x.rplus([0.1] * dof).rminus(x), [0.1] * dof, atol=1e-12))

    p = liekit.SE2.exp([0.0, 0.0, math.pi / 2])
    q = liekit.SE2.exp([1.0, 2.0, 0.0]).compose(p)
    check("SE2 action", np.allclose(q.act([1.0, 0.0]), [1.0, 3.0], atol=1e-12), str(q.act([1.0, 0.0])))

    rep = liekit.jaccheck(trials=10)
    check("jaccheck", rep["passed"] and len(rep["blocks"]) >= 40, f"{len(rep['blocks'])} blocks")
    rep = liekit.jaccheck(trials=5, inject_faults=["se3.jr"])
    check("jaccheck fault injection", rep["failed"] == ["se3.jr"])

    out = liekit.run("eskf", json.dumps({"noiseless": True, "steps": 50}))
    check("eskf noiseless", out["summary"]["terminal_error"] < 1e-9, f"{out['summary']['terminal_error']:.1e}")
    out = liekit.run("sam", seed=3, dim=3)
    check("sam 3d", out["summary"]["converged"] and len(out["estimates"]["rows"]) == 201)
    out = liekit.run("selfcal", json.dumps({"noiseless": True, "bias": [0.05, -0.02], "steps": 20}))
    check("selfcal bias", np.allclose(out["summary"]["bias"], [0.05, -0.02], atol=1e-6), str(out["summary"]["bias"]))
    out = liekit.run("ddcalib", json.dumps({"noiseless": True}))
    check("ddcalib", np.allclose(out["summary"]["calibration"], [1.02, 0.98, 1.05], atol=1e-6))

    d = liekit.preintegrate([(0.2, 0.2)] * 10, noise=(1e-4, 1e-4, 1e-3, 1e-3))
    check("preintegrate straight", np.allclose(d["delta"], [0.2, 0.0, 0.0], atol=1e-12), str(d["delta"]))
    check("preintegrate covariance", np.linalg.eigvalsh(np.array(d["q"])).min() > 0)

    with tempfile.TemporaryDirectory() as tmp:
        liekit.simulate(tmp, json.dumps({"steps": 10}), seed=1)
        check("simulate files", (Path(tmp) / "truth.csv").exists() and (Path(tmp) / "measurements.csv").exists())

    try:
        liekit.run("eskf", json.dumps({"steps": 0}))
        check("validation error raised", False)
    except ValueError:
        check("validation error raised", True)

    print("all passed" if check.failed == 0 else f"{check.failed} failed")
    return 1 if check.failed else 0


if __name__ == "__main__":
    sys.exit(main())
