"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest

from curvatura import ProblemSpec, build_grid, check_hypotheses, cli, continuation_run, curvature_field
from curvatura.solver import SolverConfig, jacobian_fd, residual
from curvatura.verify import check_codazzi, check_gauss, check_lemma1, symfunc_suite

from conftest import ACCEPTANCE_LINES

GRIDS = [(16, 32), (32, 64), (64, 128)]
R1, RBAR, R2, K = 0.5, 1.0, 2.0, 2
RADIAL = f"cosh({RBAR})^{K}/sinh(rho)^{K}"
PERTURBED = f"cosh({RBAR})^{K}*(1 + 0.05*z)/sinh(rho)^{K}"


def record(n, ok, text):
    line = f"[{n:2d}] {'PASS' if ok else 'FAIL'}  {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_01_round_sphere_oracle():
    grid = build_grid(32, 64)
    worst_lam = worst_h = 0.0
    t0 = time.perf_counter()
    for R in (0.5, 1.0, 1.7):
        for k in (1, 2):
            cd = curvature_field(np.full(grid.shape, R), grid, k)
            coth = 1 / math.tanh(R)
            worst_lam = max(worst_lam, float(np.abs(cd.lam - coth).max()))
            worst_h = max(worst_h, float(np.abs(cd.h_k - coth ** k).max()))
    dt = (time.perf_counter() - t0) / 6
    ok = worst_lam <= 1e-12 and worst_h <= 1e-12 and dt < 1.0
    assert record(1, ok, f"round sphere: max|lam - coth R| {worst_lam:.1e}, max|H_k - coth^k R| "
                         f"{worst_h:.1e}, {dt:.2f} s per field at 32x64")


def test_02_symmetric_function_suite():
    res, dt = timed(symfunc_suite, 0, 1000, 200)
    keys = ("homogeneity", "euler", "permutation", "monotonicity", "concavity")
    ok = all(res[k]["passed"] for k in keys) and dt < 5.0
    worst = ", ".join(f"{k} {res[k]['worst']:.1e}" for k in keys)
    assert record(2, ok, f"symmetric functions on 1000 samples x 4 (n,k): {worst}; {dt:.2f} s")


def test_03_andrews_oracle():
    res, dt = timed(symfunc_suite, 0, 1000, 200)
    a = res["andrews"]
    ok = a["passed"] and a["worst"] <= 1e-5 and a["cases"] >= 200 and a["coalescing_cases"] >= 50 and dt < 10
    assert record(3, ok, f"Andrews contraction vs matrix-space differences: worst rel {a['worst']:.1e} on "
                         f"{a['cases']} pairs ({a['coalescing_cases']} coalescing); exact-route "
                         f"{res['andrews_exact']['worst']:.1e}; {dt:.2f} s")


def test_04_lemma1_convergence():
    (r6, r8), dt = timed(check_lemma1, f"{RBAR} + 0.1*z", GRIDS)
    ok = r6.order >= 1.7 and r8.order >= 1.7 and dt < 30
    assert record(4, ok, f"tau/eta identities on Rbar + 0.1 cos: orders {r6.order:.2f} / {r8.order:.2f} "
                         f"(need 1.7); {dt:.1f} s")


def test_05_gauss_codazzi():
    zdef = f"{RBAR} + 0.1*z"
    cod = check_codazzi(zdef, GRIDS)
    gau = check_gauss(zdef, GRIDS)
    cod0 = check_codazzi(1.3, GRIDS)
    gau0 = check_gauss(1.3, GRIDS)
    exact = max(max(cod0.residuals), max(gau0.residuals))
    ok = cod.order >= 0.7 and gau.order >= 0.7 and exact <= 1e-10 and gau.extra["det_consistency"] <= 1e-10
    assert record(5, ok, f"Codazzi order {cod.order:.2f}, Gauss order {gau.order:.2f} (need 0.7); "
                         f"round sphere max defect {exact:.1e}")


def test_06_start_point_and_linearization():
    grid = build_grid(32, 64)
    spec = ProblemSpec(K, R1, R2, RBAR, RADIAL)
    z = np.full(grid.shape, RBAR)
    r0 = float(np.abs(residual(z, 0.0, spec, grid)).max())
    J = jacobian_fd(z, 0.0, spec, grid)
    smin = float(np.linalg.svd(J, compute_uv=False).min())
    shift = float(J.sum(axis=1).mean())
    target = spec.epsilon / math.sinh(RBAR) ** 2 / RBAR
    rel = abs(shift / target - 1)
    ok = r0 <= 1e-12 and smin > 0 and rel <= 0.2
    assert record(6, ok, f"t=0: residual {r0:.1e}; smallest singular value {smin:.3f}; radial shift "
                         f"{shift:.5f} vs eps/sinh^2(Rbar)/Rbar = {target:.5f} ({100 * rel:.2f}%)")


@pytest.fixture(scope="module")
def grid32():
    return build_grid(32, 64)


def test_07_radial_end_to_end(grid32):
    spec = ProblemSpec(K, R1, R2, RBAR, RADIAL)
    t0 = time.perf_counter()
    rep = check_hypotheses(spec, grid32)
    st = continuation_run(spec, grid32)
    dt = time.perf_counter() - t0
    err = float(np.abs(st.z.z - RBAR).max())
    ok = (rep.passed and abs(rep.monotonicity_margin) <= 1e-12 and st.t == 1.0 and err <= 1e-8
          and st.residual_norm <= 1e-10 and dt < 120)
    assert record(7, ok, f"radial problem: check {'ok' if rep.passed else 'failed'} (monotonicity "
                         f"{rep.monotonicity_margin:.1e}), t={st.t}, |z - Rbar| {err:.1e}, residual "
                         f"{st.residual_norm:.1e}, {st.steps} steps, {dt:.1f} s")


def test_08_perturbed_end_to_end(grid32):
    spec = ProblemSpec(K, R1, R2, RBAR, PERTURBED)
    st, dt = timed(continuation_run, spec, grid32)
    z = st.z.z
    cd = curvature_field(z, grid32, K)
    G = float(np.abs(residual(z, 1.0, spec, grid32)).max())
    strict = bool(np.all((z > R1) & (z < R2)))
    spread = float(z.max() - z.min())
    ok = st.t == 1.0 and G <= 1e-10 and strict and cd.admissible.all() and spread >= 1e-3 and dt < 300
    assert record(8, ok, f"perturbed problem: t={st.t}, residual {G:.1e}, z in [{z.min():.4f}, {z.max():.4f}] "
                         f"(strict {strict}), admissible {int(cd.admissible.sum())}/{z.size}, "
                         f"range {spread:.2e}, {dt:.1f} s")


def _config(path, psi, seed=None):
    cfg = {"k": K, "R1": R1, "R2": R2, "Rbar": RBAR, "epsilon": 1.0, "psi": psi,
           "grid": {"n_theta": 32, "n_phi": 64}}
    path.write_text(json.dumps(cfg))
    return str(path)


def test_09_negative_control(tmp_path):
    cfg = _config(tmp_path / "coth.json", f"coth(rho)^{K}")
    code = cli.run_check(cfg, tmp_path)
    doc = json.loads((tmp_path / "hypotheses.json").read_text())["hypotheses"]
    kinds = {v["condition"] for v in doc["violations"]}
    ok = code == 2 and "monotonicity" in kinds
    assert record(9, ok, f"psi = coth^k: exit {code}, violations {sorted(kinds)}, max derivative "
                         f"{doc['monotonicity']['max_derivative']:.3f}")


def test_10_determinism(tmp_path):
    same = []
    for name, psi in (("radial", RADIAL), ("perturbed", PERTURBED)):
        cfg = _config(tmp_path / f"{name}.json", psi)
        outs = []
        for rep in range(2):
            out = tmp_path / f"{name}_{rep}"
            assert cli.main(["solve", cfg, "--seed", "0", "--out", str(out)]) == 0
            outs.append((out / "solution.csv").read_bytes())
        same.append(outs[0] == outs[1])
    ok = all(same)
    assert record(10, ok, f"repeated solves give bit-identical solution CSVs: radial {same[0]}, "
                          f"perturbed {same[1]}")
