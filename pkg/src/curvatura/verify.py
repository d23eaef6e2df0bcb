"""Grid-refinement checks of the structure identities of radial graphs.

Every check resamples a closed-form graph on each grid, forms a residual
field and fits the convergence order of its max-node value.  Residuals are
taken in coordinate components of the (theta, phi) chart.

Graphs may be given as an expression string in the direction cosines
``x, y, z`` (for instance ``"1 + 0.1*z"``), a parsed expression, a callable
``(theta, phi) -> array`` or a constant.
"""

import math
from itertools import combinations
from math import comb
from dataclasses import dataclass, field, asdict

import numpy as np

from . import symfunc as sf
from .hypergeom import covariant_hessian_z, curvature_field
from .psi_lang import ExprError, evaluate, parse
from .sphere_grid import build_grid, hess_sphere

__all__ = [
    "IdentityReport",
    "MonitorReport",
    "fit_order",
    "sample_graph",
    "christoffel_fd",
    "check_lemma1",
    "check_codazzi",
    "check_gauss",
    "monitor_bounds",
    "sample_cone",
    "andrews_oracle",
    "andrews_exact",
    "symfunc_suite",
    "lemma1_residuals",
    "codazzi_residual",
    "gauss_residuals",
    "gauss_curvature_fd",
]

EXACT_TOL = 1e-10


def _parity(a, b):
    return (-1) ** ((a == 0) + (b == 0))


def fit_order(hs, residuals, last=3):
    """Least-squares slope of log2(residual) against log2(h) over the finest grids."""
    hs = np.asarray(hs[-last:], dtype=float)
    rs = np.asarray(residuals[-last:], dtype=float)
    return float(np.polyfit(np.log2(hs), np.log2(rs), 1)[0])


@dataclass
class IdentityReport:
    name: str
    grids: list
    residuals: list
    declared_order: float
    order: float = None
    exact: bool = False
    passed: bool = False
    extra: dict = field(default_factory=dict)

    def finish(self):
        self.exact = all(r <= EXACT_TOL for r in self.residuals)
        if len(self.grids) >= 3 and not self.exact:
            hs = [math.pi / nt for nt, _ in self.grids]
            self.order = fit_order(hs, self.residuals)
        if self.exact:
            self.passed = True
        elif self.order is not None:
            self.passed = self.order >= self.declared_order - 0.3
        return self

    def to_dict(self):
        return asdict(self)


def _grids(grids):
    out = []
    for g in grids:
        if isinstance(g, int):
            out.append(build_grid(g, 2 * g))
        elif isinstance(g, tuple):
            out.append(build_grid(*g))
        else:
            out.append(g)
    return out


def sample_graph(zdef, grid):
    """Nodal values of a closed-form graph on ``grid``."""
    if isinstance(zdef, (int, float)):
        return np.full(grid.shape, float(zdef))
    if callable(zdef):
        th, ph = grid.mesh
        return np.asarray(zdef(th, ph), dtype=float) * np.ones(grid.shape)
    try:
        node = parse(zdef) if isinstance(zdef, str) else zdef
        return evaluate(node, grid.dircos, 1.0)
    except (ExprError, TypeError) as exc:
        raise ValueError(f"cannot resample graph {zdef!r}: {exc}") from exc


def _dtensor(grid, T):
    """Partial derivatives dT[l, a, b] = d_l T_ab of a (..., 2, 2) field."""
    out = np.empty(grid.shape + (2, 2, 2))
    for a in range(2):
        for b in range(a, 2):
            p = _parity(a, b)
            out[..., 0, a, b] = out[..., 0, b, a] = grid.diff(T[..., a, b], "t", p)
            out[..., 1, a, b] = out[..., 1, b, a] = grid.diff(T[..., a, b], "p")
    return out


def christoffel_fd(grid, g, g_inv):
    """Christoffel symbols Gamma[m, i, j] of g from differenced components."""
    dg = _dtensor(grid, g)
    lower = (np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg) - dg)
    return 0.5 * np.einsum("...ml,...lij->...mij", g_inv, lower)


def _scalar_grad(grid, f):
    return np.stack([grid.diff(f, "t"), grid.diff(f, "p")], axis=-1)


def _scalar_hess_fd(grid, f, gamma):
    d = _scalar_grad(grid, f)
    H = np.empty(grid.shape + (2, 2))
    H[..., 0, 0] = grid.diff(f, "tt")
    H[..., 1, 1] = grid.diff(f, "pp")
    H[..., 0, 1] = H[..., 1, 0] = grid.diff(f, "tp")
    return H - np.einsum("...mij,...m->...ij", gamma, d)


def lemma1_residuals(z, grid, k=2):
    """Max-node residuals of the tau / eta identities.

    Returns ``(r_grad, r_hess, r_chain)``: d_i tau + b_ip g^pq d_q eta;
    Hess_g(eta) - tau b - eta g with eta differenced directly; and the same
    Hessian residual with Hess_g(eta) = -sinh z Hess_g(z) - cosh z dz dz from
    the closed-form induced Hessian of z.
    """
    cd = curvature_field(z, grid, k)
    deta = _scalar_grad(grid, cd.eta)
    r36 = _scalar_grad(grid, cd.tau) + np.einsum("...ip,...pq,...q->...i", cd.b, cd.g_inv, deta)
    gamma = christoffel_fd(grid, cd.g, cd.g_inv)
    rhs = cd.tau[..., None, None] * cd.b + cd.eta[..., None, None] * cd.g
    r38 = _scalar_hess_fd(grid, cd.eta, gamma) - rhs
    zt, zp, _ = cd.grad
    hz = covariant_hessian_z(z, (zt, zp), hess_sphere(z, grid, (zt, zp)), grid.e)
    dz = np.stack([zt, zp], -1)
    chain = (-np.sinh(z)[..., None, None] * hz
             - np.cosh(z)[..., None, None] * dz[..., :, None] * dz[..., None, :])
    return float(np.abs(r36).max()), float(np.abs(r38).max()), float(np.abs(chain - rhs).max())


def check_lemma1(zdef, grids, k=2):
    """Refinement study of the tau / eta identities; returns two reports."""
    grids = _grids(grids)
    res = [lemma1_residuals(sample_graph(zdef, g), g, k) for g in grids]
    shapes = [g.shape for g in grids]
    r6 = IdentityReport("lemma1_gradient_tau", shapes, [r[0] for r in res], 2.0).finish()
    r8 = IdentityReport("lemma1_hessian_eta", shapes, [r[1] for r in res], 2.0)
    r8.extra["chain_rule_residuals"] = [r[2] for r in res]
    return r6, r8.finish()


def codazzi_residual(z, grid, k=2):
    cd = curvature_field(z, grid, k)
    gamma = christoffel_fd(grid, cd.g, cd.g_inv)
    db = _dtensor(grid, cd.b)
    # nabla_l b_ij = d_l b_ij - Gamma^m_li b_mj - Gamma^m_lj b_im
    nb = (db - np.einsum("...mli,...mj->...lij", gamma, cd.b)
          - np.einsum("...mlj,...im->...lij", gamma, cd.b))
    d1 = nb[..., 0, 1, 1] - nb[..., 1, 0, 1]
    d2 = nb[..., 1, 0, 0] - nb[..., 0, 0, 1]
    return float(max(np.abs(d1).max(), np.abs(d2).max()))


def check_codazzi(zdef, grids, k=2):
    """Refinement study of the symmetry of nabla b (induced metric)."""
    grids = _grids(grids)
    res = [codazzi_residual(sample_graph(zdef, g), g, k) for g in grids]
    return IdentityReport("codazzi", [g.shape for g in grids], res, 1.0).finish()


def _frame_connection(grid):
    """Connection of the orthonormal frame (d_theta, d_phi / sin theta) of e.

    ``w[m, a, b]`` is the E_m component of nabla_{E_a} E_b.
    """
    cot = 1.0 / np.tan(grid.mesh[0])
    w = np.zeros(grid.shape + (2, 2, 2))
    w[..., 1, 1, 0] = cot
    w[..., 0, 1, 1] = -cot
    return w


def _frame_deriv(grid, F, nidx):
    """E_1 and E_2 derivatives of a frame-component field with ``nidx`` indices."""
    s = np.sin(grid.mesh[0])
    return grid.diff(F, "t", (-1) ** nidx), grid.diff(F, "p") / s


def gauss_curvature_fd(grid, g):
    """Intrinsic curvature of a 2-metric, by differencing its components.

    The metric is written in the orthonormal frame of the round metric and
    its connection is split as (round connection) + (difference tensor C).
    Only ``g`` and its differences enter; for ``g`` proportional to the round
    metric all differenced quantities are constant and the result is exact.
    """
    s = np.sin(grid.mesh[0])
    sig = np.stack([np.ones_like(s), s], -1)
    gh = g / (sig[..., :, None] * sig[..., None, :])
    ghi = np.linalg.inv(gh)
    w = _frame_connection(grid)

    dg = np.empty(grid.shape + (2, 2, 2))
    for a in range(2):
        for b in range(a, 2):
            d1, d2 = _frame_deriv(grid, gh[..., a, b], 2)
            dg[..., 0, a, b] = dg[..., 0, b, a] = d1
            dg[..., 1, a, b] = dg[..., 1, b, a] = d2
    # covariant derivative of g along the round connection, D[e, a, b]
    D = (dg - np.einsum("...mea,...mb->...eab", w, gh)
         - np.einsum("...meb,...am->...eab", w, gh))
    C = 0.5 * np.einsum("...dc,...abc->...dab", ghi,
                        D + np.swapaxes(D, -3, -2) - np.einsum("...cab->...abc", D))

    dC = np.empty(grid.shape + (2, 2, 2, 2))
    for d in range(2):
        for a in range(2):
            for b in range(2):
                d1, d2 = _frame_deriv(grid, C[..., d, a, b], 3)
                dC[..., 0, d, a, b] = d1
                dC[..., 1, d, a, b] = d2
    DC = (dC + np.einsum("...dem,...mab->...edab", w, C)
          - np.einsum("...mea,...dmb->...edab", w, C)
          - np.einsum("...meb,...dam->...edab", w, C))

    # R(E1, E2)E2 for the round metric (curvature 1) is E1
    rv = np.zeros(grid.shape + (2,))
    rv[..., 0] = 1.0
    rv = (rv + DC[..., 0, :, 1, 1] - DC[..., 1, :, 0, 1]
          + np.einsum("...dm,...m->...d", C[..., :, 0, :], C[..., :, 1, 1])
          - np.einsum("...dm,...m->...d", C[..., :, 1, :], C[..., :, 0, 1]))
    return np.einsum("...d,...d->...", gh[..., 0, :], rv) / np.linalg.det(gh)


def gauss_residuals(z, grid, k=2):
    """(max |K - (l1 l2 - 1)|, max |det b / det g - l1 l2|)."""
    cd = curvature_field(z, grid, k)
    K = gauss_curvature_fd(grid, cd.g)
    prod = cd.lam[..., 0] * cd.lam[..., 1]
    detb = np.linalg.det(cd.b)
    detg = np.linalg.det(cd.g)
    return float(np.abs(K - (prod - 1.0)).max()), float(np.abs(detb / detg - prod).max())


def check_gauss(zdef, grids, k=2):
    """Refinement study of K = l1 l2 - 1 with K from the metric alone."""
    grids = _grids(grids)
    res = [gauss_residuals(sample_graph(zdef, g), g, k) for g in grids]
    rep = IdentityReport("gauss", [g.shape for g in grids], [r[0] for r in res], 1.0)
    rep.extra["det_consistency"] = max(r[1] for r in res)
    rep.finish()
    if rep.extra["det_consistency"] > 1e-10:
        rep.passed = False
    return rep


def contraction_two_ways(z, grid, k=2):
    """g^ij nabla_ij eta by differencing eta, and tau tr_g(b) + 2 eta from the identity."""
    cd = curvature_field(z, grid, k)
    gamma = christoffel_fd(grid, cd.g, cd.g_inv)
    fd = np.einsum("...ij,...ij->...", cd.g_inv, _scalar_hess_fd(grid, cd.eta, gamma))
    ident = cd.tau * np.einsum("...ij,...ij->...", cd.g_inv, cd.b) + 2.0 * cd.eta
    return fd, ident


# ---------------------------------------------------------------- monitors


@dataclass
class MonitorReport:
    passed: bool
    failures: list
    flags: list
    max_lambda1: list
    max_grad: list

    def to_dict(self):
        return asdict(self)


def monitor_bounds(state, C0, growth_flag=10.0):
    """Check R1 <= z <= R2 and |grad z| <= C0 on every accepted step.

    Growth of max lambda_1 beyond ``growth_flag`` times its t = 0 value is
    flagged without failing the report.
    """
    R1, R2 = state.z.R1, state.z.R2
    failures, flags = [], []
    base = state.monitors[0].max_lambda1 if state.monitors else None
    for step, m in enumerate(state.monitors):
        if m.min_z < R1:
            failures.append({"step": step, "t": m.t, "condition": "z >= R1",
                             "node": list(m.min_node), "value": m.min_z})
        if m.max_z > R2:
            failures.append({"step": step, "t": m.t, "condition": "z <= R2",
                             "node": list(m.max_node), "value": m.max_z})
        if m.max_grad > C0:
            failures.append({"step": step, "t": m.t, "condition": "|grad z| <= C0",
                             "value": m.max_grad})
        if not math.isfinite(m.max_lambda1):
            failures.append({"step": step, "t": m.t, "condition": "lambda_1 finite"})
        elif base is not None and m.max_lambda1 > growth_flag * base:
            flags.append({"step": step, "t": m.t, "max_lambda1": m.max_lambda1})
    return MonitorReport(not failures, failures, flags,
                         [m.max_lambda1 for m in state.monitors],
                         [m.max_grad for m in state.monitors])


# ---------------------------------------------------------------- symmetric functions


def sample_cone(rng, n, k, size, near_boundary=0.0):
    """``size`` random points of Gamma_k in R^n by rejection.

    A fraction ``near_boundary`` is pushed towards the cone boundary by
    bisection along the ray to a rejected point.
    """
    out = []
    while len(out) < size:
        lam = rng.normal(size=n) + rng.uniform(0.0, 1.5)
        if sf.in_gamma_k(lam, k).inside:
            if rng.uniform() < near_boundary:
                lo, hi = 0.0, 1.0
                d = rng.normal(size=n)
                while sf.in_gamma_k(lam + hi * d, k).inside and hi < 1e3:
                    hi *= 2.0
                for _ in range(40):
                    mid = 0.5 * (lo + hi)
                    if sf.in_gamma_k(lam + mid * d, k, 1e-6).inside:
                        lo = mid
                    else:
                        hi = mid
                lam = lam + 0.9 * lo * d
            out.append(lam)
    return np.array(out)


def _minor_sum(M, k):
    """Sum of the principal k x k minors of M (k-th elementary invariant)."""
    n = M.shape[0]
    if k == 0:
        return 1.0
    return float(sum(np.linalg.det(M[np.ix_(idx, idx)]) for idx in combinations(range(n), k)))


def andrews_oracle(lam, k, eta, step=2e-3):
    """Second derivative of s -> f(eig(diag(lam) + s eta)) at s = 0.

    Five-point central differences in matrix space with one Richardson
    extrapolation.  The step shrinks with the distance of ``lam`` to the cone
    boundary and is halved until every stencil point stays admissible.
    """
    lam = np.asarray(lam, dtype=float)
    D = np.diag(lam)
    eta = np.asarray(eta, dtype=float)
    margin = sf.in_gamma_k(lam, k).margin
    h = step * min(1.0, math.sqrt(max(margin, 0.0))) / max(np.abs(eta).max(), 1e-300)

    def F(s):
        return float(sf.f_value(np.linalg.eigvalsh(D + s * eta), k))

    def d5(h):
        return (-F(2 * h) + 16 * F(h) - 30 * F(0.0) + 16 * F(-h) - F(-2 * h)) / (12 * h * h)

    for _ in range(30):
        try:
            return (16.0 * d5(0.5 * h) - d5(h)) / 15.0
        except sf.ConeViolation:
            h *= 0.5
    raise ValueError("no admissible differencing step")


def andrews_exact(lam, k, eta):
    """Same second derivative without eigenvalues.

    f(eig M) = (E_k(M) / C(n, k))^(1/k) where E_k(M) is the sum of principal
    k-minors, a degree-k polynomial in s, so five-point stencils recover its
    first two derivatives exactly up to rounding.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    D = np.diag(lam)
    h = 1.0 / (1.0 + np.abs(eta).max())
    c = {m: _minor_sum(D + m * h * eta, k) for m in (-2, -1, 0, 1, 2)}
    c1 = (c[-2] - 8 * c[-1] + 8 * c[1] - c[2]) / (12 * h)
    c2 = (-c[-2] + 16 * c[-1] - 30 * c[0] + 16 * c[1] - c[2]) / (12 * h * h)
    p = 1.0 / k
    scale = comb(n, k) ** -p
    return scale * (p * (p - 1) * c[0] ** (p - 2) * c1 * c1 + p * c[0] ** (p - 1) * c2)


def _rand_sym(rng, n):
    a = rng.normal(size=(n, n))
    return 0.5 * (a + a.T)


def symfunc_suite(seed=0, n_samples=1000, n_andrews=200, pairs=((2, 1), (2, 2), (3, 2), (4, 3))):
    """Property checks of f, its derivatives and the Andrews contraction.

    Returns a dict ``name -> {"passed": bool, "worst": float, ...}``.
    """
    rng = np.random.default_rng(seed)
    worst = {"homogeneity": 0.0, "euler": 0.0, "permutation": 0.0,
             "min_grad": math.inf, "max_hess_eig": -math.inf}
    for n, k in pairs:
        lam = sample_cone(rng, n, k, n_samples, near_boundary=0.1)
        f = sf.f_value(lam, k)
        s = rng.uniform(0.1, 10.0, size=n_samples)
        worst["homogeneity"] = max(worst["homogeneity"], float(np.max(
            np.abs(sf.f_value(s[:, None] * lam, k) - s * f) / (1.0 + np.abs(s * f)))))
        grad = sf.f_grad(lam, k)
        worst["euler"] = max(worst["euler"], float(np.max(
            np.abs(np.sum(grad * lam, -1) - f) / (1.0 + np.abs(f)))))
        perm = np.stack([rng.permutation(n) for _ in range(n_samples)])
        fp = sf.f_value(np.take_along_axis(lam, perm, -1), k)
        worst["permutation"] = max(worst["permutation"], float(np.max(np.abs(fp - f) / (1.0 + np.abs(f)))))
        worst["min_grad"] = min(worst["min_grad"], float(grad.min()))
        eig = np.linalg.eigvalsh(sf.f_hess(lam, k))
        worst["max_hess_eig"] = max(worst["max_hess_eig"], float(eig.max()))

    andrews_err, exact_err, coalescing, cases = 0.0, 0.0, 0, 0
    per_pair = -(-n_andrews // len(pairs))
    for n, k in pairs:
        i = 0
        while i < per_pair:
            lam = sample_cone(rng, n, k, 1)[0]
            if i % 3 == 0:
                # exactly or nearly equal leading pair
                lam[1] = lam[0] + rng.uniform(0.0, 1e-9) * (i % 2)
                if not sf.in_gamma_k(lam, k).inside:
                    continue
                coalescing += 1
            i += 1
            cases += 1
            lam = lam / np.abs(lam).max()
            eta = _rand_sym(rng, n)
            eta = eta / np.abs(eta).max()
            got = float(sf.andrews_contract(lam, k, eta))
            # lam and eta are normalized to unit max-norm; 1e-2 is the
            # absolute floor for contractions that vanish (k = 1)
            floor = 1e-2
            ref = andrews_oracle(lam, k, eta)
            andrews_err = max(andrews_err, abs(got - ref) / max(abs(ref), floor))
            ref = andrews_exact(lam, k, eta)
            exact_err = max(exact_err, abs(got - ref) / max(abs(ref), floor))

    return {
        "homogeneity": {"passed": worst["homogeneity"] <= 1e-12, "worst": worst["homogeneity"]},
        "euler": {"passed": worst["euler"] <= 1e-12, "worst": worst["euler"]},
        "permutation": {"passed": worst["permutation"] <= 1e-12, "worst": worst["permutation"]},
        "monotonicity": {"passed": worst["min_grad"] > 0, "worst": worst["min_grad"]},
        "concavity": {"passed": worst["max_hess_eig"] <= 1e-8, "worst": worst["max_hess_eig"]},
        "andrews": {"passed": bool(andrews_err <= 1e-5 and coalescing >= 50), "worst": float(andrews_err),
                    "cases": cases, "coalescing_cases": coalescing},
        "andrews_exact": {"passed": bool(exact_err <= 1e-9), "worst": float(exact_err)},
    }
