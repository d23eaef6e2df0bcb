"""Newton and homotopy-continuation solver for f(lambda(B(z))) = psibar^t(u, z).

The discrete unknown is the nodal vector of ``z`` on a :class:`SphericalGrid`.
The Jacobian is a dense central-difference matrix; columns whose stencils
do not overlap are perturbed together (the entries are bit-identical to
column-by-column differencing because each residual row only reads its own
stencil).
"""

import logging
import math
import weakref
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .hypergeom import DomainError, RadialGraph, curvature_field
from .psi_lang import check_hypotheses, homotopy_psibar

__all__ = [
    "SolverConfig",
    "SolverError",
    "GuardBandError",
    "JacobianError",
    "LineSearchFailure",
    "NonConvergence",
    "ContinuationFailure",
    "HypothesisRefusal",
    "StepRecord",
    "Monitor",
    "NewtonResult",
    "ContinuationState",
    "residual",
    "jacobian_fd",
    "newton_solve",
    "continuation_run",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-10
    max_newton: int = 30
    fd_step: float = 1e-8
    damping_min: float = 1.0 / 64.0
    dt_init: float = 0.1
    dt_min: float = 1e-4
    max_continuation_steps: int = 500
    # scaled sigma_j threshold standing in for the open cone neighbourhood V
    cone_margin: float = 1e-8
    guard: float = 0.5

    def __post_init__(self):
        for name in ("newton_tol", "max_newton", "fd_step", "damping_min", "dt_init",
                     "dt_min", "max_continuation_steps", "guard"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.cone_margin < 0:
            raise ValueError("cone_margin must be non-negative")
        if not self.dt_min <= self.dt_init <= 1.0:
            raise ValueError("need dt_min <= dt_init <= 1")

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__}
        unknown = set(d or {}) - set(known)
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return cls(**known)

    def to_dict(self):
        return asdict(self)


class SolverError(RuntimeError):
    """Base class; ``best`` holds the best iterate available, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class GuardBandError(SolverError):
    pass


class JacobianError(SolverError):
    def __init__(self, message, node):
        super().__init__(f"{message} (node {node})")
        self.node = node


class LineSearchFailure(SolverError):
    pass


class NonConvergence(SolverError):
    pass


class ContinuationFailure(SolverError):
    def __init__(self, message, state):
        super().__init__(message, best=state.z if state is not None else None)
        self.state = state


class HypothesisRefusal(SolverError):
    def __init__(self, report):
        kinds = sorted({v["condition"] for v in report.violations})
        super().__init__(f"hypothesis check failed: {', '.join(kinds)}")
        self.report = report


# ---------------------------------------------------------------- residual


def _in_guard(z, spec, guard):
    return bool(np.all((z >= spec.R1 - guard) & (z <= spec.R2 + guard) & (z > 0)))


def residual(z, t, spec, grid, margin=0.0, guard=0.5):
    """Nodal residual ``f(lambda) - psibar^t(u, z)``.

    Nodes whose curvatures are outside Gamma_k (by ``margin``) get ``+inf``.
    Returns the residual array; ``np.isinf(G).sum()`` counts violations.
    """
    z = z.z if isinstance(z, RadialGraph) else np.asarray(z, dtype=float)
    if not _in_guard(z, spec, guard):
        raise GuardBandError(f"z outside guard band [{spec.R1 - guard}, {spec.R2 + guard}]")
    cd = curvature_field(z, grid, spec.k, margin)
    target = homotopy_psibar(spec, t, grid.dircos, z)
    return np.where(cd.admissible, cd.f - target, np.inf)


# ---------------------------------------------------------------- Jacobian


_COLORINGS = weakref.WeakKeyDictionary()


def _coloring(grid):
    """Greedy distance-2 colouring of the residual stencil graph (cached per grid)."""
    if grid in _COLORINGS:
        return _COLORINGS[grid]
    pat = grid.stencil_pattern
    conflict = (pat.T @ pat).tocsr()
    colors = np.full(grid.size, -1, dtype=int)
    for j in range(grid.size):
        nb = conflict.indices[conflict.indptr[j]:conflict.indptr[j + 1]]
        used = set(colors[nb][colors[nb] >= 0].tolist())
        c = 0
        while c in used:
            c += 1
        colors[j] = c
    coo = pat.tocoo()
    groups = []
    for c in range(colors.max() + 1):
        sel = colors[coo.col] == c
        groups.append((np.nonzero(colors == c)[0], coo.row[sel], coo.col[sel]))
    _COLORINGS[grid] = groups
    return groups


def _column_block(z, t, spec, grid, cfg, cols, rows, rcols, h):
    zf = z.reshape(-1)
    for attempt in range(2):
        step = h / 4 ** attempt
        zp, zm = zf.copy(), zf.copy()
        zp[cols] += step
        zm[cols] -= step
        gp = residual(zp.reshape(grid.shape), t, spec, grid, cfg.cone_margin, cfg.guard).reshape(-1)
        gm = residual(zm.reshape(grid.shape), t, spec, grid, cfg.cone_margin, cfg.guard).reshape(-1)
        if np.all(np.isfinite(gp[rows])) and np.all(np.isfinite(gm[rows])):
            return (gp[rows] - gm[rows]) / (2.0 * step)
    bad = rows[~(np.isfinite(gp[rows]) & np.isfinite(gm[rows]))]
    raise JacobianError("perturbed evaluation left Gamma_k", int(bad[0]))


def jacobian_fd(z, t, spec, grid, cfg=None, grouped=True):
    """Dense central-difference Jacobian of :func:`residual`.

    Column ``j`` is ``(G(z + h e_j) - G(z - h e_j)) / (2h)`` with
    ``h = fd_step * (1 + max|z|)``; a non-admissible perturbation is retried
    once with ``h / 4``.
    """
    cfg = cfg or SolverConfig()
    z = z.z if isinstance(z, RadialGraph) else np.asarray(z, dtype=float)
    h = cfg.fd_step * (1.0 + np.abs(z).max())
    n = grid.size
    J = np.zeros((n, n))
    if grouped:
        for cols, rows, rcols in _coloring(grid):
            J[rows, rcols] = _column_block(z, t, spec, grid, cfg, cols, rows, rcols, h)
    else:
        pat = grid.stencil_pattern.tocsc()
        for j in range(n):
            rows = pat.indices[pat.indptr[j]:pat.indptr[j + 1]]
            J[rows, j] = _column_block(z, t, spec, grid, cfg, np.array([j]), rows,
                                       np.full(rows.size, j), h)
    return J


# ---------------------------------------------------------------- Newton


@dataclass
class NewtonResult:
    z: np.ndarray
    iterations: int
    residual_norm: float
    history: list


def newton_solve(z0, t, spec, grid, cfg=None):
    """Damped Newton iteration for ``residual(z, t) = 0``.

    Each step solves ``J dz = -G`` by dense LU and backtracks over
    ``s = 1, 1/2, ..., damping_min`` until the trial point is admissible,
    inside the guard band and strictly reduces ``max|G|``.
    """
    cfg = cfg or SolverConfig()
    z = np.array(z0.z if isinstance(z0, RadialGraph) else z0, dtype=float)
    G = residual(z, t, spec, grid, cfg.cone_margin, cfg.guard)
    if not np.all(np.isfinite(G)):
        raise SolverError(f"initial iterate not admissible at {int(np.isinf(G).sum())} nodes")
    norm = float(np.abs(G).max())
    history = [norm]
    its = 0
    while norm > cfg.newton_tol:
        if its >= cfg.max_newton:
            raise NonConvergence(f"no convergence in {its} Newton steps (|G| = {norm:.3e})", best=z)
        J = jacobian_fd(z, t, spec, grid, cfg)
        dz = la.lu_solve(la.lu_factor(J, check_finite=False), -G.reshape(-1),
                         check_finite=False).reshape(grid.shape)
        s = 1.0
        while True:
            trial = z + s * dz
            if _in_guard(trial, spec, cfg.guard):
                Gt = residual(trial, t, spec, grid, cfg.cone_margin, cfg.guard)
                nt = float(np.abs(Gt).max())
                if np.all(np.isfinite(Gt)) and nt < norm:
                    break
            s *= 0.5
            if s < cfg.damping_min:
                raise LineSearchFailure(f"line search failed at |G| = {norm:.3e}", best=z)
        z, G, norm = trial, Gt, nt
        its += 1
        history.append(norm)
        log.debug("t=%.6g newton %d step %.4g |G|=%.3e", t, its, s, norm)
    return NewtonResult(z, its, norm, history)


# ---------------------------------------------------------------- continuation


@dataclass
class StepRecord:
    t: float
    newton_iterations: int
    residual_norm: float


@dataclass
class Monitor:
    t: float
    min_z: float
    max_z: float
    max_grad: float
    max_lambda1: float
    min_node: tuple = ()
    max_node: tuple = ()


@dataclass
class ContinuationState:
    t: float
    z: RadialGraph
    history: list = field(default_factory=list)
    monitors: list = field(default_factory=list)
    hypotheses: object = None
    residual_norm: float = math.nan
    restarted: bool = False

    @property
    def steps(self):
        """Number of accepted steps with t > 0."""
        return sum(1 for h in self.history if h.t > 0)


def _monitor(t, z, spec, grid):
    cd = curvature_field(z, grid, spec.k)
    lo = tuple(int(i) for i in np.unravel_index(np.argmin(z), z.shape))
    hi = tuple(int(i) for i in np.unravel_index(np.argmax(z), z.shape))
    return Monitor(float(t), float(z.min()), float(z.max()),
                   float(np.sqrt(cd.grad[2].max())), float(cd.lam[..., 0].max()), lo, hi)


def _accept_ok(z, spec, grid, cfg):
    if not np.all((z >= spec.R1) & (z <= spec.R2)):
        return False
    cd = curvature_field(z, grid, spec.k, cfg.cone_margin)
    return bool(cd.admissible.all())


def continuation_run(spec, grid, cfg=None, force=False, n_rho=32, callback=None):
    """Follow psibar^t from t = 0 (solution z = Rbar) to t = 1.

    The step in t doubles after a solve taking at most 4 Newton iterations
    and halves on failure; it never drops below ``dt_min``.
    """
    cfg = cfg or SolverConfig()
    report = check_hypotheses(spec, grid, n_rho)
    if not report.passed and not force:
        raise HypothesisRefusal(report)

    z = np.full(grid.shape, float(spec.Rbar))
    res = newton_solve(z, 0.0, spec, grid, cfg)
    state = ContinuationState(0.0, RadialGraph(res.z, spec.R1, spec.R2), hypotheses=report,
                              residual_norm=res.residual_norm)
    state.history.append(StepRecord(0.0, res.iterations, res.residual_norm))
    state.monitors.append(_monitor(0.0, res.z, spec, grid))

    t, dt = 0.0, cfg.dt_init
    attempts = 0
    while t < 1.0:
        attempts += 1
        if attempts > cfg.max_continuation_steps:
            raise ContinuationFailure(f"step budget exhausted at t = {t}", state)
        t_new = min(1.0, t + dt)
        start = state.z.z
        try:
            res = newton_solve(start, t_new, spec, grid, cfg)
        except (SolverError, DomainError, ArithmeticError) as exc:
            res = None
            log.info("step to t=%.6g failed: %s", t_new, exc)
            if state.steps == 0 and not state.restarted:
                state.restarted = True
                kick = float(spec.Rbar) - 0.01 * grid.dircos[2]
                try:
                    res = newton_solve(kick, t_new, spec, grid, cfg)
                except (SolverError, DomainError, ArithmeticError) as exc2:
                    log.info("restart failed: %s", exc2)
        if res is not None and not _accept_ok(res.z, spec, grid, cfg):
            log.info("solution at t=%.6g left the annulus or the cone; rejected", t_new)
            res = None
        if res is None:
            dt *= 0.5
            if dt < cfg.dt_min:
                raise ContinuationFailure(f"dt underflow at t = {t}", state)
            continue
        t = t_new
        state.t = t
        state.z = RadialGraph(res.z, spec.R1, spec.R2)
        state.residual_norm = res.residual_norm
        state.history.append(StepRecord(t, res.iterations, res.residual_norm))
        state.monitors.append(_monitor(t, res.z, spec, grid))
        log.info("accepted t=%.6g (%d newton, |G|=%.3e)", t, res.iterations, res.residual_norm)
        if callback is not None:
            callback(state)
        if res.iterations <= 4:
            dt *= 2.0
    return state
