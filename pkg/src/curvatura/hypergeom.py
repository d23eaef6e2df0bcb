"""Geometry of a radial graph {(u, z(u))} in hyperbolic space.

The ambient metric is ``d rho^2 + sinh(rho)^2 e`` over S^2 x (0, inf), with
``e`` the round metric.  Every kernel here is pointwise and vectorized over
grid nodes; tensors are ``(..., 2, 2)`` arrays in the (theta, phi) basis.
"""

from dataclasses import dataclass

import numpy as np

from .sphere_grid import grad_sphere, hess_sphere
from .symfunc import _cone_mask, sigma_all
from math import comb

__all__ = [
    "DegenerateMetricError",
    "DomainError",
    "RadialGraph",
    "CurvatureData",
    "metric_at",
    "second_fundamental_at",
    "principal_curvatures",
    "tau_eta",
    "covariant_hessian_z",
    "curvature_field",
]


class DomainError(ValueError):
    """Radial coordinate outside (0, inf)."""


class DegenerateMetricError(ArithmeticError):
    """Induced metric is not positive definite at some node."""

    def __init__(self, node, message="metric not positive definite"):
        super().__init__(f"{message} at node {node}")
        self.node = node


def _check_positive(z):
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise DomainError(f"radial coordinate must be > 0, min is {np.min(z)!r}")
    return z


def _outer(a, b):
    out = np.empty(np.shape(a) + (2, 2))
    out[..., 0, 0] = a * a
    out[..., 0, 1] = out[..., 1, 0] = a * b
    out[..., 1, 1] = b * b
    return out


@dataclass(frozen=True)
class RadialGraph:
    """Nodal values ``z`` of a radial graph with its annulus bounds R1 < R2."""

    z: np.ndarray
    R1: float
    R2: float

    def __post_init__(self):
        if not 0 < self.R1 < self.R2:
            raise ValueError(f"need 0 < R1 < R2, got {self.R1}, {self.R2}")
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if not np.all(np.isfinite(self.z)):
            raise ValueError("graph values must be finite")

    def within(self, strict=False):
        if strict:
            return bool(np.all((self.z > self.R1) & (self.z < self.R2)))
        return bool(np.all((self.z >= self.R1) & (self.z <= self.R2)))


def metric_at(z, grad, e):
    """Induced metric ``g = sinh^2 z e + dz (x) dz`` and its inverse.

    ``grad`` is ``(z_theta, z_phi)``; ``e`` the round metric at the same nodes.
    The inverse uses the closed form
    ``g^ij = (e^ij - z^i z^j / (phi + |dz|^2)) / phi``.
    """
    z = _check_positive(z)
    zt, zp = grad[0], grad[1]
    phi = np.sinh(z) ** 2
    g = phi[..., None, None] * e + _outer(zt, zp)
    e_inv = np.zeros_like(e)
    e_inv[..., 0, 0] = 1.0 / e[..., 0, 0]
    e_inv[..., 1, 1] = 1.0 / e[..., 1, 1]
    up_t = zt * e_inv[..., 0, 0]
    up_p = zp * e_inv[..., 1, 1]
    norm2 = zt * up_t + zp * up_p
    g_inv = (e_inv - _outer(up_t, up_p) / (phi + norm2)[..., None, None]) / phi[..., None, None]
    return g, g_inv


def second_fundamental_at(z, grad, hess_prime, e):
    """Second fundamental form of the graph.

    b_ij = phi / sqrt(phi^2 + phi |dz|^2) * (-hess'_ij + 2 coth z z_i z_j
    + sinh z cosh z e_ij), with phi = sinh^2 z.
    """
    z = _check_positive(z)
    zt, zp = grad[0], grad[1]
    s, c = np.sinh(z), np.cosh(z)
    phi = s * s
    norm2 = zt ** 2 / e[..., 0, 0] + zp ** 2 / e[..., 1, 1]
    pref = phi / np.sqrt(phi * phi + phi * norm2)
    bracket = (-hess_prime + (2.0 * c / s)[..., None, None] * _outer(zt, zp)
               + (s * c)[..., None, None] * e)
    b = pref[..., None, None] * bracket
    b[..., 1, 0] = b[..., 0, 1]
    return b


def principal_curvatures(g, b):
    """Eigenvalues of ``b`` relative to ``g``, sorted descending along the last axis.

    Solved by whitening with the Cholesky factor ``g = L L^T`` and a
    symmetric eigensolve of ``L^-1 b L^-T``.
    """
    g = np.asarray(g, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise DegenerateMetricError(_first_not_pd(g)) from None
    Linv = np.linalg.inv(L)
    m = Linv @ b @ np.swapaxes(Linv, -1, -2)
    m = 0.5 * (m + np.swapaxes(m, -1, -2))
    return np.linalg.eigvalsh(m)[..., ::-1]


def _first_not_pd(g):
    for idx in np.ndindex(g.shape[:-2]):
        try:
            np.linalg.cholesky(g[idx])
        except np.linalg.LinAlgError:
            return idx
    return None


def tau_eta(z, grad, e):
    """tau = sinh^2 z / sqrt(sinh^2 z + |dz|^2) and eta = -cosh z."""
    z = _check_positive(z)
    zt, zp = grad[0], grad[1]
    phi = np.sinh(z) ** 2
    norm2 = zt ** 2 / e[..., 0, 0] + zp ** 2 / e[..., 1, 1]
    return phi / np.sqrt(phi + norm2), -np.cosh(z)


def covariant_hessian_z(z, grad, hess_prime, e):
    """Hessian of z in the induced metric, from the round-metric Hessian.

    nabla_ij z = (phi hess'_ij - 2 s c z_i z_j + s c |dz|^2 e_ij) / (phi + |dz|^2).
    """
    z = _check_positive(z)
    zt, zp = grad[0], grad[1]
    s, c = np.sinh(z), np.cosh(z)
    phi = s * s
    norm2 = zt ** 2 / e[..., 0, 0] + zp ** 2 / e[..., 1, 1]
    sc = (s * c)[..., None, None]
    out = (phi[..., None, None] * hess_prime - 2.0 * sc * _outer(zt, zp)
           + sc * norm2[..., None, None] * e)
    return out / (phi + norm2)[..., None, None]


@dataclass(frozen=True)
class CurvatureData:
    """Per-node geometric data of a radial graph (arrays over the grid)."""

    g: np.ndarray
    g_inv: np.ndarray
    b: np.ndarray
    lam: np.ndarray
    tau: np.ndarray
    eta: np.ndarray
    f: np.ndarray
    admissible: np.ndarray
    grad: tuple
    k: int

    @property
    def n_violations(self):
        return int(np.count_nonzero(~self.admissible))

    @property
    def h_k(self):
        return sigma_all(self.lam, self.k)[..., self.k] / comb(self.lam.shape[-1], self.k)


def curvature_field(graph, grid, k, margin=0.0):
    """Assemble metric, second fundamental form, curvatures and f on the grid.

    Nodes whose curvatures leave Gamma_k are flagged in ``admissible`` and get
    ``f = nan``; nothing is raised for them.
    """
    z = graph.z if isinstance(graph, RadialGraph) else np.asarray(graph, dtype=float)
    zt, zp, norm2 = grad_sphere(z, grid)
    hess = hess_sphere(z, grid, grad=(zt, zp))
    e = grid.e
    g, g_inv = metric_at(z, (zt, zp), e)
    b = second_fundamental_at(z, (zt, zp), hess, e)
    lam = principal_curvatures(g, b)
    tau, eta = tau_eta(z, (zt, zp), e)
    ok = _cone_mask(lam, k, margin)
    sk = sigma_all(lam, k)[..., k]
    with np.errstate(invalid="ignore"):
        f = np.where(ok, (np.where(ok, sk, 1.0) / comb(lam.shape[-1], k)) ** (1.0 / k), np.nan)
    return CurvatureData(g, g_inv, b, lam, tau, eta, f, ok, (zt, zp, norm2), k)
