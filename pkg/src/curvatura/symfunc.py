"""Elementary symmetric functions and the curvature operator f = H_k^(1/k).

All functions broadcast over leading axes: ``lam`` has shape ``(..., n)``.
"""

from dataclasses import dataclass
from math import comb
from typing import NamedTuple

import numpy as np

__all__ = [
    "ConeViolation",
    "ConeCheck",
    "LambdaVec",
    "sigma_k",
    "sigma_all",
    "h_k",
    "in_gamma_k",
    "f_value",
    "f_grad",
    "f_hess",
    "andrews_contract",
    "COALESCE_RTOL",
]

# relative gap below which (f_i - f_j)/(l_i - l_j) is replaced by its limit
COALESCE_RTOL = 1e-7


class ConeViolation(ValueError):
    """Raised when lambda is outside the Garding cone Gamma_k.

    ``j`` is the first order with sigma_j <= 0 and ``value`` that sigma_j.
    """

    def __init__(self, j, value):
        super().__init__(f"lambda not in Gamma_k: sigma_{j} = {value!r} <= 0")
        self.j = j
        self.value = value


class ConeCheck(NamedTuple):
    inside: bool
    margin: float
    first_failing: int | None


@dataclass(frozen=True)
class LambdaVec:
    """Principal curvatures together with the cone order ``k``."""

    values: np.ndarray
    k: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise ValueError("LambdaVec needs a non-empty 1-d array")
        if not 1 <= self.k <= vals.size:
            raise ValueError(f"k={self.k} outside [1, {vals.size}]")
        object.__setattr__(self, "values", vals)

    @property
    def n(self):
        return self.values.size

    def sigma(self, j):
        return float(sigma_k(self.values, j))

    def admissible(self):
        return in_gamma_k(self.values, self.k).inside

    def f(self):
        return float(f_value(self.values, self.k))

    def grad(self):
        return f_grad(self.values, self.k)

    def hess(self):
        return f_hess(self.values, self.k)


def sigma_all(lam, kmax=None):
    """sigma_0 ... sigma_kmax of ``lam`` stacked on the last axis.

    Uses the product expansion ``prod_i (1 + lam_i t)``, which needs only
    additions and multiplications of the data and is exact for small n.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    kmax = n if kmax is None else kmax
    out = np.zeros(lam.shape[:-1] + (kmax + 1,))
    out[..., 0] = 1.0
    for i in range(n):
        li = lam[..., i : i + 1]
        out[..., 1:] = out[..., 1:] + li * out[..., :-1]
    return out


def sigma_k(lam, j):
    """j-th elementary symmetric polynomial (sigma_0 = 1)."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= j <= n:
        raise ValueError(f"j={j} outside [0, {n}]")
    return sigma_all(lam, j)[..., j]


def h_k(lam, k):
    """Normalized k-th mean curvature sigma_k / C(n, k)."""
    lam = np.asarray(lam, dtype=float)
    return sigma_k(lam, k) / comb(lam.shape[-1], k)


def in_gamma_k(lam, k, margin=0.0):
    """Test sigma_j(lam) > margin * max|lam|^j for j = 1..k (single vector).

    The returned ``margin`` is the smallest scaled value sigma_j / max|lam|^j.
    """
    lam = np.asarray(lam, dtype=float)
    scale = np.abs(lam).max()
    # sigma_j(lam / scale) = sigma_j(lam) / scale^j without under/overflow
    scaled = sigma_all(lam / (scale if scale > 0 else 1.0), k)[1:]
    bad = np.nonzero(scaled <= margin)[0]
    first = int(bad[0]) + 1 if bad.size else None
    return ConeCheck(first is None, float(scaled.min()), first)


def _cone_mask(lam, k, margin=0.0):
    scale = np.abs(lam).max(axis=-1, keepdims=True)
    scaled = sigma_all(lam / np.where(scale > 0, scale, 1.0), k)[..., 1:]
    return np.all(scaled > margin, axis=-1)


def _require_cone(lam, k):
    sig = sigma_all(lam, k)[..., 1:]
    bad = sig <= 0
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        j = int(idx[-1]) + 1
        raise ConeViolation(j, float(sig[tuple(idx)]))
    return sig[..., -1]


def _sigma_minus(lam, order, drop):
    """sigma_order of lam with the entries at positions ``drop`` removed."""
    keep = [i for i in range(lam.shape[-1]) if i not in drop]
    if order < 0 or order > len(keep):
        return np.zeros(lam.shape[:-1])
    return sigma_all(lam[..., keep], order)[..., order]


def f_value(lam, k):
    """f(lam) = (sigma_k / C(n, k))^(1/k); raises :class:`ConeViolation` off Gamma_k."""
    lam = np.asarray(lam, dtype=float)
    sk = _require_cone(lam, k)
    return (sk / comb(lam.shape[-1], k)) ** (1.0 / k)


def f_grad(lam, k):
    """Gradient f_i = f / (k sigma_k) * sigma_{k-1}(lam | i)."""
    lam = np.asarray(lam, dtype=float)
    sk = _require_cone(lam, k)
    n = lam.shape[-1]
    f = (sk / comb(n, k)) ** (1.0 / k)
    s1 = np.stack([_sigma_minus(lam, k - 1, (i,)) for i in range(n)], axis=-1)
    return (f / (k * sk))[..., None] * s1


def f_hess(lam, k):
    """Hessian of f in lambda, shape ``(..., n, n)``.

    f_ij = f/(k sigma_k) * [sigma_{k-2}(lam|ij) (i != j) + (1/k - 1) s_i s_j / sigma_k]
    with s_i = sigma_{k-1}(lam|i).
    """
    lam = np.asarray(lam, dtype=float)
    sk = _require_cone(lam, k)
    n = lam.shape[-1]
    f = (sk / comb(n, k)) ** (1.0 / k)
    s1 = np.stack([_sigma_minus(lam, k - 1, (i,)) for i in range(n)], axis=-1)
    s2 = np.zeros(lam.shape[:-1] + (n, n))
    for i in range(n):
        for j in range(i + 1, n):
            s2[..., i, j] = s2[..., j, i] = _sigma_minus(lam, k - 2, (i, j))
    outer = s1[..., :, None] * s1[..., None, :]
    pref = (f / (k * sk))[..., None, None]
    return pref * (s2 + (1.0 / k - 1.0) * outer / sk[..., None, None])


def andrews_contract(lam, k, eta):
    """Second derivative of B -> f(eig B) at diag(lam), contracted twice with eta.

    sum_ij f_ij eta_ii eta_jj + sum_{i != j} (f_i - f_j)/(lam_i - lam_j) eta_ij^2,
    with the quotient replaced by f_ii - f_ij when |lam_i - lam_j| is below
    ``COALESCE_RTOL * (1 + max|lam|)``.
    """
    lam = np.asarray(lam, dtype=float)
    eta = np.asarray(eta, dtype=float)
    n = lam.shape[-1]
    if eta.shape[-2:] != (n, n):
        raise ValueError(f"eta must be {n}x{n}, got {eta.shape}")
    if not np.allclose(eta, np.swapaxes(eta, -1, -2), rtol=0.0, atol=1e-14 * (1 + np.abs(eta).max())):
        raise ValueError("eta must be symmetric")
    grad = f_grad(lam, k)
    hess = f_hess(lam, k)
    diag = np.diagonal(eta, axis1=-2, axis2=-1)
    total = np.einsum("...i,...ij,...j->...", diag, hess, diag)
    thresh = COALESCE_RTOL * (1.0 + np.abs(lam).max(axis=-1))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            gap = lam[..., i] - lam[..., j]
            close = np.abs(gap) <= thresh
            quot = np.where(close, hess[..., i, i] - hess[..., i, j],
                            (grad[..., i] - grad[..., j]) / np.where(close, 1.0, gap))
            total = total + quot * eta[..., i, j] ** 2
    return total
