"""Latitude-longitude grid on the unit sphere S^2 and covariant derivatives.

Nodes sit at colatitudes ``theta_j = (j + 1/2) * pi / n_theta`` and azimuths
``phi_m = 2 * pi * m / n_phi``, so no node lies on a pole.  Stencils that run
past a pole read the antipodal column: the point ``(-theta, phi)`` of the
extended chart is the point ``(theta, phi + pi)`` of the sphere.  Coordinate
components of tensors pick up a factor ``-1`` per theta index under that
identification (the ``parity`` argument below).

Fields are plain arrays of shape ``(n_theta, n_phi)`` (scalars) or
``(n_theta, n_phi, 2, 2)`` (symmetric 2-tensors, index 0 = theta, 1 = phi).
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GridError",
    "SphericalGrid",
    "build_grid",
    "grad_sphere",
    "hess_sphere",
]

_D1 = {2: (np.array([-1, 1]), np.array([-0.5, 0.5])),
       4: (np.array([-2, -1, 1, 2]), np.array([1, -8, 8, -1]) / 12.0)}
_D2 = {2: (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0])),
       4: (np.array([-2, -1, 0, 1, 2]), np.array([-1, 16, -30, 16, -1]) / 12.0)}


class GridError(ValueError):
    """Invalid grid configuration."""


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Structured pole-free grid on S^2.

    ``pole_order`` is the accuracy order of theta-stencils on the two rows
    nearest each pole; interior stencils are always fourth order.
    """

    n_theta: int
    n_phi: int
    pole_order: int = 4
    theta: np.ndarray = field(init=False, repr=False)
    phi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_theta < 8 or self.n_theta % 2:
            raise GridError(f"n_theta must be even and >= 8, got {self.n_theta}")
        if self.n_phi < 16 or self.n_phi % 2:
            raise GridError(f"n_phi must be even and >= 16, got {self.n_phi}")
        if self.pole_order not in (2, 4):
            raise GridError(f"pole_order must be 2 or 4, got {self.pole_order}")
        object.__setattr__(self, "theta", (np.arange(self.n_theta) + 0.5) * np.pi / self.n_theta)
        object.__setattr__(self, "phi", 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi)

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    @property
    def size(self):
        return self.n_theta * self.n_phi

    @property
    def h_theta(self):
        return np.pi / self.n_theta

    @property
    def h_phi(self):
        return 2.0 * np.pi / self.n_phi

    @cached_property
    def mesh(self):
        """(THETA, PHI) node coordinates, each of shape ``grid.shape``."""
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    @cached_property
    def dircos(self):
        """Ambient direction cosines (x, y, z) of every node."""
        th, ph = self.mesh
        return np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)

    @cached_property
    def sin2(self):
        return np.sin(self.mesh[0]) ** 2

    @cached_property
    def e(self):
        """Round metric ``diag(1, sin^2 theta)`` per node."""
        out = np.zeros(self.shape + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = self.sin2
        return out

    @cached_property
    def e_inv(self):
        out = np.zeros(self.shape + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0 / self.sin2
        return out

    @cached_property
    def christoffel(self):
        """Christoffel symbols ``Gamma[k, i, j]`` of the round metric, per node."""
        th = self.mesh[0]
        gam = np.zeros(self.shape + (2, 2, 2))
        gam[..., 0, 1, 1] = -np.sin(th) * np.cos(th)
        gam[..., 1, 0, 1] = gam[..., 1, 1, 0] = np.cos(th) / np.sin(th)
        return gam

    def _index(self, j, m):
        return j * self.n_phi + m

    def _theta_operator(self, deriv, parity):
        nt, nph = self.shape
        rows, cols, vals = [], [], []
        for j in range(nt):
            near_pole = j < 2 or j >= nt - 2
            order = self.pole_order if near_pole else 4
            offs, coef = (_D1 if deriv == 1 else _D2)[order]
            for o, c in zip(offs, coef):
                jj, shift, sign = j + o, 0, 1.0
                if jj < 0:
                    jj, shift, sign = -jj - 1, nph // 2, parity
                elif jj >= nt:
                    jj, shift, sign = 2 * nt - jj - 1, nph // 2, parity
                m = np.arange(nph)
                rows.append(self._index(j, m))
                cols.append(self._index(jj, (m + shift) % nph))
                vals.append(np.full(nph, sign * c / self.h_theta ** deriv))
        mat = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size))
        mat.sum_duplicates()
        return mat

    def _phi_operator(self, deriv):
        nt, nph = self.shape
        offs, coef = (_D1 if deriv == 1 else _D2)[4]
        rows, cols, vals = [], [], []
        jm = np.arange(self.size)
        j, m = np.divmod(jm, nph)
        for o, c in zip(offs, coef):
            rows.append(jm)
            cols.append(self._index(j, (m + o) % nph))
            vals.append(np.full(self.size, c / self.h_phi ** deriv))
        mat = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size))
        mat.sum_duplicates()
        return mat

    @cached_property
    def _ops(self):
        ops = {"p": self._phi_operator(1), "pp": self._phi_operator(2)}
        for parity in (1, -1):
            ops["t", parity] = self._theta_operator(1, parity)
            ops["tt", parity] = self._theta_operator(2, parity)
            ops["tp", parity] = (ops["t", parity] @ ops["p"]).tocsr()
        return ops

    def operator(self, name, parity=1):
        """Sparse difference matrix acting on flattened fields.

        ``name`` is one of ``"t"``, ``"p"``, ``"tt"``, ``"pp"``, ``"tp"``.
        """
        if name in ("p", "pp"):
            return self._ops[name]
        return self._ops[name, parity]

    def diff(self, values, name, parity=1):
        """Apply a difference operator to a field of shape ``grid.shape``."""
        return (self.operator(name, parity) @ values.reshape(-1)).reshape(self.shape)

    @cached_property
    def stencil_pattern(self):
        """Boolean sparsity of every scalar difference operator plus identity."""
        pat = sp.identity(self.size, format="csr")
        for name in ("t", "p", "tt", "pp", "tp"):
            pat = pat + abs(self.operator(name))
        pat = pat.tocsr()
        pat.data[:] = 1.0
        return pat


def build_grid(n_theta, n_phi, pole_order=4):
    """Construct a :class:`SphericalGrid`; raises :class:`GridError` on bad sizes."""
    return SphericalGrid(int(n_theta), int(n_phi), pole_order)


def grad_sphere(z, grid):
    """Partial derivatives and squared round-metric norm of a scalar field.

    Returns
    -------
    z_theta, z_phi, norm2 : ndarray
        ``norm2 = e^{ij} z_i z_j = z_theta**2 + z_phi**2 / sin(theta)**2``.
    """
    z = np.asarray(z, dtype=float)
    zt = grid.diff(z, "t")
    zp = grid.diff(z, "p")
    return zt, zp, zt ** 2 + zp ** 2 / grid.sin2


def hess_sphere(z, grid, grad=None):
    """Covariant Hessian of ``z`` for the round metric, shape ``(..., 2, 2)``."""
    z = np.asarray(z, dtype=float)
    zt, zp = (grid.diff(z, "t"), grid.diff(z, "p")) if grad is None else grad[:2]
    gam = grid.christoffel
    out = np.empty(grid.shape + (2, 2))
    out[..., 0, 0] = grid.diff(z, "tt")
    out[..., 1, 1] = grid.diff(z, "pp") - gam[..., 0, 1, 1] * zt
    out[..., 0, 1] = out[..., 1, 0] = grid.diff(z, "tp") - gam[..., 1, 0, 1] * zp
    return out
