"""Constitutive law and assembly of the incremental energy and its gradient.

The time-discrete functional combines stretch energy, rotational curvature
energy, a unit-norm penalty on the quaternion field, external loads and the
regularized single-slip dissipation.  Assembly over the grid is delegated
to the selected kernel backend; this module owns the physics-facing API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import backends
from .grid import Grid3
from .kinematics import sym, skw

__all__ = ["MaterialParams", "PlasticHistory", "fp", "fp_inverse",
           "stretch_energy", "reg_abs", "reg_abs_deriv", "hardening_update",
           "curvature_energy_at_node", "total_energy", "total_gradient",
           "energy_and_gradient", "constraint_violation",
           "stretch_energy_integral",
           "EnergyEvaluationError"]

CURVATURE_VARIANTS = {"full": backends.VARIANT_FULL,
                      "simplified": backends.VARIANT_SIMPLIFIED,
                      "euler": backends.VARIANT_EULER}


class EnergyEvaluationError(ValueError):
    """Raised when field values handed to the assembler are not finite."""


@dataclass(frozen=True)
class MaterialParams:
    """Constitutive constants and loading of the incremental problem."""

    mu: float = 1.0e4
    lam: float = 1.0e3
    mu_c: float = 2.0e4
    mu2: float = 100.0          # curvature modulus mu*L_c^2/2
    rho: float = 0.0            # dislocation energy constant
    sigma_y: float = 0.0        # yield stress
    penalty: float = 20.0       # unit-norm penalty weight
    eps_reg: float = 1.0e-4     # modulus regularization width
    mvec: tuple = (1.0, 0.0, 0.0)
    nvec: tuple = (0.0, 1.0, 0.0)
    fext: tuple = (0.0, 0.0, 0.0)
    mext: tuple = ((0.0,) * 3,) * 3
    curvature_variant: str = "full"

    def __post_init__(self):
        if self.curvature_variant not in CURVATURE_VARIANTS:
            raise ValueError(
                f"unknown curvature variant {self.curvature_variant!r}")
        for name in ("mu", "lam", "mu_c", "mu2", "penalty", "eps_reg"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("rho", "sigma_y"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        m = np.asarray(self.mvec, dtype=float)
        n = np.asarray(self.nvec, dtype=float)
        if (abs(np.linalg.norm(m) - 1.0) > 1e-12
                or abs(np.linalg.norm(n) - 1.0) > 1e-12
                or abs(float(m @ n)) > 1e-12):
            raise ValueError("slip system needs |m| = |n| = 1 and m.n = 0")

    @property
    def variant_code(self):
        return CURVATURE_VARIANTS[self.curvature_variant]

    def arrays(self):
        return (np.asarray(self.mvec, float), np.asarray(self.nvec, float),
                np.asarray(self.fext, float), np.asarray(self.mext, float))


@dataclass
class PlasticHistory:
    """Per-node plastic slip and dislocation density of the previous step."""

    gamma0: np.ndarray
    kappa0: np.ndarray

    def __post_init__(self):
        if np.any(self.kappa0 > 0.0):
            raise ValueError("kappa0 must be <= 0 (dislocation-free start)")

    @classmethod
    def zeros(cls, num_nodes):
        return cls(np.zeros(num_nodes), np.zeros(num_nodes))


def fp(gamma, mvec, nvec):
    """Plastic deformation tensor I + gamma m (x) n."""
    return np.eye(3) + gamma * np.outer(mvec, nvec)


def fp_inverse(gamma, mvec, nvec):
    """Exact inverse I - gamma m (x) n ((m (x) n)^2 = 0 by orthogonality)."""
    return np.eye(3) - gamma * np.outer(mvec, nvec)


def stretch_energy(ue, p):
    """mu ||sym Ue - I||^2 + mu_c ||skw(Ue - I)||^2 + lam/2 |tr(Ue - I)|^2."""
    d = np.asarray(ue, dtype=float) - np.eye(3)
    s, k = sym(d), skw(d)
    return (p.mu * float(np.sum(s * s)) + p.mu_c * float(np.sum(k * k))
            + 0.5 * p.lam * float(np.trace(d)) ** 2)


def reg_abs(x, eps):
    """Regularized modulus: x^2/eps inside [-eps, eps], |x| outside."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= eps, x * x / eps, np.abs(x))


def reg_abs_deriv(x, eps):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= eps, 2.0 * x / eps, np.sign(x))


def hardening_update(gamma, gamma0, kappa0):
    """New dislocation density kappa = kappa0 - |gamma - gamma0| (exact modulus)."""
    return kappa0 - np.abs(np.asarray(gamma) - gamma0)


@lru_cache(maxsize=8)
def _grid_tables(grid: Grid3):
    ip, im, cc = grid.diff_stencils()
    wgt = grid.quadrature_weights()
    return ip, im, cc, wgt


def curvature_energy_at_node(rot_field, node, grid, p):
    """Curvature energy density of the selected variant at one node."""
    ip, im, cc, _ = _grid_tables(grid)
    rot_field = np.asarray(rot_field, dtype=float)
    if p.curvature_variant == "full":
        from .kinematics import rotation_normalized
        r = rotation_normalized(rot_field)
        total = 0.0
        for l in range(3):
            d_r = cc[l, node] * (r[ip[l, node]] - r[im[l, node]])
            total += p.mu2 * float(np.sum(d_r * d_r))
        return total
    total = 0.0
    for l in range(3):
        d_q = cc[l, node] * (rot_field[ip[l, node]] - rot_field[im[l, node]])
        total += 2.0 * p.mu2 * float(d_q @ d_q)
    return total


def _assemble(state, hist, grid, p, backend=None):
    kern = backends.get_backend() if backend is None else backend
    ip, im, cc, wgt = _grid_tables(grid)
    for arr in (state.phi, state.rot, state.gamma):
        if not np.all(np.isfinite(arr)):
            raise EnergyEvaluationError("non-finite field values")
    mvec, nvec, fext, mext = p.arrays()
    expected_rot = 3 if p.curvature_variant == "euler" else 4
    if state.rot.shape[1] != expected_rot:
        raise EnergyEvaluationError(
            f"rotation field has {state.rot.shape[1]} components, "
            f"variant {p.curvature_variant!r} needs {expected_rot}")
    return kern.energy_and_gradient(
        np.ascontiguousarray(state.phi, float),
        np.ascontiguousarray(state.rot, float),
        np.ascontiguousarray(state.gamma, float),
        np.ascontiguousarray(hist.gamma0, float),
        np.ascontiguousarray(hist.kappa0, float),
        ip, im, cc, wgt, p.variant_code,
        p.mu, p.mu_c, p.lam, p.mu2, p.rho, p.sigma_y, p.penalty, p.eps_reg,
        mvec, nvec, fext, mext)


def energy_and_gradient(state, hist, grid, p, backend=None):
    """Total energy and the full-grid gradient arrays (dphi, drot, dgamma)."""
    return _assemble(state, hist, grid, p, backend)


def total_energy(state, hist, grid, p, backend=None):
    """Quadrature value of the incremental energy functional."""
    return _assemble(state, hist, grid, p, backend)[0]


def total_gradient(state, hist, grid, p, layout, backend=None):
    """Gradient with respect to the free DOFs, packed per the layout."""
    _, dphi, drot, dgamma = _assemble(state, hist, grid, p, backend)
    full = np.concatenate([dphi, drot, dgamma[:, None]], axis=1)
    return full[layout.free_slots].copy()


def stretch_energy_integral(state, hist, grid, p):
    """Quadrature value of the stretch-energy term alone."""
    from .kinematics import rotation_euler, rotation_normalized

    ip, im, cc, wgt = _grid_tables(grid)
    if p.curvature_variant == "euler":
        r = rotation_euler(state.rot)
    else:
        r = rotation_normalized(state.rot)
    grad_phi = np.stack(
        [cc[l][:, None] * (state.phi[ip[l]] - state.phi[im[l]])
         for l in range(3)], axis=2)
    mvec, nvec, _, _ = p.arrays()
    mn = np.outer(mvec, nvec)
    fpi = np.eye(3) - state.gamma[:, None, None] * mn
    ue = np.swapaxes(r, 1, 2) @ grad_phi @ fpi
    s = 0.5 * (ue + np.swapaxes(ue, 1, 2)) - np.eye(3)
    k = 0.5 * (ue - np.swapaxes(ue, 1, 2))
    tau = np.trace(s, axis1=1, axis2=2)
    w_st = (p.mu * np.sum(s * s, axis=(1, 2))
            + p.mu_c * np.sum(k * k, axis=(1, 2)) + 0.5 * p.lam * tau ** 2)
    return float(np.dot(wgt, w_st))


def constraint_violation(state, grid, p):
    """Quadrature value of the unit-norm penalty integral over the box."""
    _, _, _, wgt = _grid_tables(grid)
    n2 = np.sum(state.rot * state.rot, axis=1)
    return float(np.dot(wgt, p.penalty * (n2 - 1.0) ** 2))
