"""Structured 3D box discretization and DOF bookkeeping.

Nodes live on a (d1+1) x (d2+1) x (d3+1) lattice with spacings eta_l =
L_l/d_l.  Node n = (i*(d2+1) + j)*(d3+1) + k, i slowest.  Directional
derivatives are expressed uniformly as d_l f(n) = c_n * (f[ip_n] - f[im_n]):
central differences in the interior, first-order one-sided differences on
the axis boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import quat_from_rotation, rotation_euler

__all__ = ["Grid3", "DofLayout", "FieldState", "build_grid",
           "newton_cotes_weight", "GridError"]


class GridError(ValueError):
    """Configuration or structural error in grid/DOF handling."""


@dataclass(frozen=True)
class Grid3:
    d: tuple[int, int, int]
    lengths: tuple[float, float, float]
    eta: tuple[float, float, float]
    w: float  # quadrature cell volume eta1*eta2*eta3

    @property
    def shape(self):
        return (self.d[0] + 1, self.d[1] + 1, self.d[2] + 1)

    @property
    def num_nodes(self):
        s = self.shape
        return s[0] * s[1] * s[2]

    def node_index(self, i, j, k):
        s = self.shape
        return (i * s[1] + j) * s[2] + k

    def coords(self):
        """(N, 3) array of node coordinates y_ijk = (i eta1, j eta2, k eta3)."""
        s = self.shape
        i, j, k = np.meshgrid(np.arange(s[0]), np.arange(s[1]),
                              np.arange(s[2]), indexing="ij")
        xyz = np.stack([i * self.eta[0], j * self.eta[1], k * self.eta[2]],
                       axis=-1)
        return xyz.reshape(-1, 3)

    def boundary_mask(self):
        """(N,) bool array, True at nodes on the box boundary."""
        s = self.shape
        i, j, k = np.meshgrid(np.arange(s[0]), np.arange(s[1]),
                              np.arange(s[2]), indexing="ij")
        mask = ((i == 0) | (i == s[0] - 1) | (j == 0) | (j == s[1] - 1)
                | (k == 0) | (k == s[2] - 1))
        return mask.reshape(-1)

    def quadrature_weights(self):
        """(N,) array (w/8) * N_ijk, N_ijk the Newton-Cotes product weights."""
        s = self.shape

        def axis_w(npts):
            a = np.full(npts, 2.0)
            a[0] = a[-1] = 1.0
            return a

        wi = axis_w(s[0])[:, None, None]
        wj = axis_w(s[1])[None, :, None]
        wk = axis_w(s[2])[None, None, :]
        return (self.w / 8.0) * (wi * wj * wk).reshape(-1)

    def diff_stencils(self):
        """Per-axis (ip, im, c) arrays so that d_l f(n) = c[n]*(f[ip[n]]-f[im[n]]).

        Central second-order stencil at interior nodes, one-sided first
        order at axis-boundary nodes.
        """
        s = self.shape
        idx = np.arange(self.num_nodes).reshape(s)
        ips, ims, cs = [], [], []
        for axis in range(3):
            npts = s[axis]
            pos = np.arange(npts)
            up = np.minimum(pos + 1, npts - 1)
            dn = np.maximum(pos - 1, 0)
            c1 = 1.0 / (self.eta[axis] * (up - dn))
            sh_up = [1, 1, 1]
            sh_up[axis] = npts
            ip = np.take(idx, up, axis=axis)
            im = np.take(idx, dn, axis=axis)
            c = np.broadcast_to(c1.reshape(sh_up), s)
            ips.append(ip.reshape(-1).astype(np.int64))
            ims.append(im.reshape(-1).astype(np.int64))
            cs.append(np.ascontiguousarray(c.reshape(-1), dtype=float))
        return (np.stack(ips), np.stack(ims), np.stack(cs))


def build_grid(lengths, d):
    """Create a Grid3 for the box (0,L1)x(0,L2)x(0,L3) with d_l intervals."""
    d = tuple(int(x) for x in d)
    lengths = tuple(float(x) for x in lengths)
    if any(x < 2 for x in d):
        raise GridError(f"need at least 2 intervals per axis, got {d}")
    if any(x <= 0 for x in lengths):
        raise GridError(f"box edge lengths must be positive, got {lengths}")
    eta = tuple(lengths[i] / d[i] for i in range(3))
    return Grid3(d=d, lengths=lengths, eta=eta, w=eta[0] * eta[1] * eta[2])


def newton_cotes_weight(i, j, k, grid):
    """Integer product weight N_ijk (trapezoid rule: 1 on boundary axes, 2 inside)."""
    for a, idx in enumerate((i, j, k)):
        if not 0 <= idx <= grid.d[a]:
            raise IndexError(f"node index {(i, j, k)} outside grid {grid.d}")

    def n(a, d):
        return 1 if a in (0, d) else 2

    return n(i, grid.d[0]) * n(j, grid.d[1]) * n(k, grid.d[2])


@dataclass(frozen=True)
class DofLayout:
    """Packing map from per-node fields to the free-DOF optimization vector.

    Node-major slot order per node: phi (3), rotation parameter
    (4 quaternion / 3 Euler), gamma (1).  Boundary nodes keep only gamma
    free; phi and the rotation parameter are Dirichlet-fixed there.
    """

    grid: Grid3
    mode: str  # "quaternion" | "euler"
    free_slots: np.ndarray = field(repr=False)  # (N, nslots) bool

    @property
    def rot_dim(self):
        return 4 if self.mode == "quaternion" else 3

    @property
    def nslots(self):
        return 4 + self.rot_dim

    @property
    def num_free(self):
        return int(self.free_slots.sum())

    @classmethod
    def create(cls, grid, mode="quaternion"):
        if mode not in ("quaternion", "euler"):
            raise GridError(f"unknown parameterization mode {mode!r}")
        rot_dim = 4 if mode == "quaternion" else 3
        n = grid.num_nodes
        free = np.ones((n, 4 + rot_dim), dtype=bool)
        bnd = grid.boundary_mask()
        free[bnd, : 3 + rot_dim] = False  # gamma (last slot) stays free
        return cls(grid=grid, mode=mode, free_slots=free)

    def pack(self, state):
        """Flatten the free DOFs of a FieldState into one vector."""
        full = np.concatenate(
            [state.phi, state.rot, state.gamma[:, None]], axis=1)
        if full.shape != self.free_slots.shape:
            raise GridError("field state does not match layout")
        return full[self.free_slots].copy()

    def unpack(self, vec, dirichlet):
        """Rebuild a FieldState from a free-DOF vector plus Dirichlet data.

        `dirichlet` is a FieldState supplying the fixed boundary values.
        """
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.num_free,):
            raise GridError(
                f"dof vector length {vec.shape} != {self.num_free}")
        full = np.concatenate(
            [dirichlet.phi, dirichlet.rot, dirichlet.gamma[:, None]], axis=1)
        full = full.copy()
        full[self.free_slots] = vec
        return FieldState(phi=np.ascontiguousarray(full[:, :3]),
                          rot=np.ascontiguousarray(full[:, 3:3 + self.rot_dim]),
                          gamma=np.ascontiguousarray(full[:, -1]))


@dataclass
class FieldState:
    """Per-node primal fields: deformation, rotation parameter, plastic slip."""

    phi: np.ndarray    # (N, 3)
    rot: np.ndarray    # (N, 4) quaternion or (N, 3) Euler angles
    gamma: np.ndarray  # (N,)

    def copy(self):
        return FieldState(self.phi.copy(), self.rot.copy(), self.gamma.copy())


def dump_fields(path, grid, state, kappa):
    """Write the per-node field dump.

    One line per node: i j k x1 x2 x3 phi1 phi2 phi3 q0 q1 q2 q3 gamma kappa.
    Euler-angle states are converted to quaternions for the dump.
    """
    s = grid.shape
    xyz = grid.coords()
    if state.rot.shape[1] == 4:
        quat = state.rot
    else:
        quat = np.array([quat_from_rotation(rotation_euler(a))
                         for a in state.rot])
    with open(path, "w") as fh:
        n = 0
        for i in range(s[0]):
            for j in range(s[1]):
                for k in range(s[2]):
                    vals = [*xyz[n], *state.phi[n], *quat[n],
                            state.gamma[n], kappa[n]]
                    fh.write(f"{i} {j} {k} "
                             + " ".join(f"{float(v):.17g}" for v in vals)
                             + "\n")
                    n += 1
