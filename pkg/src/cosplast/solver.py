"""Time-stepping driver: benchmark boundary data, the two-pass
predictor/corrector minimization, and the hardening update between steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import (MaterialParams, PlasticHistory, constraint_violation,
                     energy_and_gradient, fp_inverse, hardening_update)
from .grid import DofLayout, FieldState, build_grid
from .kinematics import polar_decompose, quat_from_rotation
from .optimizer import (BandZ, CholeskyScalingH0, LbfgsConfig, WarmPairsH0,
                        minimize)

__all__ = ["ScenarioSpec", "StepReport", "shear_bc", "bending_bc",
           "predictor", "corrector", "run_time_step", "run_simulation",
           "SolverError", "SHEAR_DEFAULTS", "BENDING_DEFAULTS"]


class SolverError(RuntimeError):
    pass


SHEAR_DEFAULTS = dict(
    lengths=(1.0, 1.0, 1.0),
    params=dict(mu=1.0e4, mu_c=2.0e4, mu2=100.0, lam=1.0e3, rho=0.0,
                sigma_y=0.0, penalty=20.0, eps_reg=1.0e-4),
)

BENDING_DEFAULTS = dict(
    lengths=(5.0, 1.0, 2.0),
    params=dict(mu=0.025, lam=0.025, mu_c=0.4, mu2=0.02, rho=0.0,
                sigma_y=0.0, penalty=20.0, eps_reg=1.0e-4,
                curvature_variant="simplified"),
)


@dataclass
class ScenarioSpec:
    kind: str                      # "shear" | "bending"
    d: tuple = (10, 10, 10)
    lengths: tuple = (1.0, 1.0, 1.0)
    params: MaterialParams = field(default_factory=MaterialParams)
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    h: float = 0.1
    t_final: float = 1.0
    beta_rate: float = 0.25
    preconditioning: str = "two_pass"   # "off" | "two_pass"
    bandz_mode: str = "multiply"

    def __post_init__(self):
        if self.kind not in ("shear", "bending"):
            raise SolverError(f"unknown scenario kind {self.kind!r}")
        if self.h <= 0.0 or self.t_final < self.h:
            raise SolverError("need h > 0 and T >= h (nonempty schedule)")
        if self.preconditioning not in ("off", "two_pass"):
            raise SolverError(
                f"unknown preconditioning {self.preconditioning!r}")
        if self.kind == "bending" and self.params.curvature_variant == "euler":
            raise SolverError(
                "bending boundary data is defined for quaternion modes only")

    def beta(self, t):
        return self.beta_rate * t

    @property
    def mode(self):
        return ("euler" if self.params.curvature_variant == "euler"
                else "quaternion")

    @classmethod
    def benchmark(cls, kind, **overrides):
        """Scenario preloaded with the benchmark parameter sets."""
        defaults = SHEAR_DEFAULTS if kind == "shear" else BENDING_DEFAULTS
        pkw = dict(defaults["params"])
        pkw.update(overrides.pop("params", {}))
        params = MaterialParams(**pkw)
        kw = dict(kind=kind, lengths=defaults["lengths"], params=params)
        kw.update(overrides)
        return cls(**kw)


@dataclass
class StepReport:
    step: int
    t: float
    pred_iters: int
    corr_iters: int
    energy: float
    gradnorm: float
    constraint_violation: float
    wall_ms: float

    @property
    def total_iters(self):
        return self.pred_iters + self.corr_iters

    @staticmethod
    def csv_header():
        return ("step,t,pred_iters,corr_iters,energy,gradnorm,"
                "constraint_violation,wall_ms")

    def csv_line(self, zero_wall=False):
        wall = 0.0 if zero_wall else self.wall_ms
        return (f"{self.step},{self.t:.17g},{self.pred_iters},"
                f"{self.corr_iters},{self.energy:.17g},{self.gradnorm:.17g},"
                f"{self.constraint_violation:.17g},{wall:.3f}")


def shear_bc(grid, beta, mode="quaternion"):
    """Simple-shear boundary data g_D = (x1 + beta x2, x2, x3), q_D = 1.

    Returned as full-grid analytic fields (the Cauchy-Born extension);
    callers impose only the boundary rows as Dirichlet data.
    """
    xyz = grid.coords()
    phi = xyz.copy()
    phi[:, 0] += beta * xyz[:, 1]
    if mode == "quaternion":
        rot = np.tile([1.0, 0.0, 0.0, 0.0], (grid.num_nodes, 1))
    else:
        rot = np.zeros((grid.num_nodes, 3))
    return phi, rot


def bending_bc(grid, beta, gamma_field, mvec=(1.0, 0.0, 0.0),
               nvec=(0.0, 1.0, 0.0), nodes=None):
    """Rod-bending boundary data.

    phi_D warps x2 by the sine bump; q_D is extracted from the polar
    factor of the analytic boundary deformation gradient composed with
    the current plastic inverse at the node.
    """
    xyz = grid.coords()
    l1 = grid.lengths[0]
    phi = xyz.copy()
    phi[:, 1] += (2.0 * l1 / np.pi) * (
        np.sin(1.5 * np.pi + 0.5 * np.pi * xyz[:, 0] / l1) + 1.0) * beta
    if nodes is None:
        nodes = np.arange(grid.num_nodes)
    rot = np.zeros((grid.num_nodes, 4))
    rot[:, 0] = 1.0
    slope = beta * np.sin(0.5 * np.pi * xyz[:, 0] / l1)
    for n in nodes:
        f = np.eye(3)
        f[1, 0] = slope[n]
        a = f @ fp_inverse(gamma_field[n], mvec, nvec)
        try:
            r, _ = polar_decompose(a)
        except Exception as exc:
            raise SolverError(f"bending boundary data at node {n}: {exc}")
        rot[n] = quat_from_rotation(r)
    return phi, rot


def _boundary_data(spec, grid, t, gamma_field):
    if spec.kind == "shear":
        return shear_bc(grid, spec.beta(t), spec.mode)
    return bending_bc(grid, spec.beta(t), gamma_field,
                      spec.params.mvec, spec.params.nvec)


def _default_bandz(spec, grid, interior_idx, rot_dim):
    axes = (0,) if spec.params.curvature_variant == "full" else (0, 1, 2)
    prefactor = grid.w * spec.params.mu2 / grid.eta[0] ** 2
    return BandZ(grid, interior_idx, rot_dim, prefactor, axes=axes,
                 mode=spec.bandz_mode)


def predictor(state, hist, grid, p, cfg, bandz=None):
    """Minimize the energy over the rotation field with (phi, gamma) frozen.

    Mutates state.rot in place; returns (MinimizeResult, CurvaturePairs).
    """
    interior = np.where(~grid.boundary_mask())[0]
    rd = state.rot.shape[1]
    work = state.copy()

    def fg(x):
        work.rot[interior] = x.reshape(-1, rd)
        e, _, drot, _ = energy_and_gradient(work, hist, grid, p)
        return e, drot[interior].ravel()

    x0 = state.rot[interior].ravel()
    res, pairs = minimize(None, None, x0, cfg, precond=bandz, fg=fg)
    state.rot[interior] = res.x.reshape(-1, rd)
    return res, pairs


def _rotation_slot_index(layout):
    """Positions of rotation-parameter entries within the packed free vector."""
    kinds = np.zeros((layout.grid.num_nodes, layout.nslots), dtype=np.int8)
    kinds[:, 3:3 + layout.rot_dim] = 1
    kinds[:, -1] = 2
    packed = kinds[layout.free_slots]
    return np.where(packed == 1)[0]


def _full_fg(layout, dirichlet, hist, grid, p):
    def fg(x):
        st = layout.unpack(x, dirichlet)
        e, dphi, drot, dgam = energy_and_gradient(st, hist, grid, p)
        full = np.concatenate([dphi, drot, dgam[:, None]], axis=1)
        return e, full[layout.free_slots]

    return fg


def corrector(state, pairs, hist, grid, p, cfg, layout):
    """Full minimization warm-started with the predictor curvature pairs."""
    qidx = _rotation_slot_index(layout)
    h0 = WarmPairsH0(pairs, qidx, layout.num_free)
    dirichlet = state.copy()
    fg = _full_fg(layout, dirichlet, hist, grid, p)
    res, _ = minimize(None, None, layout.pack(state), cfg, precond=h0, fg=fg)
    return layout.unpack(res.x, dirichlet), res


def run_time_step(state, hist, grid, p, cfg, spec, t, step=0,
                  first_step=False):
    """Advance one time step; returns (state, hist, report, traces)."""
    t0 = time.perf_counter()
    phi_d, rot_d = _boundary_data(spec, grid, t, hist.gamma0)
    bnd = grid.boundary_mask()
    state = state.copy()
    if first_step:
        # Cauchy-Born / analytic extension as the first-step initial guess
        state.phi[:] = phi_d
        state.rot[:] = rot_d
    else:
        state.phi[bnd] = phi_d[bnd]
        state.rot[bnd] = rot_d[bnd]
    layout = DofLayout.create(grid, spec.mode)
    traces = {}
    if spec.preconditioning == "two_pass":
        interior = np.where(~bnd)[0]
        bandz = _default_bandz(spec, grid, interior, layout.rot_dim)
        pred_res, pairs = predictor(state, hist, grid, p, cfg, bandz=bandz)
        traces["predictor"] = pred_res.trace
        state, corr_res = corrector(state, pairs, hist, grid, p, cfg, layout)
        traces["corrector"] = corr_res.trace
        pred_iters, corr_iters = pred_res.iterations, corr_res.iterations
    else:
        dirichlet = state.copy()
        fg = _full_fg(layout, dirichlet, hist, grid, p)
        res, _ = minimize(None, None, layout.pack(state), cfg,
                          precond=CholeskyScalingH0(), fg=fg)
        traces["single"] = res.trace
        state = layout.unpack(res.x, dirichlet)
        pred_iters, corr_iters = 0, res.iterations
        corr_res = res
    kappa = hardening_update(state.gamma, hist.gamma0, hist.kappa0)
    new_hist = PlasticHistory(gamma0=state.gamma.copy(), kappa0=kappa)
    violation = (constraint_violation(state, grid, p)
                 if spec.mode == "quaternion" else 0.0)
    report = StepReport(
        step=step, t=t, pred_iters=pred_iters, corr_iters=corr_iters,
        energy=corr_res.f, gradnorm=corr_res.gnorm,
        constraint_violation=violation,
        wall_ms=(time.perf_counter() - t0) * 1e3)
    return state, new_hist, report, traces


def initial_state(spec, grid):
    """phi = identity map, rotation parameter = identity, gamma = 0."""
    xyz = grid.coords()
    if spec.mode == "quaternion":
        rot = np.tile([1.0, 0.0, 0.0, 0.0], (grid.num_nodes, 1))
    else:
        rot = np.zeros((grid.num_nodes, 3))
    return FieldState(phi=xyz.copy(), rot=rot, gamma=np.zeros(grid.num_nodes))


def run_simulation(spec, step_callback=None):
    """Run the time-incremental loop t = h, 2h, ..., T.

    Returns (reports, final state, final history, grid, per-step traces).
    `step_callback(step, state, hist, report, traces)` runs after each
    step; a step that raises aborts the loop with partial results kept
    on the exception.
    """
    grid = build_grid(spec.lengths, spec.d)
    state = initial_state(spec, grid)
    hist = PlasticHistory.zeros(grid.num_nodes)
    n_steps = int(round(spec.t_final / spec.h))
    reports = []
    all_traces = []
    for step in range(1, n_steps + 1):
        t = step * spec.h
        try:
            state, hist, report, traces = run_time_step(
                state, hist, grid, spec.params, spec.lbfgs, spec, t,
                step=step, first_step=(step == 1))
        except Exception as exc:
            err = SolverError(f"step {step} (t={t}) failed: {exc}")
            err.partial_reports = reports
            raise err from exc
        reports.append(report)
        all_traces.append(traces)
        if step_callback is not None:
            step_callback(step, state, hist, report, traces)
    return reports, state, hist, grid, all_traces
