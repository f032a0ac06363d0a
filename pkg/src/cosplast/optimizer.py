"""Limited-memory BFGS with strong Wolfe line search and pluggable H0.

The inverse-Hessian seed H0 of the two-loop recursion is pluggable:
identity, Cholesky scaling (s.y/y.y), the banded curvature stencil Z
(multiply or solve mode), or a warm-start operator built from curvature
pairs of a previous run on a subspace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["LbfgsConfig", "CurvaturePairs", "IdentityH0", "CholeskyScalingH0",
           "BandZ", "WarmPairsH0", "two_loop", "cholesky_scale",
           "line_search", "minimize", "MinimizeResult", "Trace",
           "LineSearchError", "NonDescentError", "PreconditionerError",
           "DivergenceError"]


class LineSearchError(RuntimeError):
    """No acceptable step found within the trial budget."""


class NonDescentError(ValueError):
    """Line search invoked along a non-descent direction."""


class PreconditionerError(RuntimeError):
    """H0 operator cannot be applied (e.g. singular band matrix)."""


class DivergenceError(RuntimeError):
    """Objective or gradient became non-finite at an accepted iterate."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class LbfgsConfig:
    m: int = 5
    eps0: float = 1.0e-7
    max_iter: int = 10 ** 7
    c1: float = 1.0e-4
    c2: float = 0.9
    skip_threshold: float = 1.0e-10
    ls_max_trials: int = 60

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.m < 1:
            raise ValueError("history length m must be >= 1")


class CurvaturePairs:
    """Ring buffer of (s, y) update pairs with cached rho = 1/(y.s)."""

    def __init__(self, m):
        self.m = int(m)
        self.s = []
        self.y = []
        self.rho = []

    def __len__(self):
        return len(self.s)

    def clear(self):
        self.s.clear()
        self.y.clear()
        self.rho.clear()

    def push(self, s, y, threshold=1.0e-10):
        """Store a pair; skipped (returns False) unless y.s > threshold*|y||s|."""
        ys = float(y @ s)
        if ys <= threshold * float(np.linalg.norm(y) * np.linalg.norm(s)):
            return False
        if len(self.s) == self.m:
            self.s.pop(0)
            self.y.pop(0)
            self.rho.pop(0)
        self.s.append(np.asarray(s, float).copy())
        self.y.append(np.asarray(y, float).copy())
        self.rho.append(1.0 / ys)
        return True


def cholesky_scale(s, y):
    """Diagonal scaling delta = s.y / y.y of the initial two-loop matrix."""
    yy = float(y @ y)
    if yy == 0.0:
        return 1.0
    return float(s @ y) / yy


class IdentityH0:
    def apply(self, g, pairs):
        return g.copy()


class CholeskyScalingH0:
    """H0 = delta*I with delta from the most recent stored pair."""

    def apply(self, g, pairs):
        if len(pairs) == 0:
            return g.copy()
        return cholesky_scale(pairs.s[-1], pairs.y[-1]) * g


class BandZ:
    """Banded curvature stencil: prefactor * (2 g_n - sum_l g_{n +/- 2 e_l}).

    Acts componentwise on `ncomp` values per free node of a structured grid;
    neighbors outside the grid or at Dirichlet-fixed nodes are omitted.
    `mode="multiply"` applies Z itself (the literal scheme); `mode="solve"`
    applies Z^-1 via a sparse factorization and requires Z positive definite
    on the free subspace.
    """

    def __init__(self, grid, free_nodes, ncomp, prefactor, axes=(0, 1, 2),
                 mode="multiply"):
        if mode not in ("multiply", "solve"):
            raise ValueError(f"unknown band-Z mode {mode!r}")
        self.grid = grid
        self.free_nodes = np.asarray(free_nodes, dtype=np.int64)
        self.ncomp = int(ncomp)
        self.prefactor = float(prefactor)
        self.axes = tuple(axes)
        self.mode = mode
        self._solver = None

    def _mult_nodes(self, full):
        """Apply the stencil to a full (N, ncomp) nodal array."""
        s = self.grid.shape
        f = full.reshape(s + (self.ncomp,))
        out = 2.0 * f
        for ax in self.axes:
            sl_lo = [slice(None)] * 4
            sl_hi = [slice(None)] * 4
            sl_lo[ax] = slice(None, -2)
            sl_hi[ax] = slice(2, None)
            out[tuple(sl_lo)] -= f[tuple(sl_hi)]
            out[tuple(sl_hi)] -= f[tuple(sl_lo)]
        return self.prefactor * out.reshape(-1, self.ncomp)

    def multiply(self, g):
        """Z g for a free-DOF vector g."""
        n = self.grid.num_nodes
        full = np.zeros((n, self.ncomp))
        full[self.free_nodes] = np.asarray(g, float).reshape(-1, self.ncomp)
        out = self._mult_nodes(full)
        return out[self.free_nodes].reshape(-1)

    def _build_solver(self):
        nfree = len(self.free_nodes)
        pos = -np.ones(self.grid.num_nodes, dtype=np.int64)
        pos[self.free_nodes] = np.arange(nfree)
        s = self.grid.shape
        ijk = np.stack(np.unravel_index(self.free_nodes, s), axis=1)
        rows = [np.arange(nfree)]
        cols = [np.arange(nfree)]
        vals = [np.full(nfree, 2.0)]
        for ax in self.axes:
            for sign in (-2, 2):
                nb = ijk.copy()
                nb[:, ax] += sign
                ok = (nb[:, ax] >= 0) & (nb[:, ax] < s[ax])
                nb_flat = np.ravel_multi_index(
                    [nb[ok, 0], nb[ok, 1], nb[ok, 2]], s)
                nb_pos = pos[nb_flat]
                ok2 = nb_pos >= 0
                rows.append(np.arange(nfree)[ok][ok2])
                cols.append(nb_pos[ok2])
                vals.append(np.full(int(ok2.sum()), -1.0))
        z1 = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nfree, nfree)).tocsc() * self.prefactor
        # positive definiteness on the free subspace via sparse Cholesky proxy
        try:
            lu = spla.splu(z1)
        except RuntimeError as exc:
            raise PreconditionerError(f"band Z not factorizable: {exc}")
        diag_u = lu.U.diagonal()
        if np.any(~np.isfinite(diag_u)) or np.any(diag_u * self.prefactor <= 0):
            raise PreconditionerError("band Z is not positive definite")
        self._solver = (lu, z1)

    def solve(self, g):
        """Z^-1 g on the free subspace (direct banded solve)."""
        if self._solver is None:
            self._build_solver()
        lu, z1 = self._solver
        g2 = np.asarray(g, float).reshape(-1, self.ncomp)
        out = np.empty_like(g2)
        for c in range(self.ncomp):
            xc = lu.solve(np.ascontiguousarray(g2[:, c]))
            if np.linalg.norm(z1 @ xc - g2[:, c]) > 1e-10 * max(
                    1.0, np.linalg.norm(g2[:, c])):
                raise PreconditionerError("band Z solve residual too large")
            out[:, c] = xc
        return out.reshape(-1)

    def apply(self, g, pairs):
        if self.mode == "multiply":
            return self.multiply(g)
        return self.solve(g)


class WarmPairsH0:
    """Warm-start H0 from curvature pairs that live on a subspace.

    On the subspace selected by `index` the stored pairs are applied through
    the two-loop recursion (seeded with their Cholesky scaling); the
    complementary components get the Cholesky-scaled identity of the outer
    iteration's own pair history (falling back to the stored pairs' scale
    until the outer history is nonempty).
    """

    def __init__(self, pairs, index, dim):
        self.pairs = pairs
        self.index = np.asarray(index)
        self.dim = int(dim)
        if len(pairs):
            self.delta0 = cholesky_scale(pairs.s[-1], pairs.y[-1])
        else:
            self.delta0 = 1.0

    def apply(self, g, pairs):
        if pairs is not None and len(pairs):
            delta = cholesky_scale(pairs.s[-1], pairs.y[-1])
        else:
            delta = self.delta0
        out = delta * g
        out[self.index] = two_loop(g[self.index], self.pairs,
                                   CholeskyScalingH0())
        return out


def two_loop(g, pairs, h0):
    """H g by the two-loop recursion; the midpoint applies the H0 operator."""
    g = np.asarray(g, dtype=float)
    k = len(pairs)
    q = g.copy()
    alpha = np.empty(k)
    for i in range(k - 1, -1, -1):
        alpha[i] = pairs.rho[i] * float(pairs.s[i] @ q)
        q -= alpha[i] * pairs.y[i]
    r = h0.apply(q, pairs)
    for i in range(k):
        beta = pairs.rho[i] * float(pairs.y[i] @ r)
        r += (alpha[i] - beta) * pairs.s[i]
    return r


class Trace:
    """Per-iteration (k, f, |g|) record with growable storage."""

    def __init__(self):
        self._buf = np.empty((1024, 3))
        self.n = 0

    def append(self, k, f, gnorm):
        if self.n == self._buf.shape[0]:
            new = np.empty((2 * self.n, 3))
            new[: self.n] = self._buf
            self._buf = new
        self._buf[self.n] = (k, f, gnorm)
        self.n += 1

    def as_array(self):
        return self._buf[: self.n].copy()

    def write_csv(self, path, header="iter,f,gradnorm"):
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for k, f, g in self._buf[: self.n]:
                fh.write(f"{int(k)},{f:.17g},{g:.17g}\n")


@dataclass
class MinimizeResult:
    x: np.ndarray
    f: float
    gnorm: float
    iterations: int
    converged: bool
    trace: Trace
    n_evals: int = 0
    stalled: bool = False


def _interp_step(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi=np.nan):
    """Safeguarded interpolation step inside (a_lo, a_hi).

    Uses the cubic Hermite minimizer when both end derivatives are finite,
    falling back to the quadratic model through (f_lo, d_lo, f_hi) and
    finally to bisection.
    """
    d = a_hi - a_lo
    if d == 0.0:
        return a_lo
    lo, hi = (a_lo, a_hi) if a_lo < a_hi else (a_hi, a_lo)
    span = hi - lo

    def safeguarded(a):
        if not np.isfinite(a) or a < lo + 0.1 * span or a > hi - 0.1 * span:
            return a_lo + 0.5 * d
        return a

    if np.isfinite(f_hi) and np.isfinite(d_hi):
        d1 = d_lo + d_hi - 3.0 * (f_lo - f_hi) / (a_lo - a_hi)
        disc = d1 * d1 - d_lo * d_hi
        if disc >= 0.0:
            d2 = np.sign(a_hi - a_lo) * np.sqrt(disc)
            denom = d_hi - d_lo + 2.0 * d2
            if denom != 0.0:
                return safeguarded(
                    a_hi - (a_hi - a_lo) * (d_hi + d2 - d1) / denom)
    # quadratic model through f_lo, d_lo, f_hi
    denom = f_hi - f_lo - d_lo * d
    if denom <= 0.0 or not np.isfinite(denom):
        return a_lo + 0.5 * d
    return safeguarded(a_lo - 0.5 * d_lo * d * d / denom)


def line_search(fg, x, d, f0, g0, c1=1e-4, c2=0.9, max_trials=60,
                alpha0=1.0):
    """Strong Wolfe line search along the descent direction d.

    Returns (alpha, f_new, g_new, n_evals).  Raises NonDescentError if d is
    not a descent direction, LineSearchError if no acceptable step is found
    within `max_trials` objective evaluations.
    """
    dphi0 = float(g0 @ d)
    if dphi0 >= 0.0:
        raise NonDescentError("line search needs a descent direction")
    evals = 0

    def phi(a):
        nonlocal evals
        evals += 1
        f, g = fg(x + a * d)
        return f, g, float(g @ d)

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    g_prev = g0
    a = float(alpha0)
    bracket = None
    while evals < max_trials:
        f_a, g_a, d_a = phi(a)
        if not np.isfinite(f_a) or f_a > f0 + c1 * a * dphi0 or (
                a_prev > 0.0 and f_a >= f_prev):
            bracket = (a_prev, f_prev, d_prev, a, f_a, d_a)
            break
        if abs(d_a) <= -c2 * dphi0:
            return a, f_a, g_a, evals
        if d_a >= 0.0:
            bracket = (a, f_a, d_a, a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev, g_prev = a, f_a, d_a, g_a
        a *= 2.0
    if bracket is None:
        raise LineSearchError("no Wolfe step within trial budget")

    a_lo, f_lo, d_lo, a_hi, f_hi, d_hi = bracket
    g_lo = g_prev
    while evals < max_trials:
        a = _interp_step(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
        if abs(a_hi - a_lo) < 1e-16 * max(1.0, abs(a_lo)):
            break
        f_a, g_a, d_a = phi(a)
        if not np.isfinite(f_a) or f_a > f0 + c1 * a * dphi0 or f_a >= f_lo:
            a_hi, f_hi, d_hi = a, f_a, d_a
        else:
            if abs(d_a) <= -c2 * dphi0:
                return a, f_a, g_a, evals
            if d_a * (a_hi - a_lo) >= 0.0:
                a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
            a_lo, f_lo, d_lo, g_lo = a, f_a, d_a, g_a
    if a_lo > 0.0 and f_lo < f0:
        # Armijo point without the curvature condition; still usable
        return a_lo, f_lo, g_lo, evals
    raise LineSearchError("no Wolfe step within trial budget")


def _stop_ok(gnorm, x, eps0):
    return gnorm < eps0 * max(1.0, float(np.linalg.norm(x)))


def minimize(f, grad, x0, config=None, precond=None, fg=None):
    """L-BFGS minimization with the relative-gradient stop rule.

    `fg`, when given, evaluates (f, grad) in one pass and is preferred.
    Returns a MinimizeResult; the trace holds (k, f, |g|) per iteration.
    """
    config = config or LbfgsConfig()
    h0 = precond if precond is not None else CholeskyScalingH0()
    if fg is None:
        def fg(x):
            return f(x), grad(x)

    x = np.asarray(x0, dtype=float).copy()
    fx, g = fg(x)
    n_evals = 1
    if not np.isfinite(fx) or not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite objective at the start point")
    gnorm = float(np.linalg.norm(g))
    trace = Trace()
    trace.append(0, fx, gnorm)
    pairs = CurvaturePairs(config.m)
    k = 0
    stalled = False
    while not _stop_ok(gnorm, x, config.eps0) and k < config.max_iter:
        try:
            d = -two_loop(g, pairs, h0)
        except PreconditionerError:
            h0 = CholeskyScalingH0()
            d = -two_loop(g, pairs, h0)
        if not np.all(np.isfinite(d)) or float(g @ d) >= 0.0:
            # restart: steepest descent with identity seed
            pairs.clear()
            d = -g
        try:
            alpha, f_new, g_new, ev = line_search(
                fg, x, d, fx, g, c1=config.c1, c2=config.c2,
                max_trials=config.ls_max_trials)
        except (LineSearchError, NonDescentError):
            pairs.clear()
            d = -g
            try:
                alpha, f_new, g_new, ev = line_search(
                    fg, x, d, fx, g, c1=config.c1, c2=config.c2,
                    max_trials=config.ls_max_trials,
                    alpha0=min(1.0, 1.0 / max(gnorm, 1e-30)))
            except (LineSearchError, NonDescentError):
                stalled = True
                break
        n_evals += ev
        s = alpha * d
        y = g_new - g
        pairs.push(s, y, threshold=config.skip_threshold)
        x = x + s
        fx, g = f_new, g_new
        if not np.isfinite(fx) or not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite objective during iteration",
                                  trace=trace)
        gnorm = float(np.linalg.norm(g))
        k += 1
        trace.append(k, fx, gnorm)
    return MinimizeResult(x=x, f=fx, gnorm=gnorm, iterations=k,
                          converged=_stop_ok(gnorm, x, config.eps0),
                          trace=trace, n_evals=n_evals, stalled=stalled,
                          ), pairs
