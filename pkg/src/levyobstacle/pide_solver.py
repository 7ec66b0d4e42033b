"""Finite-difference solver for ``min{-v_t - Lv + cv - f, v - φ} = 0``, ``v(T) = g``.

The generator is split at ``|y| = ε_loc``:

    Lu ≈ (b - m_h) u' + ½σ²(ε_loc) u'' + Σ_k w_k (u(x + k dx) - u(x))

with grid-lumped jump weights ``w_k`` (mass of the cell around ``k dx``) and
``m_h = Σ w_k k dx``, so the discrete compensator cancels linear functions
exactly.  Each backward step solves

    (I + dt A) v^n = e^{-c dt} (v^{n+1} + dt J v^{n+1}) + dt f^n,   v^n >= φ^n

where ``A`` is the upwind drift plus diffusion (implicit), ``J`` the jump
operator (explicit, FFT convolution) and the reaction is integrated exactly.
The complementarity problem is solved by policy iteration on the tridiagonal
system.
"""
from dataclasses import dataclass, field, replace
import csv
import math

import numpy as np
from scipy.linalg import solve_banded
from scipy.signal import fftconvolve

from ._quadrature import gauss_legendre
from .coefficients import DriftSpec
from .errors import ConfigError, IterationError, PreconditionError, StabilityError
from .levy_models import levy_density, truncated_moments
from .optimal_stopping import ValueSurface

__all__ = ["Discretization", "PideSolution", "JumpStencil", "jump_stencil", "solve_pide",
           "comparison_probe", "ComparisonReport", "refine_study", "RefineTable"]

STABILITY_LIMIT = 0.9


@dataclass(frozen=True)
class Discretization:
    x_lo: float = -3.0
    x_hi: float = 3.0
    dx: float = 1e-3
    dt: float = 2e-3
    eps_loc: float = None
    boundary_ext: str = "phi"
    method: str = "projection"
    penalty: float = 1e8
    solver_tol: float = 1e-9
    max_iter: int = 200
    y_cap: float = None
    exercise_every: int = 1
    store_every: int = 1

    def __post_init__(self):
        if not (self.x_hi > self.x_lo):
            raise ConfigError("x_hi must exceed x_lo")
        if not (self.dx > 0 and self.dt > 0):
            raise ConfigError("dx and dt must be positive")
        if self.boundary_ext not in ("phi", "discounted_g"):
            raise ConfigError(f"unknown boundary extension {self.boundary_ext!r}")
        if self.method not in ("projection", "penalty"):
            raise ConfigError(f"unknown obstacle method {self.method!r}")

    @property
    def n_nodes(self):
        return int(round((self.x_hi - self.x_lo) / self.dx)) + 1

    @property
    def x_nodes(self):
        return self.x_lo + self.dx * np.arange(self.n_nodes)

    @property
    def eps(self):
        return 0.5 * self.dx if self.eps_loc is None else float(self.eps_loc)

    def refined(self, level):
        s = 2.0 ** level
        return replace(self, dx=self.dx / s, dt=self.dt / s,
                       eps_loc=None if self.eps_loc is None else self.eps_loc / s,
                       store_every=max(1, int(self.store_every * s)))


@dataclass(frozen=True)
class JumpStencil:
    offsets: np.ndarray
    weights: np.ndarray
    rate: float
    drift_correction: float
    small_var: float
    eps: float


def _default_cap(model, width):
    caps = []
    for side in (-1, 1):
        if model.kind == "tabulated":
            xs, _ = model.table(side)
            caps.append(float(xs[-1]) if xs.size else 0.0)
            continue
        rate = model.tail_rate(side)
        caps.append(36.0 / rate if rate > 0 else 2.0 * width)
    return min(max(caps), 2.0 * width)


def jump_stencil(model, dx, eps, y_cap):
    """Cell-lumped weights for jumps ``k dx``, ``|k dx| >= eps``."""
    _, _, var = truncated_moments(model, eps) if not model.is_empty() else (0, 0, 0.0)
    if model.is_empty():
        return JumpStencil(np.zeros(0, int), np.zeros(0), 0.0, 0.0, 0.0, eps)
    kmax = int(math.ceil(y_cap / dx))
    k = np.arange(1, kmax + 1)
    lo = np.maximum((k - 0.5) * dx, eps)
    hi = (k + 0.5) * dx
    keep = hi > lo
    k, lo, hi = k[keep], lo[keep], hi[keep]
    t, w = gauss_legendre(8)
    half = 0.5 * (hi - lo)
    nodes = 0.5 * (hi + lo)[:, None] + half[:, None] * t[None, :]
    wp = (half[:, None] * w[None, :] * levy_density(model, nodes)).sum(axis=1)
    wn = (half[:, None] * w[None, :] * levy_density(model, -nodes)).sum(axis=1)
    offsets = np.concatenate((-k[::-1], k))
    weights = np.concatenate((wn[::-1], wp))
    rate = float(weights.sum())
    corr = float(np.sum(weights * offsets * dx))
    return JumpStencil(offsets, weights, rate, corr, float(var), eps)


@dataclass
class PideSolution:
    grid_t: np.ndarray
    grid_x: np.ndarray
    values: np.ndarray
    active: np.ndarray
    iterations: np.ndarray
    residual: float
    stencil: JumpStencil
    disc: Discretization
    problem: object = field(repr=False, default=None)
    meta: dict = field(default_factory=dict)

    def at(self, t, x):
        return self.to_surface().evaluate(t, x)

    def to_surface(self, bias_budget=0.0):
        surf = ValueSurface(self.grid_t, self.grid_x, self.values, np.zeros_like(self.values),
                            self.active.copy(), dict(self.meta, bias_budget=bias_budget,
                                                     estimator="pide"), self.problem)
        return surf

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "v", "active"])
            for i, t in enumerate(self.grid_t):
                for j, x in enumerate(self.grid_x):
                    w.writerow([repr(float(t)), repr(float(x)), repr(float(self.values[i, j])),
                                int(self.active[i, j])])


def _ext_values(problem, disc, t, x):
    if disc.boundary_ext == "phi" or problem.g is None:
        return problem.phi(t, x)
    tau = problem.T - t
    return np.exp(-problem.c(t, x) * tau) * problem.g(x)


def _local_bands(mu, var, dx, dt):
    """Tridiagonal ``I + dt A`` for ``A u = -μ u' (upwind) - ½ var u''``."""
    n = mu.size
    diff = 0.5 * var / dx ** 2
    up = np.maximum(mu, 0.0) / dx
    dn = np.maximum(-mu, 0.0) / dx
    lower = -dt * (diff + dn)
    upper = -dt * (diff + up)
    main = 1.0 - lower - upper
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = main
    ab[2, :-1] = lower[1:]
    return ab, lower, upper


def _banded_matvec(ab, v):
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[2, :-1] * v[:-1]
    return out


def _solve_lcp(ab, rhs, obst, active0, disc):
    """``min(M v - rhs, v - obst) = 0`` by policy iteration (ties take the obstacle)."""
    active = active0.copy()
    tiny = 1e-13 * max(1.0, float(np.max(np.abs(obst))))
    for it in range(1, disc.max_iter + 1):
        abm = ab.copy()
        r = rhs.copy()
        # active rows become v_j = obstacle_j
        abm[1, active] = 1.0
        abm[0, 1:][active[:-1]] = 0.0
        abm[2, :-1][active[1:]] = 0.0
        r[active] = obst[active]
        v = solve_banded((1, 1), abm, r)
        res = _banded_matvec(ab, v) - rhs
        new = (v - obst) <= res + tiny
        # near-ties at rounding level can make the active set flicker
        if np.array_equal(new, active) or np.max(np.abs(np.minimum(res, v - obst))) <= 10 * tiny:
            return np.maximum(v, obst), active, it
        active = new
    raise IterationError(f"policy iteration did not settle in {disc.max_iter} sweeps")


def _solve_penalty(ab, rhs, obst, active0, disc):
    active = active0.copy()
    rho = disc.penalty
    for it in range(1, disc.max_iter + 1):
        abm = ab.copy()
        abm[1] += rho * active
        v = solve_banded((1, 1), abm, rhs + rho * active * obst)
        new = v < obst
        if np.array_equal(new, active):
            return v, active, it
        active = new
    raise IterationError(f"penalty iteration did not settle in {disc.max_iter} sweeps")


def solve_pide(model, drift, problem, disc):
    """Backward time stepping from ``v(T) = g`` (or ``φ(T)``) to ``t = 0``."""
    drift = DriftSpec.constant(drift) if isinstance(drift, (int, float)) else drift
    x = disc.x_nodes
    J = x.size
    dx, T = disc.dx, problem.T
    nsteps = max(1, int(round(T / disc.dt)))
    dt = T / nsteps
    cap = disc.y_cap if disc.y_cap is not None else _default_cap(model, disc.x_hi - disc.x_lo)
    st = jump_stencil(model, dx, disc.eps, cap)
    csup = problem.sup_c(disc.x_lo, disc.x_hi)
    if not math.isfinite(csup):
        csup = float(np.max([np.max(problem.c(t, x)) for t in (0.0, T)]))
    bound = dt * (st.rate + csup)
    if bound > STABILITY_LIMIT:
        raise StabilityError(
            f"dt·(λ(ε_loc) + ‖c‖) = {bound:.3g} exceeds {STABILITY_LIMIT}; "
            f"need dt <= {STABILITY_LIMIT / (st.rate + csup):.3g}", tag="explicit-jump-stability")
    problem.check(x, np.array([0.0, T]))
    mu = drift(x) - st.drift_correction
    ab_full, _, _ = _local_bands(mu, np.full(J, st.small_var), dx, dt)
    # interior system; boundary nodes carry extension values
    ab = ab_full[:, 1:-1].copy()
    lo_coef = ab_full[2, 0]      # coefficient of v_0 in row 1
    hi_coef = ab_full[0, J - 1]  # coefficient of v_{J-1} in row J-2
    ab[0, 0] = 0.0
    ab[2, -1] = 0.0
    kmax = int(np.max(np.abs(st.offsets))) if st.offsets.size else 0
    x_ext = disc.x_lo + dx * np.arange(-kmax, J + kmax)
    kernel = np.zeros(2 * kmax + 1)
    if kmax:
        kernel[st.offsets + kmax] = st.weights
    kernel = kernel[::-1]

    v = np.asarray(problem.terminal(x), dtype=float).copy()
    stored = [(T, v, v <= problem.phi(T, x) + 1e-14)]
    iters = np.zeros(nsteps, dtype=int)
    max_res = 0.0
    act = np.zeros(J - 2, dtype=bool)
    solver = _solve_lcp if disc.method == "projection" else _solve_penalty
    for n in range(nsteps - 1, -1, -1):
        t1, t0 = (n + 1) * dt, n * dt
        if kmax:
            u_ext = _ext_values(problem, disc, t1, x_ext)
            u_ext[kmax:kmax + J] = v
            jump = fftconvolve(u_ext, kernel, mode="valid") - st.rate * v
        else:
            jump = 0.0
        rhs_full = np.exp(-problem.c(t0, x) * dt) * (v + dt * jump) + dt * problem.f(t0, x)
        bnd = _ext_values(problem, disc, t0, x[[0, -1]])
        rhs = rhs_full[1:-1].copy()
        rhs[0] -= lo_coef * bnd[0]
        rhs[-1] -= hi_coef * bnd[1]
        phi = problem.phi(t0, x)
        if disc.exercise_every == 1 or n % disc.exercise_every == 0:
            inner, act, iters[n] = solver(ab, rhs, phi[1:-1], act, disc)
            res = np.minimum((_banded_matvec(ab, inner) - rhs) / dt, inner - phi[1:-1])
            max_res = max(max_res, float(np.max(np.abs(res))))
            act_full = np.concatenate(([bnd[0] <= phi[0]], act, [bnd[1] <= phi[-1]]))
        else:
            inner = solve_banded((1, 1), ab, rhs)
            iters[n] = 1
            act_full = np.zeros(J, dtype=bool)
        v = np.concatenate(([bnd[0]], inner, [bnd[1]]))
        if n % disc.store_every == 0 or n == 0:
            stored.append((t0, v, act_full))
    stored.reverse()
    times = np.array([r[0] for r in stored])
    values = np.array([r[1] for r in stored])
    active_out = np.array([r[2] for r in stored])
    meta = {"dx": dx, "dt": dt, "eps_loc": disc.eps, "jump_rate": st.rate,
            "stability": bound, "boundary_ext": disc.boundary_ext, "method": disc.method,
            "y_cap": cap}
    return PideSolution(times, x, values, active_out, iters, max_res, st, disc, problem, meta)


@dataclass
class ComparisonReport:
    holds: bool
    worst_violation: float
    worst_x: float
    worst_t: float
    tol: float


def comparison_probe(sol_a, sol_b, tol=1e-9):
    """Check ``v_A <= v_B + tol`` on every stored node."""
    if sol_a.values.shape != sol_b.values.shape:
        raise ConfigError("solutions must share a grid")
    gap = sol_a.values - sol_b.values
    i, j = np.unravel_index(int(np.argmax(gap)), gap.shape)
    worst = float(gap[i, j])
    return ComparisonReport(bool(worst <= tol), max(worst, 0.0), float(sol_a.grid_x[j]),
                            float(sol_a.grid_t[i]), tol)


@dataclass
class RefineTable:
    levels: list
    dx: list
    dt: list
    diffs: list
    orders: list
    monotone: bool

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "dx", "dt", "diff", "order"])
            for row in zip(self.levels, self.dx, self.dt, self.diffs, self.orders):
                w.writerow([repr(float(r)) if isinstance(r, float) else r for r in row])


def refine_study(model, drift, problem, disc, levels=3, window=None):
    """Successive max-norm differences of the ``t = 0`` slice under dyadic refinement.

    Differences are taken on the coarsest grid's nodes, optionally restricted
    to ``window = (lo, hi)``.
    """
    if levels < 3:
        raise ConfigError("refine_study needs at least 3 levels")
    coarse_x = disc.x_nodes
    mask = np.ones(coarse_x.size, bool) if window is None else \
        (coarse_x >= window[0]) & (coarse_x <= window[1])
    prev = None
    out = RefineTable([], [], [], [], [], True)
    for lev in range(levels):
        d = disc.refined(lev)
        sol = solve_pide(model, drift, problem, replace(d, store_every=10 ** 9))
        v0 = sol.values[0][:: 2 ** lev][: coarse_x.size]
        out.levels.append(lev)
        out.dx.append(sol.meta["dx"])
        out.dt.append(sol.meta["dt"])
        if prev is None:
            out.diffs.append(math.nan)
        else:
            out.diffs.append(float(np.max(np.abs(v0 - prev)[mask])))
        prev = v0
    for i, dval in enumerate(out.diffs):
        if i < 2 or out.diffs[i - 1] == 0 or dval == 0:
            out.orders.append(math.nan)
        else:
            out.orders.append(math.log2(out.diffs[i - 1] / dval))
    diffs = out.diffs[1:]
    out.monotone = all(b <= a for a, b in zip(diffs, diffs[1:]))
    return out
