"""Optimal-stopping values by least-squares Monte Carlo (backward induction).

For every surface node ``(t_m, x_j)`` paths are started at ``x_j`` and run to
the horizon; the realised discounted cash flow

    Y = ∫ e^{-∫c} f ds + e^{-∫c} (φ(X_τ) 1_{τ<T} + g(X_T) 1_{τ=T})

is rolled back step by step and, at each exercise date, replaced by ``φ``
where the regressed continuation does not exceed it.  Nodes share random
numbers, so differences across the grid are smooth.
"""
from dataclasses import dataclass, field, replace
import csv
import math

import numpy as np

from ._lsm_kernels import design_matrix, min_norm_solve, normal_equations
from .coefficients import DRIFT_CONSTANT, DriftSpec, JumpCoefficient
from .errors import BasisError, ConfigError, TruncationError
from .jump_sde import SimConfig, build_sampler, exit_indices, simulate_batch

__all__ = ["PricingConfig", "ValueSurface", "StoppingRule", "price_evolution", "price_perpetual",
           "dpp_check", "DppReport", "exercise_boundary", "BoundarySlice"]

LOWER_BOUND_STREAM = 7_000_003
DPP_STREAM = 9_000_011


@dataclass(frozen=True)
class PricingConfig:
    sim: SimConfig
    x_grid: tuple
    t_slices: tuple = (0.0,)
    degree: int = 3
    include_payoff: bool = True
    american: bool = True
    exercise_every: int = 1
    tie_tol: float = 1e-12
    lower_bound_paths: int = 0

    def __post_init__(self):
        if not (0 <= int(self.degree) <= 6):
            raise ConfigError(f"basis degree must be in [0, 6], got {self.degree}")
        if int(self.exercise_every) < 1:
            raise ConfigError("exercise_every must be >= 1")
        if len(self.x_grid) < 1:
            raise ConfigError("x_grid must contain at least one node")

    @property
    def n_basis(self):
        return int(self.degree) + 1 + (1 if self.include_payoff else 0)


@dataclass
class StoppingRule:
    """Regression coefficients per start node and step (``nan``: no exercise test).

    The rule at step ``k`` uses only ``(t_k, X_k)``: exercise iff the fitted
    continuation is at most ``φ + tie``.
    """

    times: np.ndarray
    x_nodes: np.ndarray
    coefs: np.ndarray
    centers: np.ndarray
    basis_spec: dict
    tie: float
    exercise_now: np.ndarray

    def continuation(self, j, k, x, phi):
        z = (x - self.centers[j, k, 0]) / self.centers[j, k, 1]
        p = (phi - self.centers[j, k, 2]) / self.centers[j, k, 3]
        B = design_matrix(z, p, self.basis_spec["degree"], self.basis_spec["include_payoff"])
        return B @ self.coefs[j, k]

    def threshold_table(self, problem, x_scan):
        """Rows ``(node, step, t, threshold)``: largest scanned ``x`` in the exercise set
        (``nan`` when the rule never exercises on the scan)."""
        rows = []
        x_scan = np.asarray(x_scan, float)
        for j in range(self.coefs.shape[0]):
            for k in range(1, self.coefs.shape[1]):
                if np.isnan(self.coefs[j, k, 0]):
                    continue
                t = self.times[k]
                phi = problem.phi(t, x_scan)
                ex = self.continuation(j, k, x_scan, phi) <= phi + self.tie
                if self.basis_spec.get("dead_region"):
                    ex &= phi > 0
                thr = float(x_scan[ex].max()) if ex.any() else math.nan
                rows.append((j, k, t, thr))
        return rows

    def to_csv(self, path, problem, x_scan):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_x", "step", "t", "threshold"])
            for j, k, t, thr in self.threshold_table(problem, x_scan):
                w.writerow([repr(float(self.x_nodes[j])), k, repr(float(t)), repr(thr)])


@dataclass
class ValueSurface:
    grid_t: np.ndarray
    grid_x: np.ndarray
    values: np.ndarray
    std_err: np.ndarray
    exercise: np.ndarray
    meta: dict = field(default_factory=dict)
    problem: object = field(default=None, repr=False)
    rule: StoppingRule = field(default=None, repr=False)
    lower_bound: np.ndarray = None
    lower_bound_se: np.ndarray = None

    def _slice_weights(self, t):
        gt = self.grid_t
        if gt.size == 1:
            return 0, 0, 0.0
        t = min(max(float(t), gt[0]), gt[-1])
        i = int(np.clip(np.searchsorted(gt, t, side="right") - 1, 0, gt.size - 2))
        w = (t - gt[i]) / (gt[i + 1] - gt[i])
        return i, i + 1, w

    def evaluate(self, t, x, with_se=False):
        """Linear interpolation in ``x`` (and ``t``); outside the x-range the obstacle."""
        x = np.asarray(x, dtype=float)
        i0, i1, w = self._slice_weights(t)
        v = (1 - w) * np.interp(x, self.grid_x, self.values[i0]) \
            + w * np.interp(x, self.grid_x, self.values[i1])
        out = (x < self.grid_x[0]) | (x > self.grid_x[-1])
        if self.problem is not None:
            # interpolation can dip below a concave obstacle between nodes
            phi = self.problem.phi(t, x)
            v = np.where(out, phi, np.maximum(v, phi))
        elif out.any():
            raise ConfigError("surface has no problem data for extrapolation")
        if not with_se:
            return v
        se = (1 - w) * np.interp(x, self.grid_x, self.std_err[i0]) \
            + w * np.interp(x, self.grid_x, self.std_err[i1])
        return v, np.where(out, 0.0, se)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "v", "std_err", "exercise"])
            for i, t in enumerate(self.grid_t):
                for j, x in enumerate(self.grid_x):
                    w.writerow([repr(float(t)), repr(float(x)), repr(float(self.values[i, j])),
                                repr(float(self.std_err[i, j])), int(self.exercise[i, j])])


def _tie(problem, x_grid, tie_tol):
    scale = max(1.0, float(np.max(np.abs(problem.phi(0.0, x_grid)))))
    return tie_tol * scale


def _backward(states, offset, m, n, grid, problem, terminal, cfg, tie, dead,
              coefs_in=None, exit_idx=None, exit_value=None):
    """Roll the cash flow back from local step ``n`` to 0.

    Returns the per-path cash flow at the start and, when regressing, the
    coefficient and standardisation arrays of shape ``(n+1, nb)`` / ``(n+1, 4)``.
    Paths with ``exit_idx == k`` take ``exit_value`` at step ``k`` (killed problem).
    """
    nb = cfg.n_basis
    coefs = np.full((n + 1, nb), np.nan)
    centers = np.tile([0.0, 1.0, 0.0, 1.0], (n + 1, 1))

    def X(k):
        return states[:, k] + offset if offset else states[:, k]

    xk1 = X(n)
    Y = np.asarray(terminal(xk1), dtype=float).copy()
    if exit_idx is not None:
        hit = exit_idx == n
        Y[hit] = exit_value(grid[m + n], xk1[hit])
    c_const = problem.c.is_constant
    f_const = problem.f.is_constant
    c1 = problem.c(grid[m + n], xk1) if not c_const else None
    f1 = problem.f(grid[m + n], xk1) if not f_const else None
    cval = float(problem.c(0.0, np.zeros(1))[0]) if c_const else None
    fval = float(problem.f(0.0, np.zeros(1))[0]) if f_const else None
    for k in range(n - 1, -1, -1):
        tk = grid[m + k]
        h = grid[m + k + 1] - tk
        xk = X(k)
        if c_const:
            cbar = cval
        else:
            ck = problem.c(tk, xk)
            cbar = 0.5 * (ck + c1)
            c1 = ck
        disc = np.exp(-h * cbar)
        if f_const:
            fbar = fval
        else:
            fk = problem.f(tk, xk)
            fbar = 0.5 * (fk + f1)
            f1 = fk
        # exact for constant c and f
        Y = fbar * (-np.expm1(-h * cbar)) / cbar + disc * Y if np.any(fbar) else disc * Y
        if exit_idx is not None:
            hit = exit_idx == k
            if hit.any():
                Y[hit] = exit_value(tk, xk[hit])
        if k == 0 or not cfg.american or (m + k) % int(cfg.exercise_every):
            continue
        phik = problem.phi(tk, xk)
        sel = phik > 0 if dead else np.ones(xk.size, dtype=bool)
        if exit_idx is not None:
            sel &= exit_idx > k
        idx = np.nonzero(sel)[0]
        if idx.size == 0:
            continue
        xs, ps = xk[idx], phik[idx]
        if coefs_in is None:
            cen = [xs.mean(), xs.std(), ps.mean(), ps.std()]
            cen[1] = cen[1] if cen[1] > 0 else 1.0
            cen[3] = cen[3] if cen[3] > 0 else 1.0
            z = (xs - cen[0]) / cen[1]
            p = (ps - cen[2]) / cen[3]
            G, r = normal_equations(np.ascontiguousarray(z), np.ascontiguousarray(p),
                                    np.ascontiguousarray(Y[idx]), int(cfg.degree),
                                    bool(cfg.include_payoff))
            if not (np.all(np.isfinite(G)) and np.all(np.isfinite(r))):
                raise BasisError(f"non-finite regression matrix at t = {tk:.6g}")
            coef = min_norm_solve(G, r)
            coefs[k], centers[k] = coef, cen
        else:
            coef, cen = coefs_in[0][k], coefs_in[1][k]
            if np.isnan(coef[0]):
                continue
            z = (xs - cen[0]) / cen[1]
            p = (ps - cen[2]) / cen[3]
        cont = design_matrix(z, p, int(cfg.degree), bool(cfg.include_payoff)) @ coef
        ex = idx[cont <= ps + tie]
        Y[ex] = phik[ex]
    return Y, coefs, centers


def _node_paths(model, drift, jump_coeff, sim, x_grid, sampler):
    """Yield ``(states, offset)`` per node; reuses one batch when the dynamics are
    translation invariant (constant drift and amplitude)."""
    if drift.kind == DRIFT_CONSTANT and jump_coeff.is_constant():
        base = simulate_batch(model, drift, jump_coeff, 0.0, sim, sampler=sampler).states
        for x in x_grid:
            yield base, float(x)
    else:
        for x in x_grid:
            yield simulate_batch(model, drift, jump_coeff, float(x), sim, sampler=sampler).states, 0.0


def _summarise(Y, phi0, tie):
    mean = float(Y.mean())
    se = float(Y.std(ddof=1) / math.sqrt(Y.size)) if Y.size > 1 else 0.0
    if mean <= phi0 + tie:
        return phi0, 0.0, True
    return mean, se, False


def price_evolution(model, drift, jump_coeff, problem, config):
    """Value surface of the finite-horizon problem on ``x_grid × t_slices``."""
    drift = DriftSpec.constant(drift) if isinstance(drift, (int, float)) else drift
    jump_coeff = jump_coeff or JumpCoefficient.constant(1.0)
    T = problem.T
    sim = replace(config.sim, horizon=T, record_jumps=False)
    x_grid = np.asarray(config.x_grid, dtype=float)
    K = sim.n_steps
    grid = np.arange(K + 1) * (T / K)
    grid[-1] = T
    slices = sorted({int(round(t / (T / K))) for t in config.t_slices})
    if slices[0] < 0 or slices[-1] > K:
        raise ConfigError("t_slices must lie in [0, T]")
    problem.check(x_grid, grid[slices])
    tie = _tie(problem, x_grid, config.tie_tol)
    dead = problem.phi.payoff.dead_region
    terminal = problem.terminal
    sampler = build_sampler(model, sim.eps_trunc)
    nt, nx = len(slices), x_grid.size
    values, se, exer = np.zeros((nt, nx)), np.zeros((nt, nx)), np.zeros((nt, nx), dtype=bool)
    nb = config.n_basis
    rule_coefs = np.full((nx, K + 1, nb), np.nan)
    rule_centers = np.zeros((nx, K + 1, 4))
    first = slices[0]
    for j, (states, off) in enumerate(_node_paths(model, drift, jump_coeff, sim, x_grid, sampler)):
        for i, m in enumerate(slices):
            x = x_grid[j]
            if m == K:
                values[i, j] = float(np.asarray(terminal(np.array([x])))[0])
                exer[i, j] = values[i, j] <= float(problem.phi(T, np.array([x]))[0]) + tie
                continue
            n = K - m
            # the batch started at time 0; time homogeneity lets slice m reuse its first n steps
            Y, coefs, cen = _backward(states, off, m, n, grid, problem, terminal, config, tie, dead)
            phi0 = float(problem.phi(grid[m], np.array([x]))[0])
            values[i, j], se[i, j], exer[i, j] = _summarise(Y, phi0, tie)
            if m == first:
                rule_coefs[j, :n + 1], rule_centers[j, :n + 1] = coefs, cen
    n0 = K - first
    rule = StoppingRule(grid[first:], x_grid.copy(), rule_coefs[:, :n0 + 1],
                        rule_centers[:, :n0 + 1],
                        {"degree": int(config.degree), "include_payoff": bool(config.include_payoff),
                         "dead_region": dead, "exercise_every": int(config.exercise_every)},
                        tie, exer[0].copy())
    meta = {"estimator": "lsm", "n_paths": sim.n_paths, "dt": T / K, "seed": sim.seed,
            "eps_trunc": sim.eps_trunc, "trunc_var": sampler.trunc_var, "degree": config.degree,
            "american": config.american, "exercise_every": config.exercise_every, "T": T,
            "backend": "numba" if _uses_numba() else "numpy"}
    surf = ValueSurface(grid[slices], x_grid.copy(), values, se, exer, meta, problem, rule)
    if config.lower_bound_paths:
        surf.lower_bound, surf.lower_bound_se = _lower_bound(model, drift, jump_coeff, problem,
                                                             config, surf, sampler, first)
    return surf


def _uses_numba():
    from . import _backend
    return _backend.use_numba()


def _lower_bound(model, drift, jump_coeff, problem, config, surf, sampler, m):
    """Execute the stored rule on fresh paths (a separate random stream)."""
    T = problem.T
    sim = replace(config.sim, horizon=T, record_jumps=False, n_paths=int(config.lower_bound_paths),
                  stream=config.sim.stream + LOWER_BOUND_STREAM)
    K = sim.n_steps
    grid = np.arange(K + 1) * (T / K)
    grid[-1] = T
    rule = surf.rule
    n = K - m
    lb, lb_se = np.zeros(surf.grid_x.size), np.zeros(surf.grid_x.size)
    paths = _node_paths(model, drift, jump_coeff, sim, surf.grid_x, sampler)
    for j, (states, off) in enumerate(paths):
        x = surf.grid_x[j]
        phi0 = float(problem.phi(grid[m], np.array([x]))[0])
        if rule.exercise_now[j] or n == 0:
            lb[j] = phi0 if n > 0 else surf.values[0, j]
            continue
        Y, _, _ = _backward(states, off, m, n, grid, problem, problem.terminal, config, rule.tie,
                            rule.basis_spec["dead_region"],
                            coefs_in=(rule.coefs[j], rule.centers[j]))
        lb[j] = float(Y.mean())
        lb_se[j] = float(Y.std(ddof=1) / math.sqrt(Y.size))
    return lb, lb_se


def price_perpetual(model, drift, jump_coeff, problem, config):
    """Stationary value via horizons ``T`` and ``2T`` with the obstacle as terminal value.

    Certifies ``|v_T - v_2T| <= 2(‖φ‖ + ‖f‖/c0) e^{-c0 T} + 3 SE`` at every node
    and returns the ``2T`` surface.
    """
    T = problem.T
    p1 = replace(problem, g=None)
    p2 = replace(problem, g=None, T=2 * T)
    cfg = replace(config, t_slices=(0.0,))
    s1 = price_evolution(model, drift, jump_coeff, p1, cfg)
    s2 = price_evolution(model, drift, jump_coeff, p2, replace(cfg, sim=replace(cfg.sim, horizon=2 * T)))
    C = 2.0 * (problem.sup_phi() + problem.sup_f() / problem.c0)
    budget = C * math.exp(-problem.c0 * T)
    comb = np.sqrt(s1.std_err ** 2 + s2.std_err ** 2)
    gap = np.abs(s1.values - s2.values)
    allowed = budget + 3 * comb
    if np.any(gap > allowed):
        j = int(np.argmax(gap - allowed))
        raise TruncationError(
            f"horizon truncation not certified at x = {s2.grid_x[j % s2.grid_x.size]:.6g}: "
            f"|v_T - v_2T| = {gap.flat[j]:.3g} > {allowed.flat[j]:.3g}; increase T")
    s2.meta.update(truncation_constant=C, truncation_budget=budget, horizon_T=T,
                   max_gap=float(gap.max()), gap=gap[0].tolist(), stationary=True)
    s2.problem = replace(problem, g=None, T=2 * T)
    s2.meta["short_values"] = s1.values[0].tolist()
    return s2


@dataclass
class DppReport:
    x: float
    t: float
    radius: float
    w: float
    w_se: float
    v: float
    v_se: float
    residual: float
    combined_se: float
    bias_budget: float
    exit_fraction: float
    no_exit: bool
    passed: bool

    def to_text(self):
        return "\n".join(f"{k}={v}" for k, v in self.__dict__.items())


def dpp_check(model, drift, jump_coeff, problem, x, radius_r, config, surface, t=0.0,
              bias_budget=None):
    """Localised value at ``x`` with the surface as continuation on leaving ``B_r(x)``.

    Nested estimate: outer paths run until the ball exit (or the horizon); a
    fresh regression decides interior stopping.  For the stationary problem the
    surface also continues paths that neither stop nor exit by the simulation
    horizon.
    """
    drift = DriftSpec.constant(drift) if isinstance(drift, (int, float)) else drift
    jump_coeff = jump_coeff or JumpCoefficient.constant(1.0)
    if not (radius_r > 0):
        raise ConfigError("radius must be positive")
    stationary = problem.g is None and bool(surface.meta.get("stationary", False))
    H = config.sim.horizon if stationary else problem.T - t
    if not (H > 0):
        raise ConfigError("no time left before the horizon")
    sim = replace(config.sim, horizon=H, record_jumps=False,
                  stream=config.sim.stream + DPP_STREAM)
    n = sim.n_steps
    grid = t + np.arange(n + 1) * (H / n)
    grid[-1] = t + H
    states = simulate_batch(model, drift, jump_coeff, float(x), sim).states
    e = exit_indices(states, float(x), float(radius_r))
    exited = e >= 0
    e = np.where(exited, e, n + 1)
    # shift to local time so the backward pass can index grid[m + k] with m = 0
    tie = _tie(problem, np.asarray(surface.grid_x), config.tie_tol)
    dead = problem.phi.payoff.dead_region
    if stationary:
        statp = replace(problem, T=t + H)
        terminal = lambda xs: surface.evaluate(t + H, xs)
    else:
        statp = problem
        terminal = problem.terminal
    exit_value = lambda tk, xs: surface.evaluate(tk, xs)
    Y, _, _ = _backward(states, 0.0, 0, n, grid, statp, terminal, config, tie, dead,
                        exit_idx=e, exit_value=exit_value)
    phi0 = float(problem.phi(t, np.array([float(x)]))[0])
    w, w_se, _ = _summarise(Y, phi0, tie)
    v, v_se = surface.evaluate(t, np.array([float(x)]), with_se=True)
    v, v_se = float(v[0]), float(v_se[0])
    comb = math.hypot(w_se, v_se)
    budget = float(surface.meta.get("bias_budget", 0.0) if bias_budget is None else bias_budget)
    residual = abs(w - v)
    passed = residual <= 3 * comb + budget + 1e-12
    return DppReport(float(x), float(t), float(radius_r), w, w_se, v, v_se, residual, comb,
                     budget, float(exited.mean()), not bool(exited.any()), bool(passed))


@dataclass
class BoundarySlice:
    t: float
    components: list
    threshold: float


def exercise_boundary(surface):
    """Connected components of the exercise set per slice, with a threshold when
    the set is a single interval anchored at the left edge."""
    out = []
    xs = surface.grid_x
    for i, t in enumerate(surface.grid_t):
        mask = surface.exercise[i]
        comps = []
        j = 0
        while j < mask.size:
            if mask[j]:
                k = j
                while k + 1 < mask.size and mask[k + 1]:
                    k += 1
                comps.append((float(xs[j]), float(xs[k])))
                j = k + 1
            else:
                j += 1
        thr = comps[0][1] if len(comps) == 1 and comps[0][0] == xs[0] else math.nan
        out.append(BoundarySlice(float(t), comps, thr))
    return out
