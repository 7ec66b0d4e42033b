"""Empirical Hölder exponents of value surfaces from log-log regressions.

Pairs are taken on a dyadic distance ladder around the point where
regularity binds (the contact boundary, else the payoff kink).  Pairs whose
increment is below the noise floor (three combined standard errors) are
dropped, so a probe can pass or be inconclusive but never certify
irregularity.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import FitError

__all__ = ["HolderFit", "RegularityReport", "holder_fit", "alpha_theory", "spatial_pairs",
           "temporal_pairs", "probe_stationary", "probe_evolution"]

EXPONENT_CAP = 1.5
PASS_MARGIN = 0.1
LIPSCHITZ_LEVEL = 0.9
TIME_LEVEL = 0.4


@dataclass
class HolderFit:
    exponent: float
    constant: float
    r2: float
    pairs_used: int
    raw_slope: float


def holder_fit(distances, increments, noise_floor=0.0, min_pairs=20, min_decades=2.0, window=None,
               groups=None):
    """Slope of ``log|Δv|`` against ``log d`` over the retained pairs.

    ``groups`` labels pair families that share the exponent but not the
    constant; each family then gets its own intercept.
    """
    d = np.asarray(distances, dtype=float)
    dv = np.abs(np.asarray(increments, dtype=float))
    floor = np.broadcast_to(np.asarray(noise_floor, dtype=float), d.shape)
    g = np.zeros(d.shape, dtype=int) if groups is None else np.asarray(groups, dtype=int)
    keep = (d > 0) & (dv > floor) & (dv > 0)
    if window is not None:
        keep &= d <= window
    d, dv, g = d[keep], dv[keep], g[keep]
    if d.size < min_pairs:
        raise FitError(f"only {d.size} pairs above the noise floor (need {min_pairs})")
    span = math.log10(d.max() / d.min())
    if span < min_decades - 1e-9:
        raise FitError(f"retained distances span {span:.2f} decades (need {min_decades})")
    ld, lv = np.log(d), np.log(dv)
    labels = np.unique(g)
    A = np.column_stack([ld] + [(g == k).astype(float) for k in labels])
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    slope, c = coef[0], coef[1]
    resid = lv - A @ coef
    ss = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 if ss == 0 else 1.0 - float(np.sum(resid ** 2)) / ss
    return HolderFit(float(min(slope, EXPONENT_CAP)), float(math.exp(c)), r2, int(d.size),
                     float(slope))


def alpha_theory(c0, beta):
    """``min(1, c0/β)``, with ``β = 0`` read as an infinite ratio."""
    if beta == 0:
        return 1.0
    return min(1.0, c0 / beta)


@dataclass
class RegularityReport:
    alpha_hat_x: float
    alpha_theory: float
    alpha_hat_t: float
    fit_r2: float
    pairs_used: int
    pass_flags: dict
    inconclusive: bool = False
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.pass_flags) and all(self.pass_flags.values())

    def as_flat(self):
        out = {"alpha_hat_x": self.alpha_hat_x, "alpha_theory": self.alpha_theory,
               "alpha_hat_t": self.alpha_hat_t, "fit_r2": self.fit_r2,
               "pairs_used": self.pairs_used, "inconclusive": self.inconclusive}
        out.update({f"pass.{k}": v for k, v in self.pass_flags.items()})
        return out

    def to_text(self):
        return "\n".join(f"{k}={v}" for k, v in self.as_flat().items())

    def csv_header(self):
        return ",".join(self.as_flat())

    def to_csv_row(self):
        return ",".join(str(v) for v in self.as_flat().values())


def _ladder(d0, dmax):
    out, d = [], d0
    while d <= dmax * (1 + 1e-12):
        out.append(d)
        d *= 2.0
    return np.array(out)


def _center_index(grid_x, exercise_row, kink_x=None):
    """Contact boundary if the slice has one, else the nearest node to the kink."""
    edges = np.nonzero(exercise_row[1:] != exercise_row[:-1])[0]
    # flips next to the box edges come from the boundary rows, not a free boundary
    edges = edges[(edges > 0) & (edges < grid_x.size - 2)]
    if edges.size:
        if kink_x is None:
            return int(edges[0])
        return int(edges[np.argmin(np.abs(grid_x[edges] - kink_x))])
    if kink_x is not None:
        return int(np.argmin(np.abs(grid_x - kink_x)))
    return grid_x.size // 2


def spatial_pairs(xs, vs, ses, ic, window=0.25, n_centers=5):
    """``(d, |Δv|, floor)`` on a dyadic ladder both sides of node ``ic``."""
    dx = float(np.min(np.diff(xs)))
    ds = _ladder(dx, window)
    rows = set()
    for off in range(-(n_centers // 2), n_centers // 2 + 1):
        i = ic + off
        if not 0 <= i < xs.size:
            continue
        for d in ds:
            for sgn in (-1.0, 1.0):
                j = int(np.argmin(np.abs(xs - (xs[i] + sgn * d))))
                if j != i:
                    rows.add((min(i, j), max(i, j)))
    rows = sorted(rows)
    a = np.array([r[0] for r in rows])
    b = np.array([r[1] for r in rows])
    dist = xs[b] - xs[a]
    inc = vs[b] - vs[a]
    scale = max(1.0, float(np.max(np.abs(vs))))
    floor = 3.0 * np.hypot(ses[a], ses[b]) + 1e-11 * scale
    return dist, inc, floor


def temporal_pairs(ts, col, se_col, n_refs=3, window=0.25):
    """Pairs ``(T - (1+ρ)h, T - ρh)`` for ``ρ = 0..n_refs-1`` and dyadic ``h``.

    Every family is anchored at the final time, where the terminal kink sits,
    so a power law in the time to go gives an exact power law in ``h`` per
    family.  Returns ``(d, Δv, floor, family)``.
    """
    dt = float(np.min(np.diff(ts)))
    hs = _ladder(dt, window)
    span = ts[-1] - ts[0]
    rows = {}
    for rho in range(n_refs):
        for h in hs:
            if (1 + rho) * h > span * (1 + 1e-12):
                break
            i = int(np.argmin(np.abs(ts - (ts[-1] - rho * h))))
            j = int(np.argmin(np.abs(ts - (ts[-1] - (1 + rho) * h))))
            if j != i:
                rows.setdefault((min(i, j), max(i, j)), rho)
    keys = sorted(rows)
    a = np.array([k[0] for k in keys])
    b = np.array([k[1] for k in keys])
    fam = np.array([rows[k] for k in keys])
    scale = max(1.0, float(np.max(np.abs(col))))
    return (ts[b] - ts[a], col[b] - col[a], 3.0 * np.hypot(se_col[a], se_col[b]) + 1e-11 * scale,
            fam)


def _kink(surface):
    prob = surface.problem
    if prob is None or prob.phi.payoff.kind not in ("put", "call"):
        return None
    return math.log(prob.phi.payoff.params[0])


def probe_stationary(surface, problem, drift, window=0.25):
    """Spatial exponent of a stationary surface against ``min(1, c0/β)``."""
    a_th = alpha_theory(problem.c0, drift.lip_beta)
    row = np.asarray(surface.values[0])
    ic = _center_index(surface.grid_x, np.asarray(surface.exercise[0]), _kink(surface))
    d, dv, fl = spatial_pairs(surface.grid_x, row, np.asarray(surface.std_err[0]), ic, window)
    try:
        fit = holder_fit(d, dv, fl)
    except FitError as exc:
        return RegularityReport(math.nan, a_th, math.nan, math.nan, 0, {}, True,
                                {"reason": str(exc)})
    flags = {"x_holder": fit.exponent >= a_th - PASS_MARGIN}
    if problem.c0 >= drift.lip_beta:
        flags["x_lipschitz"] = fit.exponent >= LIPSCHITZ_LEVEL
    return RegularityReport(fit.exponent, a_th, math.nan, fit.r2, fit.pairs_used, flags, False,
                            {"raw_slope": fit.raw_slope, "center_x": float(surface.grid_x[ic])})


def probe_evolution(surface, n_slices=5, window=0.25, t_window=0.5, x_band=0.05):
    """Median spatial exponents over time slices and temporal exponents over space slices."""
    ts, xs = np.asarray(surface.grid_t), np.asarray(surface.grid_x)
    vals, ses = np.asarray(surface.values), np.asarray(surface.std_err)
    kink = _kink(surface)
    sx, sx_r2, sx_n, reasons = [], [], [], []
    t_idx = np.unique(np.linspace(0, ts.size - 2, n_slices).round().astype(int)) if ts.size > 1 \
        else np.array([0])
    for i in t_idx:
        ic = _center_index(xs, np.asarray(surface.exercise[i]), kink)
        try:
            fit = holder_fit(*spatial_pairs(xs, vals[i], ses[i], ic, window))
            sx.append(fit.exponent)
            sx_r2.append(fit.r2)
            sx_n.append(fit.pairs_used)
        except FitError as exc:
            reasons.append(f"t={ts[i]:.4g}: {exc}")
    st, st_r2, st_n = [], [], []
    if ts.size > 2:
        xc = kink if kink is not None else xs[_center_index(xs, np.asarray(surface.exercise[-2]))]
        for xq in np.linspace(xc - x_band, xc + x_band, n_slices):
            j = int(np.argmin(np.abs(xs - xq)))
            try:
                d, dv, fl, fam = temporal_pairs(ts, vals[:, j], ses[:, j], window=t_window)
                fit = holder_fit(d, dv, fl, groups=fam)
                st.append(fit.exponent)
                st_r2.append(fit.r2)
                st_n.append(fit.pairs_used)
            except FitError as exc:
                reasons.append(f"x={xs[j]:.4g}: {exc}")
    flags = {}
    ax = float(np.median(sx)) if sx else math.nan
    at = float(np.median(st)) if st else math.nan
    if sx:
        flags["x_lipschitz"] = ax >= LIPSCHITZ_LEVEL
    if st:
        flags["t_half"] = at >= TIME_LEVEL
    r2 = float(np.median(sx_r2 + st_r2)) if (sx_r2 or st_r2) else math.nan
    return RegularityReport(ax, 1.0, at, r2, int(sum(sx_n) + sum(st_n)), flags, not flags,
                            {"x_slices": sx, "t_slices": st, "reasons": reasons})
