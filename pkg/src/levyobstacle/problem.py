"""Obstacle-problem data: discount ``c``, running reward ``f``, obstacle ``φ``, terminal ``g``.

States are log-prices, so the put payoff is ``(K - e^x)^+``.  Each primitive
knows its Lipschitz constant and sup-norm on a box, which feeds the
certificates in the stopping and regularity modules.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import ConfigError, PreconditionError

__all__ = ["Payoff", "Field", "ProblemData", "put", "call", "constant", "affine_clamped",
           "table", "payoff_from_dict"]

PAYOFF_KINDS = ("put", "call", "constant", "affine", "table")


@dataclass(frozen=True)
class Payoff:
    """A function of the state alone.

    ``put``: ``(K - e^x)^+``; ``call``: ``(e^x - K)^+``; ``constant``: ``k``;
    ``affine``: ``clip(a + s x, lo, hi)``; ``table``: linear interpolation of
    ``(xs, ys)`` with flat extrapolation.
    """

    kind: str
    params: tuple
    xs: tuple = ()
    ys: tuple = ()

    def __post_init__(self):
        if self.kind not in PAYOFF_KINDS:
            raise ConfigError(f"unknown payoff kind {self.kind!r}")
        if self.kind == "table":
            xs = np.asarray(self.xs, float)
            if xs.size < 2 or np.any(np.diff(xs) <= 0) or len(self.ys) != xs.size:
                raise ConfigError("table payoff needs >= 2 strictly increasing nodes")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "put":
            return np.maximum(self.params[0] - np.exp(x), 0.0)
        if k == "call":
            return np.maximum(np.exp(x) - self.params[0], 0.0)
        if k == "constant":
            return np.full_like(x, self.params[0])
        if k == "affine":
            a, s, lo, hi = self.params
            return np.clip(a + s * x, lo, hi)
        return np.interp(x, np.asarray(self.xs), np.asarray(self.ys))

    @property
    def dead_region(self):
        """True when the payoff vanishes on part of the line (regress on ``φ > 0`` only)."""
        return self.kind in ("put", "call")

    def sup_norm(self, lo=-math.inf, hi=math.inf):
        k = self.kind
        if k == "put":
            return float(self.params[0])
        if k == "call":
            return math.inf if math.isinf(hi) else max(math.exp(hi) - self.params[0], 0.0)
        if k == "constant":
            return abs(self.params[0])
        if k == "affine":
            a, s, lo_c, hi_c = self.params
            return max(abs(lo_c), abs(hi_c)) if s != 0 else abs(min(max(a, lo_c), hi_c))
        return float(np.max(np.abs(self.ys)))

    def lipschitz(self, lo=-math.inf, hi=math.inf):
        k = self.kind
        if k == "put":
            return float(self.params[0])
        if k == "call":
            return math.inf if math.isinf(hi) else math.exp(hi)
        if k == "constant":
            return 0.0
        if k == "affine":
            return abs(self.params[1])
        return float(np.max(np.abs(np.diff(self.ys) / np.diff(self.xs))))

    def shifted(self, delta):
        """Payoff plus a constant (only for constant and table payoffs)."""
        if self.kind == "constant":
            return Payoff("constant", (self.params[0] + delta,))
        if self.kind == "table":
            return Payoff("table", (), self.xs, tuple(np.asarray(self.ys) + delta))
        if self.kind == "affine":
            a, s, lo, hi = self.params
            return Payoff("affine", (a + delta, s, lo + delta, hi + delta))
        raise ConfigError(f"cannot shift a {self.kind} payoff by a constant")

    def to_dict(self):
        d = {"kind": self.kind, "params": list(self.params)}
        if self.kind == "table":
            d.update(xs=list(self.xs), ys=list(self.ys))
        return d


def put(K):
    return Payoff("put", (float(K),))


def call(K):
    return Payoff("call", (float(K),))


def constant(k):
    return Payoff("constant", (float(k),))


def affine_clamped(a, s, lo=-math.inf, hi=math.inf):
    return Payoff("affine", (float(a), float(s), float(lo), float(hi)))


def table(xs, ys):
    return Payoff("table", (), tuple(map(float, xs)), tuple(map(float, ys)))


def payoff_from_dict(d):
    kind = d["kind"]
    if kind == "table":
        return table(d["xs"], d["ys"])
    return Payoff(kind, tuple(float(p) for p in d.get("params", ())))


@dataclass(frozen=True)
class Field:
    """``(t, x) ↦ offset + e^{rate (t_ref - t)} · payoff(x)``.

    The exponential factor carries the time dependence needed for
    discount-shifted problems; ``rate = 0`` gives a time-independent field.
    """

    payoff: Payoff
    rate: float = 0.0
    t_ref: float = 0.0
    offset: float = 0.0

    @classmethod
    def of(cls, value):
        if isinstance(value, Field):
            return value
        if isinstance(value, Payoff):
            return cls(value)
        return cls(constant(float(value)))

    def __call__(self, t, x):
        base = self.payoff(x)
        if self.rate != 0.0:
            base = base * np.exp(self.rate * (self.t_ref - np.asarray(t, dtype=float)))
        return base + self.offset if self.offset else base

    @property
    def time_dependent(self):
        return self.rate != 0.0

    @property
    def is_constant(self):
        return self.payoff.kind == "constant" and self.rate == 0.0

    def scale_bound(self, T):
        """``max_t e^{rate (t_ref - t)}`` over ``[0, T]``."""
        if self.rate == 0.0:
            return 1.0
        return max(math.exp(self.rate * self.t_ref), math.exp(self.rate * (self.t_ref - T)))

    def sup_norm(self, T, lo=-math.inf, hi=math.inf):
        return abs(self.offset) + self.scale_bound(T) * self.payoff.sup_norm(lo, hi)

    def lipschitz(self, T, lo=-math.inf, hi=math.inf):
        return self.scale_bound(T) * self.payoff.lipschitz(lo, hi)

    def to_dict(self):
        return {"payoff": self.payoff.to_dict(), "rate": self.rate, "t_ref": self.t_ref,
                "offset": self.offset}


@dataclass(frozen=True)
class ProblemData:
    """Data of ``min{-v_t - Lv + cv - f, v - φ} = 0`` with ``v(T) = g``.

    For the stationary problem ``g`` is ``None`` and ``T`` is the working
    truncation horizon.
    """

    c: Field
    f: Field
    phi: Field
    g: Payoff = None
    T: float = 1.0
    c0: float = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "c", Field.of(self.c))
        object.__setattr__(self, "f", Field.of(self.f))
        object.__setattr__(self, "phi", Field.of(self.phi))
        if self.T <= 0:
            raise ConfigError(f"horizon T must be positive, got {self.T}")
        if self.c0 is None:
            c = self.c
            if c.payoff.kind != "constant" or c.rate != 0.0:
                raise ConfigError("c0 must be given for non-constant discount")
            object.__setattr__(self, "c0", float(c.offset + c.payoff.params[0]))
        if not (self.c0 > 0):
            raise PreconditionError(f"discount floor c0 must be positive, got {self.c0}",
                                    tag="discount-floor")

    @property
    def terminal(self):
        """Terminal payoff; the obstacle at ``T`` when no ``g`` is set."""
        if self.g is not None:
            return lambda x: self.g(x)
        return lambda x: self.phi(self.T, x)

    def check(self, x_grid, t_grid=None):
        """Discount floor and ``g >= φ(T)`` on the working grid; raises with the node."""
        x = np.asarray(x_grid, float)
        ts = np.asarray([0.0, self.T] if t_grid is None else t_grid, float)
        for t in ts:
            cv = self.c(t, x)
            bad = np.nonzero(cv < self.c0 * (1 - 1e-12))[0]
            if bad.size:
                j = bad[0]
                raise PreconditionError(
                    f"discount c({t:g}, {x[j]:.6g}) = {cv[j]:.6g} below floor c0 = {self.c0:g}",
                    tag="discount-floor")
        if self.g is not None:
            gap = self.g(x) - self.phi(self.T, x)
            bad = np.nonzero(gap < -1e-12 * max(1.0, float(np.max(np.abs(self.g(x))))))[0]
            if bad.size:
                j = bad[0]
                raise PreconditionError(
                    f"terminal value below obstacle at x = {x[j]:.6g}: g - φ(T) = {gap[j]:.3g}",
                    tag="terminal-compatibility")

    def sup_phi(self, lo=-math.inf, hi=math.inf):
        return self.phi.sup_norm(self.T, lo, hi)

    def sup_f(self, lo=-math.inf, hi=math.inf):
        return self.f.sup_norm(self.T, lo, hi)

    def sup_c(self, lo=-math.inf, hi=math.inf):
        return self.c.sup_norm(self.T, lo, hi)

    def discount_shifted(self, lam):
        """Data for ``w = e^{-λ(T-t)} v``: ``(c + λ, e^{-λ(T-t)} f, e^{-λ(T-t)} φ, g)``."""
        def scaled(fld):
            if fld.offset:
                raise ConfigError("cannot discount-shift a field with an offset")
            return replace(fld, rate=fld.rate - lam, t_ref=self.T if fld.rate == 0 else fld.t_ref)
        for fld in (self.f, self.phi):
            if fld.rate != 0 and fld.t_ref != self.T:
                raise ConfigError("discount shift needs fields referenced to the horizon")
        return replace(self, c=replace(self.c, offset=self.c.offset + lam),
                       f=scaled(self.f), phi=scaled(self.phi), c0=self.c0 + lam)

    def to_dict(self):
        return {"c": self.c.to_dict(), "f": self.f.to_dict(), "phi": self.phi.to_dict(),
                "g": None if self.g is None else self.g.to_dict(), "T": self.T, "c0": self.c0}
