"""Drift ``b(x)`` and jump amplitude ``a(x)`` of the state equation.

Both are parametric families so the numba kernels can evaluate them from a
kind code plus a short parameter vector.  ``kind="custom"`` wraps an
arbitrary vectorised callable; such coefficients force the numpy kernels.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterDomainError

DRIFT_CONSTANT = 0
DRIFT_AFFINE = 1
DRIFT_TANH = 2
DRIFT_CLAMPED = 3
DRIFT_CUSTOM = -1

AMP_CONSTANT = 0
AMP_TANH = 1
AMP_CUSTOM = -1


def eval_drift_np(kind, p, x):
    if kind == DRIFT_CONSTANT:
        return np.full_like(x, p[0], dtype=float)
    if kind == DRIFT_AFFINE:
        return p[0] - p[1] * x
    if kind == DRIFT_TANH:
        return p[0] + p[1] * p[3] * np.tanh((x - p[2]) / p[3])
    if kind == DRIFT_CLAMPED:
        return p[0] - p[1] * np.clip(x, p[2], p[3])
    raise ValueError(f"unknown drift kind {kind}")


def eval_amp_np(kind, q, x):
    if kind == AMP_CONSTANT:
        return np.full_like(x, q[0], dtype=float)
    if kind == AMP_TANH:
        return q[0] + q[1] * np.tanh(x - q[2])
    raise ValueError(f"unknown amplitude kind {kind}")


@dataclass(frozen=True)
class DriftSpec:
    """Bounded Lipschitz drift.

    ``lip_beta`` is the Lipschitz constant and ``sup_bound`` the sup-norm
    (``inf`` for the affine family, which is only Lipschitz).
    """

    kind: int
    params: tuple
    lip_beta: float
    sup_bound: float
    func: Optional[Callable] = field(default=None, compare=False, repr=False)
    label: str = ""

    @classmethod
    def constant(cls, b):
        return cls(DRIFT_CONSTANT, (float(b), 0.0, 0.0, 1.0), 0.0, abs(float(b)),
                   label="constant")

    @classmethod
    def affine(cls, b0, kappa):
        """``b(x) = b0 - kappa * x``."""
        return cls(DRIFT_AFFINE, (float(b0), float(kappa), 0.0, 1.0), abs(float(kappa)),
                   float("inf") if kappa != 0 else abs(float(b0)), label="affine")

    @classmethod
    def tanh(cls, b0, slope, center=0.0, width=1.0):
        """``b(x) = b0 + slope * width * tanh((x - center) / width)``."""
        if width <= 0:
            raise ParameterDomainError("tanh drift width must be positive")
        return cls(DRIFT_TANH, (float(b0), float(slope), float(center), float(width)),
                   abs(float(slope)), abs(float(b0)) + abs(float(slope) * width), label="tanh")

    @classmethod
    def clamped(cls, b0, kappa, lo, hi):
        """``b(x) = b0 - kappa * clip(x, lo, hi)``."""
        if hi < lo:
            raise ParameterDomainError("clamped drift needs lo <= hi")
        sup = abs(float(b0)) + abs(float(kappa)) * max(abs(lo), abs(hi))
        return cls(DRIFT_CLAMPED, (float(b0), float(kappa), float(lo), float(hi)),
                   abs(float(kappa)), sup, label="clamped")

    @classmethod
    def custom(cls, func, lip_beta, sup_bound):
        return cls(DRIFT_CUSTOM, (0.0, 0.0, 0.0, 1.0), float(lip_beta), float(sup_bound),
                   func=func, label="custom")

    @property
    def param_array(self):
        return np.asarray(self.params, dtype=np.float64)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == DRIFT_CUSTOM:
            return np.asarray(self.func(x), dtype=float) * np.ones_like(x)
        return eval_drift_np(self.kind, self.param_array, x)

    def is_affine(self):
        return self.kind in (DRIFT_CONSTANT, DRIFT_AFFINE)

    def spot_check(self, lo=-5.0, hi=5.0, n=2000, seed=0):
        """Check the declared Lipschitz and sup bounds on random pairs."""
        rng = np.random.default_rng(seed)
        x1, x2 = rng.uniform(lo, hi, n), rng.uniform(lo, hi, n)
        d = np.abs(self(x1) - self(x2))
        ok_lip = np.all(d <= self.lip_beta * np.abs(x1 - x2) * (1 + 1e-9) + 1e-12)
        ok_sup = np.all(np.abs(self(x1)) <= self.sup_bound * (1 + 1e-9) + 1e-12)
        return bool(ok_lip), bool(ok_sup)

    def to_dict(self):
        return {"kind": self.label, "params": list(self.params),
                "lip_beta": self.lip_beta, "sup_bound": self.sup_bound}


@dataclass(frozen=True)
class JumpCoefficient:
    """Jump amplitude ``a(x)``; the jump of size ``y`` moves the state by ``a(x) * y``."""

    kind: int
    params: tuple
    lip_a: float
    sup_a: float
    func: Optional[Callable] = field(default=None, compare=False, repr=False)
    label: str = ""

    @classmethod
    def constant(cls, a=1.0):
        return cls(AMP_CONSTANT, (float(a), 0.0, 0.0, 0.0), 0.0, abs(float(a)), label="constant")

    @classmethod
    def tanh(cls, a0, a1, center=0.0):
        """``a(x) = a0 + a1 * tanh(x - center)``."""
        return cls(AMP_TANH, (float(a0), float(a1), float(center), 0.0), abs(float(a1)),
                   abs(float(a0)) + abs(float(a1)), label="tanh")

    @classmethod
    def custom(cls, func, lip_a, sup_a):
        return cls(AMP_CUSTOM, (0.0, 0.0, 0.0, 0.0), float(lip_a), float(sup_a), func=func,
                   label="custom")

    @property
    def param_array(self):
        return np.asarray(self.params, dtype=np.float64)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == AMP_CUSTOM:
            return np.asarray(self.func(x), dtype=float) * np.ones_like(x)
        return eval_amp_np(self.kind, self.param_array, x)

    def is_constant(self):
        return self.kind == AMP_CONSTANT

    def to_dict(self):
        return {"kind": self.label, "params": list(self.params),
                "lip_a": self.lip_a, "sup_a": self.sup_a}
