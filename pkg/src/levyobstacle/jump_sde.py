"""Simulation of the jump SDE ``dX = b(X-) dt + ∫ a(X-) y Ñ(dt, dy)``.

Jumps with ``|y| >= eps_trunc`` arrive at exact exponential event times with
rate ``λ(ε) = ν(|y| >= ε)``; their marks are drawn by inverse CDF from a
tabulated, log-spaced version of the restricted measure.  Between events
the state follows ``dX = [b(X) - a(X) m(ε)] dt`` where ``m(ε)`` is the
compensator of the retained jumps.  Smaller jumps are dropped; their
compensated variance is reported as ``trunc_var``.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import math
import struct

import numpy as np

from . import _backend
from ._quadrature import gauss_legendre
from ._sim_kernels import count_events_nb, count_events_np, simulate_nb, simulate_np
from .coefficients import DRIFT_CUSTOM, AMP_CUSTOM, DriftSpec, JumpCoefficient
from .errors import ConfigError, ParameterDomainError, SimulationBlowupError, UsageError
from .levy_models import levy_density, truncated_moments
from .rng import path_keys

__all__ = ["SimConfig", "JumpSampler", "PathBatch", "build_sampler", "simulate_batch",
           "simulate_coupled", "vg_exact_increment", "exit_time", "exit_indices",
           "moment_probe", "MomentProbeResult", "coupling_violations", "read_binary"]

BINARY_MAGIC = b"LOPB"
BINARY_VERSION = 1


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    eps_trunc: float = 1e-3
    horizon: float = 1.0
    n_paths: int = 10_000
    seed: int = 20240611
    couple: bool = True
    record_jumps: bool = True
    stream: int = 0
    trunc_tol: float = 1e-3
    max_events_per_path: float = 1e6
    workers: int = 1

    def __post_init__(self):
        if not (self.dt > 0):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not (self.horizon > 0):
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if int(self.n_paths) < 1:
            raise ConfigError(f"n_paths must be >= 1, got {self.n_paths}")
        if not (self.eps_trunc > 0):
            raise ConfigError(f"eps_trunc must be positive, got {self.eps_trunc}")

    @property
    def n_steps(self):
        return max(1, int(math.ceil(self.horizon / self.dt - 1e-9)))


@dataclass(frozen=True)
class JumpSampler:
    """Inverse-CDF table of the measure restricted to ``|y| >= eps``.

    ``cum`` holds cumulative cell masses; within cell ``j`` the log-magnitude
    is interpolated linearly from ``s0[j]`` to ``s1[j]``.
    """

    eps: float
    rate: float
    cum: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    sgn: np.ndarray
    compensator: float
    compensator_quadrature: float
    trunc_var: float

    def mean_of(self, func, order=8):
        """``λ · E[func(Y)]`` under the tabulated mark distribution."""
        if self.rate == 0:
            return 0.0
        t, w = gauss_legendre(order)
        frac = 0.5 * (t + 1.0)
        s = self.s0[:, None] + frac[None, :] * (self.s1 - self.s0)[:, None]
        vals = func(self.sgn[:, None] * np.exp(s))
        mass = np.diff(self.cum)
        return float(np.sum(mass * (0.5 * vals @ w)))

    def sample(self, u):
        from ._sim_kernels import _mark_np
        return _mark_np(np.asarray(u, float), self.cum, self.s0, self.s1, self.sgn)


def _tail_cap(model, side):
    if model.kind == "tabulated":
        xs, _ = model.table(side)
        return float(xs[-1]) if xs.size else 0.0
    rate = model.tail_rate(side)
    if rate > 0:
        return 1.0 + 52.0 / rate
    return 1e8


def build_sampler(model, eps, n_cells=4096):
    """Tabulate the restricted measure on log-spaced cells (order-8 GL per cell)."""
    lam_q, m_q, var_q = truncated_moments(model, eps)
    if model.is_empty() or lam_q == 0.0:
        z = np.zeros(1)
        return JumpSampler(eps, 0.0, np.zeros(2), z, z, np.ones(1), 0.0, 0.0, var_q)
    t, w = gauss_legendre(8)
    cums, s0s, s1s, sgns = [], [], [], []
    for side in (-1, 1):
        lo = eps
        if model.kind == "tabulated":
            xs, _ = model.table(side)
            if xs.size == 0:
                continue
            lo = max(eps, float(xs[0]))
        hi = _tail_cap(model, side)
        if hi <= lo:
            continue
        edges = np.linspace(math.log(lo), math.log(hi), n_cells + 1)
        a, b = edges[:-1], edges[1:]
        half = 0.5 * (b - a)
        s = 0.5 * (a + b)[:, None] + half[:, None] * t[None, :]
        y = side * np.exp(s)
        mass = (half[:, None] * w[None, :] * levy_density(model, y) * np.exp(s)).sum(axis=1)
        if side < 0:
            # negative side ordered from the far tail towards -eps
            mass, a, b = mass[::-1], b[::-1], a[::-1]
        cums.append(mass)
        s0s.append(a)
        s1s.append(b)
        sgns.append(np.full(mass.size, float(side)))
    mass = np.concatenate(cums)
    cum = np.concatenate(([0.0], np.cumsum(mass)))
    smp = JumpSampler(eps, float(cum[-1]), cum, np.concatenate(s0s), np.concatenate(s1s),
                      np.concatenate(sgns), 0.0, m_q, var_q)
    comp = smp.mean_of(lambda v: v)
    return replace(smp, compensator=comp)


@dataclass
class PathBatch:
    grid: np.ndarray
    states: np.ndarray
    jump_ptr: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    seed_trace: np.ndarray
    x0: float
    config: SimConfig
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.states.shape[0]

    @property
    def has_jumps_recorded(self):
        return self.jump_ptr.size == self.n_paths + 1

    def jumps_of(self, i):
        if not self.has_jumps_recorded:
            raise UsageError("jump lists were not recorded (record_jumps=False)")
        a, b = self.jump_ptr[i], self.jump_ptr[i + 1]
        return self.jump_times[a:b], self.jump_marks[a:b]

    def to_csv(self, path):
        n, m = self.states.shape
        rows = np.column_stack([np.repeat(np.arange(n), m), np.tile(self.grid, n),
                                self.states.ravel()])
        np.savetxt(path, rows, delimiter=",", header="path,t,x", comments="",
                   fmt=["%d", "%.17g", "%.17g"])

    def to_binary(self, path):
        """Little-endian dump: header ``LOPB``, version, counts, seed, then float64
        grid/states/jump times/jump marks and uint64 jump pointers/keys."""
        n, m = self.states.shape
        nj = self.jump_times.size
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC)
            fh.write(struct.pack("<IQQQQ", BINARY_VERSION, n, m, nj, self.config.seed))
            fh.write(struct.pack("<d", self.x0))
            for arr in (self.grid, self.states, self.jump_times, self.jump_marks):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
            ptr = self.jump_ptr if self.has_jumps_recorded else np.zeros(n + 1, np.uint64)
            fh.write(np.ascontiguousarray(ptr, dtype="<u8").tobytes())
            fh.write(np.ascontiguousarray(self.seed_trace, dtype="<u8").tobytes())


def read_binary(path):
    """Inverse of :meth:`PathBatch.to_binary`; returns a dict of arrays."""
    with open(path, "rb") as fh:
        if fh.read(4) != BINARY_MAGIC:
            raise UsageError(f"{path}: not a path-batch dump")
        version, n, m, nj, seed = struct.unpack("<IQQQQ", fh.read(36))
        x0, = struct.unpack("<d", fh.read(8))
        f8 = lambda k: np.frombuffer(fh.read(8 * k), dtype="<f8").copy()
        grid, states = f8(m), f8(n * m).reshape(n, m)
        jt, jy = f8(nj), f8(nj)
        jptr = np.frombuffer(fh.read(8 * (n + 1)), dtype="<u8").copy()
        keys = np.frombuffer(fh.read(8 * n), dtype="<u8").copy()
    return {"version": version, "seed": seed, "x0": x0, "grid": grid, "states": states,
            "jump_times": jt, "jump_marks": jy, "jump_ptr": jptr, "seed_trace": keys}


def _run_kernel(sampler, drift, jump_coeff, keys, x0s, n_steps, dtg, horizon, record, workers):
    n = keys.size
    states = np.empty((n, n_steps + 1))
    exact = drift.is_affine() and jump_coeff.is_constant()
    numba_ok = (_backend.use_numba() and drift.kind != DRIFT_CUSTOM
                and jump_coeff.kind != AMP_CUSTOM)
    lam = sampler.rate
    if record:
        if numba_ok:
            counts = np.empty(n, dtype=np.int64)
            count_events_nb(keys, lam, horizon, counts)
        else:
            counts = count_events_np(keys, lam, horizon)
        jptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    else:
        jptr = np.zeros(1, dtype=np.int64)
    nj = int(jptr[-1]) if record else 0
    jt, jy = np.empty(max(nj, 1)), np.empty(max(nj, 1))
    args = (n_steps, dtg, horizon, lam, sampler.cum, sampler.s0, sampler.s1, sampler.sgn,
            drift.kind, drift.param_array, jump_coeff.kind, jump_coeff.param_array,
            sampler.compensator, exact)
    if numba_ok:
        bad = np.array([-1, -1], dtype=np.int64)
        chunks = np.array_split(np.arange(n), max(1, min(int(workers or 1), n)))

        def work(idx):
            if idx.size == 0:
                return
            sl = slice(idx[0], idx[-1] + 1)
            bad_local = np.array([-1, -1], dtype=np.int64)
            # pointer offsets are global, so pass the full jump arrays
            jp = jptr[sl.start:sl.stop + 1] if record else jptr
            simulate_nb(keys[sl], x0s[sl], *args, states[sl], record, jp, jt, jy, bad_local)
            if bad_local[0] >= 0 and bad[0] < 0:
                bad[0], bad[1] = bad_local[0] + sl.start, bad_local[1]

        if len(chunks) == 1:
            work(chunks[0])
        else:
            with ThreadPoolExecutor(len(chunks)) as ex:
                list(ex.map(work, chunks))
    else:
        drift_fn = drift.func if drift.kind == DRIFT_CUSTOM else None
        amp_fn = jump_coeff.func if jump_coeff.kind == AMP_CUSTOM else None
        # overflow is reported below as a blow-up, not as a floating-point warning
        with np.errstate(over="ignore", invalid="ignore"):
            simulate_np(keys, x0s, *args, states, record, jptr, jt, jy, drift_fn, amp_fn)
        bad = np.array([-1, -1])
        nonfinite = ~np.isfinite(states)
        if nonfinite.any():
            i, k = np.argwhere(nonfinite)[0]
            bad = np.array([i, k])
    return states, jptr, jt[:nj], jy[:nj], bad, ("numba" if numba_ok else "numpy")


def simulate_batch(model, drift, jump_coeff, x0, config, sampler=None):
    """Simulate ``config.n_paths`` paths of the state process from ``x0``.

    Paths are keyed by ``(seed, stream, path index)`` so identical inputs
    reproduce the batch bit for bit, whatever the worker count.
    """
    jump_coeff = jump_coeff or JumpCoefficient.constant(1.0)
    if isinstance(drift, (int, float)):
        drift = DriftSpec.constant(drift)
    if sampler is None:
        sampler = build_sampler(model, config.eps_trunc)
    if sampler.trunc_var > config.trunc_tol:
        raise ConfigError(
            f"eps_trunc={config.eps_trunc:g} drops small-jump variance {sampler.trunc_var:.3g}"
            f" > trunc_tol={config.trunc_tol:g}", tag="truncation")
    if sampler.rate * config.horizon > config.max_events_per_path:
        raise ConfigError(
            f"jump rate λ(ε)={sampler.rate:.3g} gives {sampler.rate * config.horizon:.3g} events"
            " per path; raise eps_trunc", tag="jump-rate")
    n = int(config.n_paths)
    keys = path_keys(config.seed, n, stream=config.stream)
    K = config.n_steps
    dtg = config.horizon / K
    x0s = np.full(n, float(x0))
    states, jptr, jt, jy, bad, used = _run_kernel(sampler, drift, jump_coeff, keys, x0s, K, dtg,
                                                  config.horizon, config.record_jumps,
                                                  config.workers)
    grid = np.arange(K + 1) * dtg
    grid[-1] = config.horizon
    if bad[0] >= 0:
        raise SimulationBlowupError(
            f"non-finite state on path {int(bad[0])} at t={grid[int(bad[1])]:.6g}")
    meta = {"rate": sampler.rate, "compensator": sampler.compensator,
            "compensator_quadrature": sampler.compensator_quadrature,
            "trunc_var": sampler.trunc_var, "backend": used, "stream": config.stream}
    return PathBatch(grid, states, jptr if config.record_jumps else np.zeros(0, np.int64),
                     jt, jy, keys, float(x0), config, meta)


def simulate_coupled(model, drift, jump_coeff, x0s, config):
    """One batch per initial point; with ``couple=True`` they share jump streams."""
    sampler = build_sampler(model, config.eps_trunc)
    out = []
    for j, x0 in enumerate(x0s):
        cfg = config if config.couple else replace(config, stream=config.stream + j + 1)
        out.append(simulate_batch(model, drift, jump_coeff, x0, cfg, sampler=sampler))
    return out


def vg_exact_increment(params, drift_b, dt, rng, size=None):
    """Exact increment of the compensated VG process with drift ``drift_b``.

    ``b dt + θ(G - dt) + σ √G Z`` with ``G ~ Gamma(dt/ν, ν)``; mean ``b dt``.
    """
    if not (dt > 0):
        raise ParameterDomainError(f"dt must be positive, got {dt}")
    g = rng.gamma(dt / params.nu, params.nu, size=size)
    z = rng.standard_normal(size=size)
    return drift_b * dt + params.theta * (g - dt) + params.sigma * np.sqrt(g) * z


def exit_indices(states, center, radius):
    """First grid index with ``|X - center| >= radius`` per path (-1: never)."""
    if not (radius > 0):
        raise ParameterDomainError("radius must be positive")
    out_ = np.abs(np.atleast_2d(states) - center) >= radius
    first = np.argmax(out_, axis=1)
    return np.where(out_.any(axis=1), first, -1)


def exit_time(path, center_x, radius_r):
    """First grid index at which ``path`` leaves the ball, or ``None``."""
    k = int(exit_indices(np.asarray(path, float)[None, :], center_x, radius_r)[0])
    return None if k < 0 else k


def coupling_violations(batch1, batch2, beta, rtol=1e-12):
    """Grid points where ``|X¹ - X²|(t) > |x₁ - x₂| e^{βt}``."""
    d0 = abs(batch1.x0 - batch2.x0)
    bound = d0 * np.exp(beta * batch1.grid)
    diff = np.abs(batch1.states - batch2.states)
    return int(np.count_nonzero(diff > bound * (1 + rtol) + 1e-300))


@dataclass
class MomentProbeResult:
    mode: str
    lags: np.ndarray
    estimates: np.ndarray
    std_errs: np.ndarray
    constant: float
    growth: float
    r2: float
    envelope_constant: float


def _linfit(x, y):
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = np.sum((y - y.mean()) ** 2)
    # a flat profile is fitted exactly; rounding noise must not define R²
    if ss <= 1e-24 * max(1.0, float(np.sum(y ** 2))):
        return coef, 1.0
    r2 = 1.0 - np.sum(resid ** 2) / ss
    return coef, float(r2)


def _dyadic_indices(K):
    idx, k = [], 1
    while k <= K:
        idx.append(k)
        k *= 2
    return np.array(idx)


def moment_probe(batches, mode="temporal", start_index=0):
    """Second-moment envelopes of the state process.

    ``spatial``: a coupled pair; estimates ``E[max_{s<=t} |X¹ - X²|²]`` on a
    dyadic time sweep and fits ``log(E / |x₁-x₂|²) = log C + G t``.
    ``temporal``: one batch; estimates ``E[max_{r in [s, s+h]} |X(r) - X(s)|²]``
    on dyadic lags ``h`` and fits ``log E = log C + p log(h ∨ h²)``.
    """
    if mode == "spatial":
        if not isinstance(batches, (tuple, list)) or len(batches) != 2:
            raise UsageError("spatial moment probe needs a pair of batches")
        b1, b2 = batches
        if not np.array_equal(b1.seed_trace, b2.seed_trace) or b1.states.shape != b2.states.shape:
            raise UsageError("spatial moment probe needs a coupled pair (shared jump streams)")
        diff2 = (b1.states - b2.states) ** 2
        run = np.maximum.accumulate(diff2, axis=1)
        idx = _dyadic_indices(run.shape[1] - 1)
        est = run[:, idx].mean(axis=0)
        se = run[:, idx].std(axis=0, ddof=1) / math.sqrt(run.shape[0]) if run.shape[0] > 1 \
            else np.zeros(idx.size)
        t = b1.grid[idx]
        d2 = (b1.x0 - b2.x0) ** 2
        if d2 == 0 or np.all(est == 0):
            return MomentProbeResult("spatial", t, est, se, 0.0, 0.0, 1.0, 0.0)
        (logc, g), r2 = _linfit(t, np.log(est / d2))
        env = float(np.max(est / d2 * np.exp(-g * t)))
        return MomentProbeResult("spatial", t, est, se, float(math.exp(logc)), float(g), r2, env)
    if mode != "temporal":
        raise UsageError(f"unknown moment probe mode {mode!r}")
    b = batches[0] if isinstance(batches, (tuple, list)) else batches
    s = int(start_index)
    inc2 = (b.states[:, s:] - b.states[:, s:s + 1]) ** 2
    run = np.maximum.accumulate(inc2, axis=1)
    idx = _dyadic_indices(run.shape[1] - 1)
    est = run[:, idx].mean(axis=0)
    se = run[:, idx].std(axis=0, ddof=1) / math.sqrt(run.shape[0]) if run.shape[0] > 1 \
        else np.zeros(idx.size)
    h = b.grid[s + idx] - b.grid[s]
    env_x = np.maximum(h, h * h)
    if np.all(est == 0):
        return MomentProbeResult("temporal", h, est, se, 0.0, 0.0, 1.0, 0.0)
    (logc, p), r2 = _linfit(np.log(env_x), np.log(est))
    return MomentProbeResult("temporal", h, est, se, float(math.exp(logc)), float(p), r2,
                             float(np.max(est / env_x)))
