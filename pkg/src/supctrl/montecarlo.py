"""Path simulation: supremum sampling, reflected payoffs, killed hat diffusion.

Euler-Maruyama time stepping with per-path seeded streams (splitmix-derived
from the configured seed and the path index), so results are bit-reproducible
for a fixed config regardless of how many threads execute the paths.  GBM
specs run through compiled numba kernels; generic specs fall back to a
chunked numpy engine that accepts arbitrary coefficient callables.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit, prange, set_num_threads

from .control import ControlProblem
from .errors import ConfigError, UnsupportedModelError

__all__ = [
    "SimConfig",
    "McEstimate",
    "simulate_supremum_at_exp_time",
    "simulate_reflected_payoff",
    "simulate_hat_stopping",
    "prob_sup_exceeds",
    "expected_f_at_supremum_mc",
]

_threads_configured = False


def _configure_threads():
    global _threads_configured
    if _threads_configured:
        return
    cap = os.environ.get("SUPCTRL_THREADS")
    if cap:
        try:
            set_num_threads(max(1, min(int(cap), os.cpu_count() or 1)))
        except ValueError:
            pass
    _threads_configured = True


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    dt: float = 1e-3
    seed: int = 0
    antithetic: bool = False
    horizon_policy: str = "exp-sample"  # or "discount-weight"
    t_max: float = 400.0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.horizon_policy not in ("exp-sample", "discount-weight"):
            raise ConfigError(f"unknown horizon policy {self.horizon_policy!r}")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_effective: int

    def agrees_with(self, value: float, n_sigma: float = 3.0, rel_floor: float = 0.01) -> bool:
        return abs(self.mean - value) <= n_sigma * self.std_error + rel_floor * abs(value)


def estimate_from_samples(samples: np.ndarray, antithetic: bool = False) -> McEstimate:
    if antithetic:
        samples = 0.5 * (samples[0::2] + samples[1::2])
    n = len(samples)
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return McEstimate(mean=mean, std_error=se, n_effective=n)


@njit(inline="always")
def _path_seed(seed, i):
    # splitmix64 mix of (seed, path index), truncated to the RNG seed range
    z = np.uint64(seed) * np.uint64(0x9E3779B97F4A7C15) + np.uint64(i + 1) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return int(z & np.uint64(0x7FFFFFFF))


@njit(parallel=True)
def _gbm_sup_kernel(n_paths, mu, sig, r, x0, dt, seed, antithetic, t_cap):
    out = np.empty(n_paths)
    sqdt = math.sqrt(dt)
    for i in prange(n_paths):
        stream = i // 2 if antithetic else i
        sign = 1.0 - 2.0 * (i & 1) if antithetic else 1.0
        np.random.seed(_path_seed(seed, stream))
        u = np.random.random()
        T = min(-math.log(u) / r, t_cap)
        n_steps = int(T / dt)
        rem = T - n_steps * dt
        x = x0
        m = x0
        for _ in range(n_steps):
            x = x + mu * x * dt + sig * x * sqdt * sign * np.random.normal()
            if x > m:
                m = x
        if rem > 0.0:
            x = x + mu * x * rem + sig * x * math.sqrt(rem) * sign * np.random.normal()
            if x > m:
                m = x
        out[i] = m
    return out


@njit(parallel=True)
def _gbm_reflected_kernel(n_paths, mu, sig, r, y, x0, dt, seed, use_kill, t_cap):
    # returns (discounted push integral sum e^{-rt} dZ, per-path max of X)
    out = np.empty(n_paths)
    peak = np.empty(n_paths)
    sqdt = math.sqrt(dt)
    for i in prange(n_paths):
        np.random.seed(_path_seed(seed, i))
        if use_kill:
            T = min(-math.log(np.random.random()) / r, t_cap)
        else:
            T = t_cap
        x = min(x0, y)
        m = x
        t = 0.0
        acc = 0.0
        while t < T:
            h = dt if t + dt <= T else T - t
            x = x + mu * x * h + sig * x * math.sqrt(h) * np.random.normal()
            t += h
            if x > m:
                m = x
            if x > y:
                dz = x - y
                x = y
                if use_kill:
                    acc += dz
                else:
                    acc += math.exp(-r * t) * dz
        out[i] = acc
        peak[i] = m
    return out, peak


@njit(parallel=True)
def _gbm_hat_kernel(n_paths, mu_hat, sig, rho, y_stop, x0, dt, seed, t_cap):
    # returns (kill weight at hit or 0, state at hit or last, hit flag, residual weight)
    weight = np.empty(n_paths)
    state = np.empty(n_paths)
    hit = np.zeros(n_paths, dtype=np.int8)
    residual = np.zeros(n_paths)
    sqdt = math.sqrt(dt)
    for i in prange(n_paths):
        np.random.seed(_path_seed(seed, i))
        x = x0
        t = 0.0
        while t < t_cap and x < y_stop:
            x = x + mu_hat * x * dt + sig * x * sqdt * np.random.normal()
            t += dt
        if x >= y_stop:
            weight[i] = math.exp(-rho * t)
            state[i] = x
            hit[i] = 1
        else:
            weight[i] = 0.0
            state[i] = x
            residual[i] = math.exp(-rho * t_cap)
    return weight, state, hit, residual


def _check_dt(spec, x0, dt):
    if spec.volatility(x0) * math.sqrt(dt) > 0.05 * max(abs(x0), 1e-12):
        warnings.warn(f"dt={dt:g} coarse for volatility {spec.volatility(x0):g} at x0={x0:g}",
                      RuntimeWarning, stacklevel=3)


# --------------------------------------------------------------------------- #
# Generic (callable-coefficient) fallback engine
# --------------------------------------------------------------------------- #

def _generic_sup_paths(spec, cfg, x0, absorb_cutoff):
    out = np.empty(cfg.n_paths)
    chunk = 2048
    sqdt = math.sqrt(cfg.dt)
    for start in range(0, cfg.n_paths, chunk):
        nn = min(chunk, cfg.n_paths - start)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((cfg.seed, start))))
        T = np.minimum(rng.exponential(1.0 / spec.rate, nn), cfg.t_max)
        x = np.full(nn, x0)
        m = np.full(nn, x0)
        t = np.zeros(nn)
        alive = np.ones(nn, dtype=bool)
        while np.any(alive):
            idx = np.where(alive)[0]
            xi = x[idx]
            z = rng.standard_normal(len(idx))
            mu = np.array([spec.drift(v) for v in xi])
            sg = np.array([spec.volatility(v) for v in xi])
            xi = xi + mu * cfg.dt + sg * sqdt * z
            t[idx] += cfg.dt
            absorbed = xi <= absorb_cutoff
            xi = np.maximum(xi, absorb_cutoff)
            x[idx] = xi
            m[idx] = np.maximum(m[idx], xi)
            done = (t[idx] >= T[idx]) | absorbed
            alive[idx[done]] = False
        out[start:start + nn] = m
    return out


# --------------------------------------------------------------------------- #
# Public operations
# --------------------------------------------------------------------------- #

def simulate_supremum_at_exp_time(spec, cfg: SimConfig, x0: float) -> np.ndarray:
    """Per-path samples of the running supremum at an independent Exp(r) time."""
    spec.require_inside(x0)
    _check_dt(spec, x0, cfg.dt)
    _configure_threads()
    t_cap = min(cfg.t_max, 60.0 / spec.rate)
    if spec.kind == "gbm":
        return _gbm_sup_kernel(cfg.n_paths, spec.mu_tilde, spec.sigma_tilde, spec.rate,
                               x0, cfg.dt, cfg.seed, cfg.antithetic, t_cap)
    # absorbing cutoff stands in for hitting an attainable lower boundary
    return _generic_sup_paths(spec, cfg, x0, absorb_cutoff=1e-8 * x0)


def prob_sup_exceeds(samples: np.ndarray, y: float, antithetic: bool = False) -> McEstimate:
    return estimate_from_samples((samples >= y).astype(float), antithetic)


def expected_f_at_supremum_mc(samples: np.ndarray, f, y: float,
                              antithetic: bool = False) -> McEstimate:
    vals = np.where(samples >= y, f(np.maximum(samples, y)), 0.0)
    return estimate_from_samples(vals, antithetic)


def simulate_reflected_payoff(problem: ControlProblem, cfg: SimConfig,
                              y: float, x0: float) -> McEstimate:
    """Estimate of the reflection value H_y(x0) from simulated local-time pushes.

    The continuous push integral uses the marginal value at the barrier (the
    post-projection state is y); an initial lump from x0 > y contributes the
    exact integral of the marginal payoff over [y, x0].
    """
    spec = problem.spec
    spec.require_inside(x0)
    spec.require_inside(y)
    _check_dt(spec, x0, cfg.dt)
    _configure_threads()
    if spec.kind != "gbm":
        raise UnsupportedModelError("reflected-payoff simulation implemented for the GBM fast path")
    use_kill = cfg.horizon_policy == "exp-sample"
    t_cap = min(cfg.t_max, 60.0 / spec.rate)
    acc, peak = _gbm_reflected_kernel(cfg.n_paths, spec.mu_tilde, spec.sigma_tilde,
                                      spec.rate, y, x0, cfg.dt, cfg.seed, use_kill, t_cap)
    lump = problem.A(x0) - problem.A(y) if x0 > y else 0.0
    payoff = problem.A_p(y) * acc + lump
    est = estimate_from_samples(payoff)  # antithetic pairing not wired for this kernel
    # reflected path stays within one-step overshoot of the barrier
    bound = max(y, x0) * (1.0 + 6.0 * spec.sigma_tilde * math.sqrt(cfg.dt) + abs(spec.mu_tilde) * cfg.dt)
    if np.max(peak) > bound:
        warnings.warn(f"reflected path peak {np.max(peak):g} exceeds overshoot bound {bound:g}",
                      RuntimeWarning, stacklevel=2)
    return est


def simulate_hat_stopping(stopping, cfg: SimConfig, y_stop: float, x0: float) -> tuple:
    """Killed hat-diffusion estimate of the stopped marginal payoff.

    Returns (McEstimate, bias_bound): paths exceeding the time cap contribute
    zero payoff and their residual kill weight bounds the truncation bias.
    """
    spec = stopping.spec
    spec.require_inside(x0)
    if x0 >= y_stop:
        raise ValueError("need x0 < y_stop")
    _configure_threads()
    if spec.kind != "gbm":
        raise UnsupportedModelError("hat-diffusion simulation implemented for the GBM fast path")
    mu_hat = spec.mu_tilde + spec.sigma_tilde**2
    rho = spec.rate - spec.mu_tilde
    weight, state, hit, residual = _gbm_hat_kernel(
        cfg.n_paths, mu_hat, spec.sigma_tilde, rho, y_stop, x0, cfg.dt, cfg.seed, cfg.t_max)
    payoff = np.where(hit == 1, weight * np.array([stopping.problem.A_p(s) for s in state]), 0.0)
    est = estimate_from_samples(payoff)
    bias_bound = float(np.mean(residual) * abs(stopping.problem.A_p(y_stop)))
    return est, bias_bound
