"""Flat ``section.key = value`` experiment configuration.

The format is deliberately diff-friendly: one assignment per line, ``#``
comments, no nesting.  Generic model/payoff coefficients are expression
strings in the small grammar of :mod:`supctrl.expressions`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from . import diffusion
from .control import ControlProblem, PayoffSpec, power_exp_payoff
from .errors import ConfigError, UnsupportedModelError
from .expressions import parse_expression
from .montecarlo import SimConfig
from .resolvent import ResolventKernel

__all__ = ["ExperimentConfig", "parse_config", "load_config"]

_KNOWN_SECTIONS = ("model", "payoff", "solver", "simulation", "output")


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.raw.get(key, default)

    def get_float(self, key: str, default=None) -> Optional[float]:
        val = self.raw.get(key)
        if val is None:
            return default
        if val == "inf":
            return math.inf
        try:
            return float(val)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {val!r}")

    def get_int(self, key: str, default=None) -> Optional[int]:
        val = self.raw.get(key)
        if val is None:
            return default
        try:
            return int(val)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {val!r}")

    def get_bool(self, key: str, default=False) -> bool:
        val = self.raw.get(key)
        if val is None:
            return default
        if val.lower() in ("true", "1", "yes"):
            return True
        if val.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {val!r}")

    # -- builders ------------------------------------------------------------- #
    def build_spec(self) -> diffusion.DiffusionSpec:
        kind = self.get("model.kind", "gbm")
        r = self.get_float("model.r")
        if r is None:
            raise ConfigError("model.r is required")
        b = self.get_float("model.b", math.inf)
        if kind == "gbm":
            mu = self.get_float("model.mu")
            sigma = self.get_float("model.sigma")
            if mu is None or sigma is None:
                raise ConfigError("model.mu and model.sigma are required for kind=gbm")
            return diffusion.gbm_spec(mu, sigma, r, b)
        if kind == "generic":
            drift_txt = self.get("model.drift")
            vol_txt = self.get("model.volatility")
            if drift_txt is None or vol_txt is None:
                raise ConfigError("model.drift and model.volatility are required for kind=generic")
            drift = parse_expression(drift_txt)
            vol = parse_expression(vol_txt)
            return diffusion.generic_spec(
                drift=drift, volatility=vol, rate=r, b=b,
                drift_prime=drift.diff(), volatility_prime=vol.diff(),
            )
        raise ConfigError(f"model.kind: unknown kind {kind!r}")

    def build_payoff(self) -> PayoffSpec:
        pi_form = self.get("payoff.pi", "power")
        alpha_form = self.get("payoff.alpha", "exp-blend")
        if pi_form == "power" and alpha_form == "exp-blend":
            eta = self.get_float("payoff.eta")
            K1 = self.get_float("payoff.K1")
            K2 = self.get_float("payoff.K2")
            nu = self.get_float("payoff.nu")
            missing = [k for k, v in (("payoff.eta", eta), ("payoff.K1", K1),
                                      ("payoff.K2", K2), ("payoff.nu", nu)) if v is None]
            if missing:
                raise ConfigError(f"missing keys for parametric payoff: {', '.join(missing)}")
            return power_exp_payoff(eta, K1, K2, nu)
        # expression payoff: pi and alpha strings, Lambda by quadrature
        pi = parse_expression(self.get("payoff.pi"))
        alpha = parse_expression(self.get("payoff.alpha"))
        alpha_p = alpha.diff()
        alpha_pp = alpha_p.diff()

        def Lambda(x):
            val, _ = quad(lambda s: alpha(math.exp(s)) * math.exp(s), -25.0, math.log(x), limit=200)
            return val

        res = minimize_scalar(lambda x: -alpha(x), bounds=(1e-6, 100.0), method="bounded")
        return PayoffSpec(
            pi=pi, pi_p=pi.diff(), alpha=alpha, alpha_p=alpha_p, alpha_pp=alpha_pp,
            Lambda=Lambda, x_alpha=float(res.x) if alpha(res.x) > alpha(1e-6) else 0.0,
        )

    def build_problem(self, force_generic: Optional[bool] = None) -> ControlProblem:
        spec = self.build_spec()
        if spec.kind == "gbm" and spec.rate <= spec.mu_tilde:
            raise UnsupportedModelError(
                "unsupported regime: discount rate must exceed the GBM drift rate")
        payoff = self.build_payoff()
        anchor = self.get_float("solver.x_anchor", 1.0)
        if force_generic is None:
            force_generic = self.get("solver.mode", "closed-form") == "generic"
        fs = diffusion.fundamental_solutions(
            spec,
            anchor=anchor,
            force_generic=force_generic,
            x_lo=self.get_float("solver.x_lo", 1e-3),
            x_max=self.get_float("solver.x_max", 500.0),
        )
        kernel = ResolventKernel(fs)
        return ControlProblem(
            spec, fs, kernel, payoff,
            scan_lo=self.get_float("solver.scan_lo"),
            scan_hi=self.get_float("solver.scan_hi"),
            grid_n=self.get_int("solver.grid_n", 2000),
        )

    def build_sim_config(self, paths: Optional[int] = None, seed: Optional[int] = None) -> SimConfig:
        return SimConfig(
            n_paths=paths if paths is not None else self.get_int("simulation.paths", 100_000),
            dt=self.get_float("simulation.dt", 1e-3),
            seed=seed if seed is not None else self.get_int("simulation.seed", 0),
            antithetic=self.get_bool("simulation.antithetic", False),
            horizon_policy=self.get("simulation.horizon_policy", "exp-sample"),
            t_max=self.get_float("simulation.t_max", 400.0),
        )


def parse_config(text: str) -> ExperimentConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {line.strip()!r}")
        key, val = (part.strip() for part in stripped.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} must be section.key")
        section = key.split(".", 1)[0]
        if section not in _KNOWN_SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = val
    return ExperimentConfig(raw=raw)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
