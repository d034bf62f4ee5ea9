"""
Built-in numerical self-checks behind `isacsim validate`.

Each check exercises one cross-validation pair: the whitener against its
defining identity, the closed-form posterior mean against brute-force
quadrature, the one-symbol reduction against the linear estimator, and the
closed-form bit error rate against simulation. All checks are seeded and
print one machine-readable JSON line each.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import mmse, sic
from .experiments import run_cell
from .model import (
    Observation,
    SystemConfig,
    generate_observation,
    qpsk,
    sample_scene,
    single_symbol,
)

WHITENING_TOL = 1e-10
ORACLE_TOL = 1e-4
REDUCTION_TOL = 1e-12


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _observation_for(cfg: SystemConfig, rng) -> Observation:
    return generate_observation(cfg, sample_scene(cfg, rng))


def check_whitening_identity(seed: int = 0,
                             n_configs: int = 1000) -> CheckResult:
    """Q R Q^H must be the identity for random operating points.

    The Frobenius residual of the triple product scales with machine epsilon
    times the covariance condition number, so powers are drawn from ranges
    keeping the condition below ~1e4; the whitener itself has no such limit.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_configs):
        n_rx = int(rng.choice([1, 2, 4, 8]))
        gamma = 10.0 ** rng.uniform(-3, 1)
        sigma2 = 10.0 ** rng.uniform(-1, 1)
        theta = rng.uniform(-1.45, 1.45)
        cfg = SystemConfig(n_rx=n_rx, gamma=gamma, sigma2=sigma2, theta=theta)
        obs = _observation_for(cfg, rng)
        r_c = sic.interference_covariance(obs)
        q = sic.whitening_matrix(r_c)
        resid = q @ r_c @ q.conj().T - np.eye(n_rx)
        worst = max(worst, float(np.linalg.norm(resid)))
    return CheckResult(
        name="whitening_identity",
        passed=worst < WHITENING_TOL,
        detail=f"max Frobenius residual {worst:.3e} over {n_configs} configs "
               f"(tol {WHITENING_TOL:.0e})",
    )


def check_posterior_oracle(seed: int = 0,
                           n_instances: int = 50) -> CheckResult:
    """Closed-form posterior mean against brute-force quadrature."""
    rng = np.random.default_rng(seed + 1)
    powers = (1e-2, 1.0, 1e2)
    worst = 0.0
    for _ in range(n_instances):
        cfg = SystemConfig(
            n_rx=int(rng.choice([1, 2])),
            beta=float(rng.choice(powers)),
            gamma=float(rng.choice(powers)),
            sigma2=1e-3,
            theta=rng.uniform(-1.4, 1.4),
        )
        obs = _observation_for(cfg, rng)
        closed = mmse.posterior_mmse_alpha(obs)
        brute = mmse.brute_force_posterior_mean(obs)
        worst = max(worst, abs(closed - brute))
    return CheckResult(
        name="posterior_oracle",
        passed=worst < ORACLE_TOL,
        detail=f"max |closed - quadrature| {worst:.3e} over {n_instances} "
               f"instances (tol {ORACLE_TOL:.0e})",
    )


def check_single_symbol_reduction(seed: int = 0,
                                  n_instances: int = 100) -> CheckResult:
    """With one symbol the posterior mean is the linear estimator exactly."""
    rng = np.random.default_rng(seed + 2)
    worst = 0.0
    for _ in range(n_instances):
        cfg = SystemConfig(
            n_rx=int(rng.choice([1, 2, 4])),
            beta=10.0 ** rng.uniform(-2, 2),
            gamma=10.0 ** rng.uniform(-2, 2),
            sigma2=10.0 ** rng.uniform(-3, 0),
            theta=rng.uniform(-1.4, 1.4),
            constellation=single_symbol(),
        )
        obs = _observation_for(cfg, rng)
        posterior = mmse.posterior_mmse_alpha(obs)
        linear = sic.linear_mmse_alpha(sic.sic_subtract(obs, 0), obs)
        worst = max(worst, abs(posterior - linear))
    return CheckResult(
        name="single_symbol_reduction",
        passed=worst < REDUCTION_TOL,
        detail=f"max |posterior - linear| {worst:.3e} over {n_instances} "
               f"instances (tol {REDUCTION_TOL:.0e})",
    )


def check_ber_overlay(seed: int = 0, trials: int = 20_000) -> CheckResult:
    """Simulated BER must track the closed form within 3 standard errors."""
    cfg = SystemConfig(
        n_rx=2, beta=1e-2, gamma=1.0, sigma2=1e-3,
        constellation=qpsk(), seed=seed + 1009,
    )
    agg, _ = run_cell(cfg, trials)
    gap = abs(agg.ber_empirical - agg.ber_theoretical)
    bound = 3.0 * agg.ber_stderr
    return CheckResult(
        name="ber_overlay",
        passed=gap < bound,
        detail=f"|sim - theory| = {gap:.3e} vs 3*stderr = {bound:.3e} "
               f"({trials} trials)",
    )


ALL_CHECKS = (
    check_whitening_identity,
    check_posterior_oracle,
    check_single_symbol_reduction,
    check_ber_overlay,
)


def run_validation(seed: int = 0, print_fn=print) -> int:
    """Run every check; print one JSON line per check plus a summary."""
    results = [check(seed=seed) for check in ALL_CHECKS]
    for res in results:
        print_fn(json.dumps({
            "check": res.name,
            "status": "pass" if res.passed else "fail",
            "detail": res.detail,
        }))
    passed = sum(r.passed for r in results)
    print_fn(json.dumps({
        "status": "pass" if passed == len(results) else "fail",
        "passed": passed,
        "total": len(results),
    }))
    return 0 if passed == len(results) else 2
