"""Quick invariant battery behind ``qsanneal validate``.

Each check builds its own random instances from a fixed seed and reports a
worst-case residual against its tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .classical_sa import anneal_exact, sa_error_bound, sa_schedule, target_beta
from .energy_model import boltzmann, build_model
from .markov import (
    kernel_spectrum,
    metropolis_builder,
    stationary_residual,
    symmetrize,
    verify_detailed_balance,
)
from .phase_estimation import PeaConfig, pea_amplitudes, pea_dense
from .qsa import qsa_distribution, qsa_schedule
from .qwalk import build_walk_dense, marker_embed


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name:<34} worst={self.worst:.3e} tol={self.tolerance:.1e}"


def _complete(d):
    return (np.ones((d, d)) - np.eye(d)) / (d - 1)


def check_kernels(rng, n=20) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 9))
        model = build_model(rng.uniform(0, 3, d) - 0.5)
        beta = float(rng.uniform(0, 3))
        kern = metropolis_builder(model, _complete(d))(beta)
        worst = max(worst, verify_detailed_balance(kern, boltzmann(model, beta)).max_violation,
                    stationary_residual(kern, model))
        kernel_spectrum(symmetrize(kern, model), kern)
    return CheckResult("detailed balance and stationarity", worst <= 1e-12, worst, 1e-12)


def check_walk_spectrum(rng, n=20) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 7))
        model = build_model(rng.uniform(0, 3, d))
        beta = float(rng.uniform(0, 2))
        kern = metropolis_builder(model, _complete(d))(beta)
        spec = kernel_spectrum(symmetrize(kern, model))
        walk = build_walk_dense(kern, spectrum=spec, completion_seed=int(rng.integers(1 << 31)))
        phases = np.angle(np.linalg.eigvals(walk.dense))
        for ph in np.concatenate([2 * spec.phis[1:], -2 * spec.phis[1:]]):
            dist = np.abs(np.angle(np.exp(1j * (phases - ph))))
            worst = max(worst, float(dist.min()))
        fixed = marker_embed(spec.eigvecs[:, 0])
        worst = max(worst, float(np.abs(walk.dense @ fixed - fixed).max()))
    return CheckResult("walk eigenphases +-2 arccos(lambda)", worst <= 1e-8, worst, 1e-8)


def check_pea_law(rng, n=200) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        p = int(rng.integers(1, 9))
        nn = 1 << p
        phase = float(rng.uniform(0, 2 * math.pi))
        m = int(rng.integers(nn))
        k = np.arange(nn)
        brute = np.exp(1j * k * (phase - 2 * math.pi * m / nn)).sum() / nn
        worst = max(worst, abs(brute - complex(pea_amplitudes(phase, m, p))))
    return CheckResult("phase estimation closed form", worst <= 1e-10, worst, 1e-10)


def check_pea_dense(rng, n=5) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 5))
        model = build_model(rng.uniform(0, 3, d))
        kern = metropolis_builder(model, _complete(d))(float(rng.uniform(0, 2)))
        walk = build_walk_dense(kern, model=model)
        cfg = PeaConfig(int(rng.integers(1, 5)))
        joint = rng.standard_normal((cfg.n, d * d)) + 1j * rng.standard_normal((cfg.n, d * d))
        out = pea_dense(joint, walk, cfg)
        worst = max(worst, abs(np.linalg.norm(out) - np.linalg.norm(joint)))
    return CheckResult("dense phase estimation unitarity", worst <= 1e-10, worst, 1e-10)


def check_lyapunov(rng, n=10) -> CheckResult:
    worst = -np.inf
    for _ in range(n):
        d = int(rng.integers(2, 7))
        model = build_model(np.r_[0.0, rng.integers(1, 4, d - 1)])
        builder = metropolis_builder(model, _complete(d))
        eps = 0.2
        beta_f = target_beta(model, eps)
        delta = min(1 - kernel_spectrum(symmetrize(builder(b), model)).lambdas[1]
                    for b in np.linspace(0, beta_f, 21))
        trace = anneal_exact(model, sa_schedule(model, delta, eps), builder, keep_distributions=False)
        worst = max(worst, float(trace.h_norms.max() ** 2 - 2.0),
                    trace.final_error_mass - sa_error_bound(model, trace.betas[-1]))
    return CheckResult("annealing h-norm and error bound", worst <= 1e-6, max(worst, 0.0), 1e-6)


def check_backends(rng, n=2) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 5))
        model = build_model(np.r_[0.0, rng.integers(1, 4, d - 1)])
        builder = metropolis_builder(model, _complete(d))
        sched = qsa_schedule(model, 0.3, 0.3).with_steps(3, model.e_max, p=3)
        a = qsa_distribution(model, sched, builder, backend="analytic")
        b = qsa_distribution(model, sched, builder, backend="dense", completion_seed=7)
        c = qsa_distribution(model, sched, builder, backend="analytic", mode="measure-each")
        worst = max(worst, float(np.abs(a - b).max()), float(np.abs(a - c).max()))
    return CheckResult("backend and mode agreement", worst <= 1e-8, worst, 1e-8)


CHECKS: tuple[Callable, ...] = (
    check_kernels,
    check_walk_spectrum,
    check_pea_law,
    check_pea_dense,
    check_lyapunov,
    check_backends,
)


def run_checks(seed: int = 0) -> list[CheckResult]:
    out = []
    for i, check in enumerate(CHECKS):
        rng = np.random.default_rng([seed, i])
        try:
            out.append(check(rng))
        except ArithmeticError as exc:
            out.append(CheckResult(f"{check.__name__} raised {type(exc).__name__}", False,
                                   float("inf"), 0.0))
    return out
