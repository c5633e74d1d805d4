"""Discrete-time MCMC simulated annealing with a constant-rate schedule.

Two engines share one schedule: :func:`anneal_exact` propagates the full
probability vector, :func:`anneal_sampled` draws a single trajectory. Both
start from the uniform distribution at ``beta = 0`` and apply ``M(beta_k)``
for ``beta_k = k * delta_beta``, ``k = 1..P``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from .energy_model import EnergyModel, boltzmann
from .errors import ZeroGap
from .markov import TransitionKernel

KernelBuilder = Callable[[float], TransitionKernel]

DEFAULT_TAU = 0.25


@dataclass(frozen=True)
class SaSchedule:
    """Constant-``delta_beta`` annealing schedule.

    ``beta_f`` is the target inverse temperature; the schedule ends at
    ``steps * delta_beta >= beta_f``.
    """

    delta_beta: float
    steps: int
    beta_f: float
    tau: float
    epsilon: float
    delta: float = float("nan")

    @property
    def final_beta(self) -> float:
        return self.steps * self.delta_beta

    def betas(self) -> np.ndarray:
        """Inverse temperatures ``beta_1 .. beta_P``."""
        return self.delta_beta * np.arange(1, self.steps + 1)

    @property
    def markov_steps(self) -> int:
        return self.steps


def target_beta(model: EnergyModel, epsilon: float) -> float:
    """``ln(2 d / epsilon^2) / gamma``: the end point shared by SA and QSA."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    return math.log(2 * model.d / epsilon**2) / model.gamma


def sa_schedule(model: EnergyModel, delta: float, epsilon: float, tau: float = DEFAULT_TAU) -> SaSchedule:
    """Annealing rate ``delta_beta = tau * delta / E_M`` run up to ``beta_f``."""
    if not delta > 0:
        raise ZeroGap(f"spectral gap must be positive, got {delta}")
    if delta > 1:
        raise ValueError(f"spectral gap cannot exceed 1, got {delta}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    beta_f = target_beta(model, epsilon)
    delta_beta = tau * delta / model.e_max
    steps = max(1, math.ceil(beta_f / delta_beta - 1e-12))
    return SaSchedule(delta_beta, steps, beta_f, tau, epsilon, delta)


@dataclass
class DistributionTrace:
    """Per-step record of an exact annealing run (index 0 is ``beta = 0``)."""

    betas: np.ndarray
    h_norms: np.ndarray
    error_masses: np.ndarray
    final_distribution: np.ndarray
    distributions: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return len(self.betas) - 1

    @property
    def final_error_mass(self) -> float:
        return float(self.error_masses[-1])

    def first_step_below(self, epsilon: float) -> int | None:
        hits = np.flatnonzero(self.error_masses <= epsilon)
        return int(hits[0]) if hits.size else None


def h_norm(mu: np.ndarray, pi) -> float:
    """2-norm of ``mu / sqrt(pi)``."""
    p = getattr(pi, "probabilities", pi)
    mu = np.asarray(mu, dtype=float)
    if mu.shape != p.shape:
        raise ValueError("distribution and equilibrium dimensions differ")
    return float(np.linalg.norm(mu / np.sqrt(p)))


def sa_error_bound(model: EnergyModel, beta_f: float) -> float:
    """``sqrt(2 d) exp(-beta_f gamma / 2)``, clamped to 1."""
    if beta_f < 0:
        raise ValueError("beta_f must be >= 0")
    return min(1.0, math.sqrt(2 * model.d) * math.exp(-beta_f * model.gamma / 2))


def anneal_exact(
    model: EnergyModel,
    schedule: SaSchedule,
    kernel_builder: KernelBuilder,
    *,
    keep_distributions: bool = True,
    stop_below: float | None = None,
) -> DistributionTrace:
    """Propagate ``mu(beta_k) = M(beta_k) mu(beta_{k-1})`` from the uniform start.

    Args:
        stop_below: If set, stop at the first step whose error mass is
            ``<= stop_below``; the trace then ends at that step.
    """
    d = model.d
    ground = model.ground_mask
    mu = np.full(d, 1.0 / d)
    n = schedule.steps
    betas = np.empty(n + 1)
    hs = np.empty(n + 1)
    errs = np.empty(n + 1)
    dists = np.empty((n + 1, d)) if keep_distributions else None
    matrix_at = getattr(kernel_builder, "raw", None) or (lambda beta: kernel_builder(beta).matrix)
    shifted = model.energies - model.energies.min()

    def record(k, beta, mu):
        betas[k] = beta
        w = np.exp(-beta * shifted)
        hs[k] = np.linalg.norm(mu / np.sqrt(w / w.sum()))
        errs[k] = mu[~ground].sum()
        if dists is not None:
            dists[k] = mu

    record(0, 0.0, mu)
    last = n
    if stop_below is not None and errs[0] <= stop_below:
        last = 0
    else:
        for k in range(1, n + 1):
            beta = k * schedule.delta_beta
            mu = matrix_at(beta) @ mu
            record(k, beta, mu)
            if stop_below is not None and errs[k] <= stop_below:
                last = k
                break
    sl = slice(0, last + 1)
    return DistributionTrace(
        betas=betas[sl],
        h_norms=hs[sl],
        error_masses=errs[sl],
        final_distribution=mu,
        distributions=dists[sl] if dists is not None else None,
    )


def recurrence_constant(trace: DistributionTrace, delta: float) -> float:
    """Worst ``c`` with ``D||h||^2 <= -delta ||h||^2 + 2 delta + c delta^2`` at every step."""
    h2 = trace.h_norms**2
    if h2.size < 2:
        return float("-inf")
    slack = np.diff(h2) + delta * h2[:-1] - 2 * delta
    return float(slack.max() / delta**2)


def anneal_with_lyapunov_guard(
    model: EnergyModel,
    delta: float,
    epsilon: float,
    kernel_builder: KernelBuilder,
    tau: float = DEFAULT_TAU,
    max_halvings: int = 8,
) -> tuple[SaSchedule, DistributionTrace]:
    """Run :func:`anneal_exact`, halving ``tau`` while ``||h||^2`` exceeds 2."""
    for _ in range(max_halvings + 1):
        schedule = sa_schedule(model, delta, epsilon, tau)
        trace = anneal_exact(model, schedule, kernel_builder, keep_distributions=False)
        if trace.h_norms.max() ** 2 <= 2.0 + 1e-6:
            return schedule, trace
        tau /= 2
    return schedule, trace


@dataclass
class SampledRun:
    final_state: int
    trajectory: np.ndarray

    def succeeded(self, model: EnergyModel) -> bool:
        return self.final_state in model.ground_set


def _draw(column: np.ndarray, u: float) -> int:
    # inverse CDF in ascending state order
    idx = int(np.searchsorted(np.cumsum(column), u, side="right"))
    return min(idx, column.shape[0] - 1)


def anneal_sampled(
    model: EnergyModel, schedule: SaSchedule, kernel_builder: KernelBuilder, seed: int
) -> SampledRun:
    """Single stochastic annealing trajectory, deterministic given ``seed``.

    The generator is ``numpy.random.default_rng(seed)``; one uniform draw picks
    the start state, then one uniform per step selects the next state.
    """
    rng = np.random.default_rng(seed)
    d = model.d
    traj = np.empty(schedule.steps + 1, dtype=np.int64)
    state = min(int(rng.random() * d), d - 1)
    traj[0] = state
    for k in range(1, schedule.steps + 1):
        m = kernel_builder(k * schedule.delta_beta).matrix
        state = _draw(m[:, state], rng.random())
        traj[k] = state
    return SampledRun(state, traj)


def anneal_sampled_batch(
    model: EnergyModel, schedule: SaSchedule, kernel_builder: KernelBuilder, seed: int, runs: int
) -> np.ndarray:
    """Final states of ``runs`` independent trajectories.

    Run ``r`` consumes the ``r``-th entry of each vectorized draw from
    ``numpy.random.default_rng(seed)``: one draw of size ``runs`` for the start
    states, then one per step.
    """
    rng = np.random.default_rng(seed)
    d = model.d
    states = np.minimum((rng.random(runs) * d).astype(np.int64), d - 1)
    for k in range(1, schedule.steps + 1):
        cdf = np.cumsum(kernel_builder(k * schedule.delta_beta).matrix, axis=0)
        u = rng.random(runs)
        cols = cdf[:, states]  # (d, runs)
        states = np.minimum((cols <= u[None, :]).sum(axis=0), d - 1)
    return states


def write_trace_csv(trace: DistributionTrace, out: TextIO) -> None:
    """CSV columns ``step,beta,h_norm,error_mass,markov_steps``."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["step", "beta", "h_norm", "error_mass", "markov_steps"])
    for k in range(len(trace.betas)):
        w.writerow([k, f"{trace.betas[k]:.17g}", f"{trace.h_norms[k]:.17g}",
                    f"{trace.error_masses[k]:.17g}", k])


def first_passage(
    model: EnergyModel, schedule: SaSchedule, kernel_builder: KernelBuilder, epsilon: float
) -> tuple[int | None, float]:
    """First step whose exact error mass is ``<= epsilon``, and that mass.

    Returns ``(None, final_mass)`` when the schedule ends above ``epsilon``.
    """
    excited = ~model.ground_mask
    raw = getattr(kernel_builder, "raw", None) or (lambda b: kernel_builder(b).matrix)
    mu = np.full(model.d, 1.0 / model.d)
    err = float(mu[excited].sum())
    if err <= epsilon:
        return 0, err
    for k in range(1, schedule.steps + 1):
        mu = raw(k * schedule.delta_beta) @ mu
        err = float(mu[excited].sum())
        if err <= epsilon:
            return k, err
    return None, err
