"""Quantum simulated annealing as a chain of Zeno projections.

The run starts from the uniform Gibbs state ``|phi_0(0), 0>`` and, for
``k = 1..Q``, runs phase estimation on ``W(M(beta_k))``. Outcome ``m = 0``
projects onto the (approximate) zero-phase component, i.e. onto the Gibbs
state at the new temperature. A final measurement of the A register samples
the candidate solution.

Two engines implement one step: :class:`AnalyticEngine` works in walk
eigen-coordinates, :class:`DenseEngine` uses the full statevector.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, TextIO

import numpy as np

from .classical_sa import DEFAULT_TAU, sa_schedule, target_beta
from .energy_model import EnergyModel
from .errors import ZeroGap
from .markov import TransitionKernel, kernel_spectrum, symmetrize
from .phase_estimation import (
    PeaConfig,
    apply_kraus,
    choose_p,
    pea_analytic,
    pea_channel_analytic,
    pea_dense,
    pea_kraus_dense,
)
from .qwalk import WalkOperator, a_marginal, build_walk, build_walk_dense, marker_embed

KernelBuilder = Callable[[float], TransitionKernel]

BACKENDS = ("analytic", "dense")
MODES = ("measure-each", "deferred")


@dataclass(frozen=True)
class QsaSchedule:
    """``Q`` equal increments ``delta_beta`` from 0 to ``beta_f``."""

    delta_beta: float
    q_steps: int
    beta_f: float
    nu: float
    pea: PeaConfig
    epsilon: float
    c_q: float = 1.0
    delta: float = float("nan")

    def betas(self) -> np.ndarray:
        return self.delta_beta * np.arange(1, self.q_steps + 1)

    @property
    def walk_budget(self) -> int:
        return self.q_steps * self.pea.walk_calls

    def with_steps(self, q_steps: int, e_max: float, p: int | None = None) -> "QsaSchedule":
        """Same ``beta_f`` split into ``q_steps`` increments.

        ``p`` defaults to :func:`choose_p` at the new ``nu``.
        """
        if q_steps < 1:
            raise ValueError("q_steps must be >= 1")
        db = self.beta_f / q_steps
        nu = db * e_max
        pea = PeaConfig(p, self.pea.c_pea) if p is not None else choose_p(nu, self.delta, self.pea.c_pea)
        return replace(self, delta_beta=db, q_steps=q_steps, nu=nu, pea=pea)


def qsa_schedule(
    model: EnergyModel, delta: float, epsilon: float, c_q: float = 1.0, c_pea: float = 1.0
) -> QsaSchedule:
    """``Q = ceil(c_q (beta_f E_M)^2 / epsilon)``, ``delta_beta = beta_f / Q``."""
    if not delta > 0:
        raise ZeroGap(f"spectral gap must be positive, got {delta}")
    if not c_q > 0:
        raise ValueError(f"c_q must be positive, got {c_q}")
    beta_f = target_beta(model, epsilon)
    q = max(1, math.ceil(c_q * (beta_f * model.e_max) ** 2 / epsilon - 1e-9))
    db = beta_f / q
    nu = db * model.e_max
    return QsaSchedule(db, q, beta_f, nu, choose_p(nu, delta, c_pea), epsilon, c_q, delta)


@dataclass
class CostCounter:
    markov_steps: int = 0
    walk_calls: int = 0

    def add_walk_calls(self, n: int) -> None:
        if n < 0:
            raise ValueError("cost increments must be non-negative")
        self.walk_calls += n

    def add_markov_steps(self, n: int) -> None:
        if n < 0:
            raise ValueError("cost increments must be non-negative")
        self.markov_steps += n

    @property
    def markov_equivalent(self) -> int:
        """Walk calls expressed as Markov steps (four per walk application)."""
        return self.markov_steps + 4 * self.walk_calls

    def merged(self, other: "CostCounter") -> "CostCounter":
        return CostCounter(self.markov_steps + other.markov_steps, self.walk_calls + other.walk_calls)


@dataclass
class QsaResult:
    final_state_index: int
    success: bool
    walk_calls: int
    pea_failures: int
    exact_success_prob: float | None = None
    outcomes: list[int] = field(default_factory=list)


# -- engines ----------------------------------------------------------------


class AnalyticEngine:
    """One QSA step in walk eigen-coordinates (no ``d^2 x d^2`` matrices).

    Walk operators are cached by ``beta``, so reusing one engine across runs
    of the same schedule diagonalizes each kernel once.
    """

    name = "analytic"

    def __init__(self, model: EnergyModel, builder: KernelBuilder, completion_seed: int = 0,
                 completion: str = "controlled"):
        self.model = model
        self.builder = builder
        self.completion_seed = completion_seed
        self.completion = completion
        self._walks: dict[float, WalkOperator] = {}

    def walk(self, beta: float) -> WalkOperator:
        w = self._walks.get(beta)
        if w is None:
            kernel = self.builder(beta)
            spec = kernel_spectrum(symmetrize(kernel, self.model))
            w = self._walks[beta] = build_walk(kernel, spec, self.completion_seed, self.completion)
        return w

    def zero_branch(self, psi, beta, pea):
        w = self.walk(beta)
        return w.state_vector(pea_analytic(w.basis_state(psi), w, pea).branch(0))

    def measure(self, psi, beta, pea, u):
        """Sample an outcome with uniform ``u``; return ``(m, probability, post-state)``."""
        w = self.walk(beta)
        dist = pea_analytic(w.basis_state(psi), w, pea)
        m = dist.sample(u)
        out = dist.outcome(m)
        return m, out.probability, w.state_vector(out.post_state)

    def branches(self, psi, beta, pea, floor):
        w = self.walk(beta)
        dist = pea_analytic(w.basis_state(psi), w, pea)
        probs = dist.probabilities()
        for m in np.flatnonzero(probs > floor):
            yield int(m), w.state_vector(dist.branch(int(m)))

    def channel(self, rho, beta, pea, fourier=True):
        return pea_channel_analytic(rho, self.walk(beta), pea)


class DenseEngine:
    """One QSA step on the joint ``2^p x d^2`` statevector."""

    name = "dense"

    def __init__(self, model: EnergyModel, builder: KernelBuilder, completion_seed: int = 0,
                 completion: str = "controlled"):
        self.model = model
        self.builder = builder
        self.completion_seed = completion_seed
        self.completion = completion

    def walk(self, beta: float) -> WalkOperator:
        kernel = self.builder(beta)
        return build_walk_dense(kernel, symmetrize(kernel, self.model),
                                completion_seed=self.completion_seed, completion=self.completion)

    def _joint(self, psi, beta, pea):
        joint = np.zeros((pea.n, psi.shape[0]), dtype=complex)
        joint[0] = psi
        return pea_dense(joint, self.walk(beta), pea)

    def zero_branch(self, psi, beta, pea):
        return self._joint(psi, beta, pea)[0]

    def measure(self, psi, beta, pea, u):
        out = self._joint(psi, beta, pea)
        probs = (np.abs(out) ** 2).sum(axis=1)
        if u < probs[0]:
            m = 0
        else:
            cdf = np.cumsum(probs)
            m = int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), probs.size - 1))
        return m, float(probs[m]), out[m] / math.sqrt(probs[m])

    def branches(self, psi, beta, pea, floor):
        out = self._joint(psi, beta, pea)
        probs = (np.abs(out) ** 2).sum(axis=1)
        for m in np.flatnonzero(probs > floor):
            yield int(m), out[m]

    def channel(self, rho, beta, pea, fourier=True):
        return apply_kraus(pea_kraus_dense(self.walk(beta), pea, fourier), rho)


def make_engine(backend: str, model: EnergyModel, builder: KernelBuilder, completion_seed: int = 0,
                completion: str = "controlled"):
    if backend == "analytic":
        return AnalyticEngine(model, builder, completion_seed, completion)
    if backend == "dense":
        return DenseEngine(model, builder, completion_seed, completion)
    raise ValueError(f"backend must be one of {BACKENDS}, got {backend!r}")


def initial_state(d: int) -> np.ndarray:
    """Uniform Gibbs state at ``beta = 0`` embedded next to the marker."""
    return marker_embed(np.full(d, 1.0 / math.sqrt(d))).astype(complex)


# -- runs -------------------------------------------------------------------


def _draw(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), probs.size - 1))


def _finish(model: EnergyModel, marginal: np.ndarray, u: float, walk_calls: int, outcomes: list[int]
            ) -> QsaResult:
    marginal = np.clip(marginal, 0.0, None)
    marginal /= marginal.sum()
    sigma = _draw(marginal, u)
    return QsaResult(
        final_state_index=sigma,
        success=sigma in model.ground_set,
        walk_calls=walk_calls,
        pea_failures=sum(m != 0 for m in outcomes),
        exact_success_prob=float(marginal[model.ground_mask].sum()),
        outcomes=outcomes,
    )


def _measure_from(engine, psi, betas, pea, rng, outcomes: list[int]) -> np.ndarray:
    for beta in betas:
        m, _, psi = engine.measure(psi, float(beta), pea, rng.random())
        outcomes.append(m)
    return psi


def run_qsa(
    model: EnergyModel,
    schedule: QsaSchedule,
    builder: KernelBuilder,
    *,
    backend: str = "analytic",
    seed: int = 0,
    mode: str = "measure-each",
    completion_seed: int = 0,
    counter: CostCounter | None = None,
) -> QsaResult:
    """One sampled QSA run, deterministic given ``seed``.

    Randomness comes from ``numpy.random.default_rng(seed)``: one uniform per
    phase estimation (measure-each mode) and one for the final measurement.
    After an ``m != 0`` outcome the run continues from the collapsed state.
    ``exact_success_prob`` is the ground-set probability of the final state
    just before its measurement.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    engine = make_engine(backend, model, builder, completion_seed)
    rng = np.random.default_rng(seed)
    counter = counter if counter is not None else CostCounter()
    d = model.d
    psi = initial_state(d)
    outcomes: list[int] = []
    if mode == "measure-each":
        psi = _measure_from(engine, psi, schedule.betas(), schedule.pea, rng, outcomes)
        marginal = a_marginal(psi, d)
    else:
        rho = np.outer(psi, psi.conj())
        for beta in schedule.betas():
            rho = engine.channel(rho, float(beta), schedule.pea)
        marginal = np.real(np.diag(rho)).reshape(d, d).sum(axis=1)
    counter.add_walk_calls(schedule.walk_budget)
    return _finish(model, marginal, rng.random(), counter.walk_calls, outcomes)


def run_qsa_batch(
    model: EnergyModel,
    schedule: QsaSchedule,
    builder: KernelBuilder,
    seeds: Iterable[int],
    *,
    backend: str = "analytic",
    mode: str = "measure-each",
    completion_seed: int = 0,
) -> list[QsaResult]:
    """Runs for many seeds; same results as :func:`run_qsa` per seed.

    In deferred mode the final state does not depend on the seed, so it is
    propagated once. In measure-each mode the all-zeros trajectory is computed
    once; a run follows it while its uniforms fall below the zero-outcome
    probabilities and is propagated on its own from the first step where they
    do not.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    engine = make_engine(backend, model, builder, completion_seed)
    betas = schedule.betas()
    d = model.d
    if mode == "deferred":
        rho = np.outer(initial_state(d), initial_state(d).conj())
        for beta in betas:
            rho = engine.channel(rho, float(beta), schedule.pea)
        marginal = np.real(np.diag(rho)).reshape(d, d).sum(axis=1)
        return [_finish(model, marginal.copy(), np.random.default_rng(seed).random(), schedule.walk_budget, [])
                for seed in seeds]
    path = [initial_state(d)]
    p_zero = []
    for beta in betas:
        _, prob, psi = engine.measure(path[-1], float(beta), schedule.pea, 0.0)
        p_zero.append(prob)
        path.append(psi)
    zero_marginal = a_marginal(path[-1], d)
    p_zero = np.asarray(p_zero)
    results = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        u = rng.random(betas.size)
        miss = np.flatnonzero(u >= p_zero)
        if miss.size == 0:
            res = _finish(model, zero_marginal.copy(), rng.random(), schedule.walk_budget, [0] * betas.size)
        else:
            k = int(miss[0])
            rng = np.random.default_rng(seed)
            rng.random(k)
            outcomes = [0] * k
            psi = _measure_from(engine, path[k], betas[k:], schedule.pea, rng, outcomes)
            res = _finish(model, a_marginal(psi, d), rng.random(), schedule.walk_budget, outcomes)
        results.append(res)
    return results


@dataclass(frozen=True)
class ExactQsa:
    """All-zeros branch of the exact propagation.

    ``p_zeros`` is the probability that every phase estimation returns 0;
    ``p_zeros_and_ground`` additionally requires the final state in the
    ground set.
    """

    p_zeros: float
    p_zeros_and_ground: float
    final_marginal: np.ndarray
    walk_calls: int

    @property
    def ground_given_zeros(self) -> float:
        return self.p_zeros_and_ground / self.p_zeros if self.p_zeros > 0 else 0.0

    @property
    def failure(self) -> float:
        """``1 - P(all zeros and ground)``: any non-zero outcome counts as failure."""
        return 1.0 - self.p_zeros_and_ground


def qsa_success_exact(
    model: EnergyModel,
    schedule: QsaSchedule,
    builder: KernelBuilder,
    *,
    backend: str = "analytic",
    completion_seed: int = 0,
) -> ExactQsa:
    """Propagate the unnormalized all-zeros branch through every step."""
    engine = make_engine(backend, model, builder, completion_seed)
    d = model.d
    psi = initial_state(d)
    for beta in schedule.betas():
        psi = engine.zero_branch(psi, float(beta), schedule.pea)
    marg = a_marginal(psi, d)
    p0 = float(marg.sum())
    return ExactQsa(
        p_zeros=p0,
        p_zeros_and_ground=float(marg[model.ground_mask].sum()),
        final_marginal=marg / p0 if p0 > 0 else marg,
        walk_calls=schedule.walk_budget,
    )


def qsa_distribution(
    model: EnergyModel,
    schedule: QsaSchedule,
    builder: KernelBuilder,
    *,
    backend: str = "analytic",
    mode: str = "deferred",
    completion_seed: int = 0,
    fourier: bool = True,
    prune: float = 1e-15,
) -> np.ndarray:
    """Exact final A-register distribution, summed over all ancilla outcomes.

    ``deferred`` propagates a density matrix through the ancilla-traced
    channel (optionally without the inverse Fourier transform, which cannot
    change a traced-out register). ``measure-each`` enumerates every outcome
    history with probability above ``prune``, so it is only for small runs.
    """
    engine = make_engine(backend, model, builder, completion_seed)
    d = model.d
    psi = initial_state(d)
    if mode == "deferred":
        rho = np.outer(psi, psi.conj())
        for beta in schedule.betas():
            rho = engine.channel(rho, float(beta), schedule.pea, fourier)
        return np.real(np.diag(rho)).reshape(d, d).sum(axis=1)
    if mode != "measure-each":
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    branches = [psi]
    for beta in schedule.betas():
        nxt = []
        for br in branches:
            nxt.extend(v for _, v in engine.branches(br, float(beta), schedule.pea, prune))
        branches = nxt
    return sum(a_marginal(v, d) for v in branches)


def qsa_error_bound(model: EnergyModel, schedule: QsaSchedule, tau_prime: float) -> float:
    """``d exp(-beta_f gamma) + tau' Q nu^2``, clamped to 1."""
    if not tau_prime > 0:
        raise ValueError("tau_prime must be positive")
    thermal = model.d * math.exp(-schedule.beta_f * model.gamma)
    return min(1.0, thermal + tau_prime * schedule.q_steps * schedule.nu**2)


def tau_prime_needed(model: EnergyModel, schedule: QsaSchedule, failure: float) -> float:
    """Smallest ``tau'`` for which the two-term bound covers ``failure``."""
    thermal = model.d * math.exp(-schedule.beta_f * model.gamma)
    return max(0.0, (failure - thermal) / (schedule.q_steps * schedule.nu**2))


def fit_tau_prime(cases: Iterable[tuple[EnergyModel, QsaSchedule, float]]) -> float:
    """Single ``tau'`` covering every ``(model, schedule, failure)`` case."""
    return max(tau_prime_needed(m, s, f) for m, s, f in cases)


@dataclass(frozen=True)
class PredictedCosts:
    """Schedule-based counts and the continuous cost laws.

    ``n_sa`` and ``n_qsa`` are the integer budgets of the two schedules.
    ``n_sa_law = beta_f E_M / (tau delta)`` and
    ``n_qsa_law = c_q^2 c_pea (beta_f E_M)^3 / (epsilon^2 sqrt(delta))``.
    """

    n_sa: int
    n_qsa: int
    n_sa_law: float
    n_qsa_law: float


def predicted_costs(
    model: EnergyModel,
    delta: float,
    epsilon: float,
    tau: float = DEFAULT_TAU,
    c_q: float = 1.0,
    c_pea: float = 1.0,
) -> PredictedCosts:
    sa = sa_schedule(model, delta, epsilon, tau)
    qs = qsa_schedule(model, delta, epsilon, c_q, c_pea)
    x = sa.beta_f * model.e_max
    return PredictedCosts(
        n_sa=sa.steps,
        n_qsa=qs.walk_budget,
        n_sa_law=x / (tau * delta),
        n_qsa_law=c_q**2 * c_pea * x**3 / (epsilon**2 * math.sqrt(delta)),
    )


RUN_RECORD_FIELDS = ("instance_id", "d", "delta", "epsilon", "Q", "p", "walk_calls",
                     "pea_failures", "success", "seed")


def run_record(instance_id: str, model: EnergyModel, schedule: QsaSchedule, result: QsaResult,
               seed: int) -> dict:
    return {
        "instance_id": instance_id,
        "d": model.d,
        "delta": repr(float(schedule.delta)),
        "epsilon": repr(float(schedule.epsilon)),
        "Q": schedule.q_steps,
        "p": schedule.pea.p,
        "walk_calls": result.walk_calls,
        "pea_failures": result.pea_failures,
        "success": int(result.success),
        "seed": seed,
    }


def write_run_records(records: Iterable[dict], out: TextIO) -> None:
    w = csv.DictWriter(out, fieldnames=RUN_RECORD_FIELDS, lineterminator="\n")
    w.writeheader()
    for rec in records:
        w.writerow(rec)
