"""Instance families, experiment configuration and the SA-vs-QSA scaling driver.

Determinism: every random stream is a ``numpy.random.default_rng`` (PCG64)
seeded from a ``SeedSequence`` of integers ``[seed, instance, run]``; floats
are written as their shortest round-trip decimal so CSV output is
byte-reproducible.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
import scipy.optimize
import scipy.stats

from .classical_sa import DEFAULT_TAU, first_passage, sa_schedule, target_beta
from .energy_model import EnergyModel, build_model
from .errors import ConfigError, UnknownFamily
from .markov import metropolis_builder, min_spectral_gap
from .qsa import predicted_costs, qsa_schedule, qsa_success_exact, run_qsa_batch

FAMILIES = ("two_level", "barrier_chain", "random_energies", "ising_ring")


# -- proposals ---------------------------------------------------------------


def swap_proposal() -> np.ndarray:
    return np.array([[0.0, 1.0], [1.0, 0.0]])


def ring_proposal(d: int) -> np.ndarray:
    """Step to either ring neighbour with probability 1/2."""
    if d < 3:
        raise ValueError("a ring needs at least 3 states")
    q = np.zeros((d, d))
    i = np.arange(d)
    q[(i + 1) % d, i] += 0.5
    q[(i - 1) % d, i] += 0.5
    return q


def complete_proposal(d: int) -> np.ndarray:
    return (np.ones((d, d)) - np.eye(d)) / (d - 1)


def single_flip_proposal(n_spins: int) -> np.ndarray:
    """Flip one uniformly chosen spin; state bits are the spins."""
    d = 1 << n_spins
    q = np.zeros((d, d))
    idx = np.arange(d)
    for k in range(n_spins):
        q[idx ^ (1 << k), idx] = 1.0 / n_spins
    return q


def random_cycle_proposal(d: int, rng: np.random.Generator, cycles: int = 3) -> np.ndarray:
    """Average of ``(P + P^T) / 2`` over random ``d``-cycles ``P``.

    Symmetric, doubly stochastic and hollow; connected since each cycle is.
    """
    q = np.zeros((d, d))
    for _ in range(cycles):
        order = rng.permutation(d)
        p = np.zeros((d, d))
        p[np.roll(order, -1), order] = 1.0
        q += 0.5 * (p + p.T)
    return q / cycles


# -- families ----------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    instance_id: str
    family: str
    model: EnergyModel
    proposal: np.ndarray
    laziness: float
    params: dict = field(default_factory=dict)

    def builder(self):
        return metropolis_builder(self.model, self.proposal, self.laziness)


def two_level(laziness: float = 0.5, gap: float = 1.0) -> Instance:
    """Energies ``[0, gap]`` with the swap proposal; ``delta`` set by the laziness."""
    if laziness < 0.5:
        raise ValueError("two_level needs laziness >= 1/2 for a non-negative spectrum")
    return Instance("", "two_level", build_model([0.0, gap]), swap_proposal(), laziness,
                    {"laziness": laziness, "gap": gap})


def barrier_energies(d: int, barrier: float, well: float, wall: float) -> np.ndarray:
    """Ring energies: ground state 0 at 0, metastable well ``d/2`` at ``well``.

    The arc ``1 .. d/2-1`` rises to ``well + barrier`` at its midpoint, the
    arc ``d/2+1 .. d-1`` to ``well + wall``; both are linear tents.
    """
    if d < 4 or d % 2:
        raise ValueError("barrier_chain needs an even d >= 4")
    half = d // 2
    e = np.empty(d)
    e[0] = 0.0
    e[half] = well
    mid = half / 2
    pos = np.arange(1, half)
    e[1:half] = well + barrier * (1 - np.abs(pos - mid) / mid)
    e[half + 1:] = well + wall * (1 - np.abs(pos - mid) / mid)
    return e


def barrier_chain(d: int = 16, barrier: float = 1.0, well: float = 5.0, wall: float = 8.0,
                  laziness: float = 0.5) -> Instance:
    """Two wells on a ring separated by a tunable barrier.

    Every excited state sits at or above ``well``, so the excitation gap is
    ``well`` and the end temperature does not depend on ``barrier``. Keeping
    ``barrier < wall`` fixes ``E_M = well + wall``; the annealing length of
    the quantum schedule is then the same for the whole sweep.
    """
    if not 0 <= barrier < wall:
        raise ValueError(f"need 0 <= barrier < wall, got barrier={barrier}, wall={wall}")
    if not well > 0:
        raise ValueError("well energy must be positive")
    model = build_model(barrier_energies(d, barrier, well, wall))
    return Instance("", "barrier_chain", model, ring_proposal(d), laziness,
                    {"d": d, "barrier": barrier, "well": well, "wall": wall, "laziness": laziness})


def ising_energies(n_spins: int, coupling: float, field: float) -> np.ndarray:
    """``-J sum s_i s_{i+1} - h sum s_i`` on a periodic ring, ``s = 1 - 2 bit``."""
    idx = np.arange(1 << n_spins)
    spins = 1 - 2 * ((idx[:, None] >> np.arange(n_spins)[None, :]) & 1)
    bonds = (spins * np.roll(spins, -1, axis=1)).sum(axis=1)
    return -coupling * bonds - field * spins.sum(axis=1)


def ising_ring(n_spins: int = 3, coupling: float = 1.0, field: float = 0.5,
               laziness: float = 0.5) -> Instance:
    if not 2 <= n_spins <= 12:
        raise ValueError("ising_ring supports 2..12 spins")
    model = build_model(ising_energies(n_spins, coupling, field))
    return Instance("", "ising_ring", model, single_flip_proposal(n_spins), laziness,
                    {"n_spins": n_spins, "coupling": coupling, "field": field, "laziness": laziness})


def random_energies(d: int = 6, seed: int = 0, levels: int = 4, proposal: str = "complete",
                    laziness: float = 0.5) -> Instance:
    """Integer energies in ``[0, levels)`` with at least two distinct values."""
    rng = np.random.default_rng([seed, d, levels])
    e = rng.integers(0, levels, d).astype(float)
    while e.min() == e.max():
        e = rng.integers(0, levels, d).astype(float)
    if proposal == "complete":
        q = complete_proposal(d)
    elif proposal == "cycles":
        q = random_cycle_proposal(d, rng)
    elif proposal == "ring":
        q = ring_proposal(d)
    else:
        raise ValueError(f"unknown proposal {proposal!r}")
    return Instance("", "random_energies", build_model(e), q, laziness,
                    {"d": d, "seed": seed, "levels": levels, "proposal": proposal, "laziness": laziness})


_FAMILY_BUILDERS = {
    "two_level": two_level,
    "barrier_chain": barrier_chain,
    "random_energies": random_energies,
    "ising_ring": ising_ring,
}


def gap_family(family: str, parameter_grid: list[dict]) -> list[Instance]:
    """One :class:`Instance` per parameter set, ids ``family-000``, ``family-001``, ..."""
    if family not in _FAMILY_BUILDERS:
        raise UnknownFamily(f"unknown family {family!r}; choose from {FAMILIES}")
    if not parameter_grid:
        raise ValueError("parameter grid is empty")
    out = []
    for i, params in enumerate(parameter_grid):
        inst = _FAMILY_BUILDERS[family](**params)
        out.append(Instance(f"{family}-{i:03d}", family, inst.model, inst.proposal,
                            inst.laziness, inst.params))
    return out


def estimate_gap(model: EnergyModel, builder, beta_f: float, grid: int = 41) -> float:
    """Minimum ``1 - lambda_1`` over ``[0, beta_f]``: grid scan plus local refinement."""
    betas = np.linspace(0.0, beta_f, grid)
    gaps = np.array([min_spectral_gap(model, builder, [b]) for b in betas])
    k = int(np.argmin(gaps))
    lo, hi = betas[max(k - 1, 0)], betas[min(k + 1, grid - 1)]
    if hi > lo:
        res = scipy.optimize.minimize_scalar(
            lambda b: min_spectral_gap(model, builder, [b]), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-8 * max(1.0, beta_f)})
        return float(min(gaps[k], res.fun))
    return float(gaps[k])


def derived_seed(*parts: int) -> int:
    """64-bit seed for a sub-stream, e.g. ``derived_seed(seed, instance, run)``."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


# -- configuration -------------------------------------------------------------


_FAMILY_KEYS = {
    "two_level": {"laziness": float, "gap": float},
    "barrier_chain": {"d": int, "barrier": float, "well": float, "wall": float, "laziness": float},
    "random_energies": {"d": int, "instance_seed": int, "levels": int, "proposal": str,
                        "laziness": float},
    "ising_ring": {"n_spins": int, "coupling": float, "field": float, "laziness": float},
}
_GLOBAL_KEYS = {
    "family": str, "epsilon": float, "tau": float, "c_q": float, "c_pea": float,
    "runs": int, "seed": int, "backend": str, "mode": str, "completion_seed": int,
}


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    grid: tuple = ()
    epsilon: float = 0.1
    tau: float = DEFAULT_TAU
    c_q: float = 1.0
    c_pea: float = 1.0
    runs: int = 0
    seed: int = 0
    backend: str = "analytic"
    mode: str = "measure-each"
    completion_seed: int = 0
    source: tuple = ()

    def instances(self) -> list[Instance]:
        grid = [dict(g) for g in self.grid] or [{}]
        for g in grid:
            if "instance_seed" in g:
                g["seed"] = g.pop("instance_seed")
        return gap_family(self.family, grid)

    def header_lines(self) -> list[str]:
        """Effective settings, one ``key=value`` per line, in a fixed order."""
        lines = [f"{k}={v}" for k, v in self.source]
        for k in ("epsilon", "tau", "c_q", "c_pea", "runs", "seed", "backend", "mode",
                  "completion_seed"):
            lines.append(f"effective.{k}={format_value(getattr(self, k))}")
        return lines

    def overridden(self, **kw) -> "ExperimentConfig":
        from dataclasses import replace

        kw = {k: v for k, v in kw.items() if v is not None}
        cfg = replace(self, **kw)
        _validate_globals(cfg)
        return cfg


def format_value(v) -> str:
    # repr of a float is the shortest string that round-trips, on every platform
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _parse_scalar(key: str, text: str, kind):
    try:
        if kind is int:
            return int(text)
        if kind is float:
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        return text
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {kind.__name__}") from None


def _parse_values(key: str, text: str, kind) -> list:
    """Comma list; numeric entries may be inclusive ranges ``start:stop:step``."""
    out = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            raise ConfigError(key, "empty list entry")
        if ":" in part and kind in (int, float):
            bits = part.split(":")
            if len(bits) != 3:
                raise ConfigError(key, f"range {part!r} must be start:stop:step")
            a, b, s = (_parse_scalar(key, x, kind) for x in bits)
            if not s > 0 or b < a:
                raise ConfigError(key, f"range {part!r} must have stop >= start and step > 0")
            n = int(math.floor((b - a) / s + 1e-9)) + 1
            out.extend(kind(a + i * s) if kind is int else round(a + i * s, 12) for i in range(n))
        else:
            out.append(_parse_scalar(key, part, kind))
    return out


def _validate_globals(cfg: ExperimentConfig) -> None:
    if not 0 < cfg.epsilon < 1:
        raise ConfigError("epsilon", f"must lie in (0, 1), got {cfg.epsilon}")
    for key in ("tau", "c_q", "c_pea"):
        if not getattr(cfg, key) > 0:
            raise ConfigError(key, "must be positive")
    if cfg.runs < 0:
        raise ConfigError("runs", "must be >= 0")
    if cfg.backend not in ("analytic", "dense"):
        raise ConfigError("backend", f"must be analytic or dense, got {cfg.backend!r}")
    if cfg.mode not in ("measure-each", "deferred"):
        raise ConfigError("mode", f"must be measure-each or deferred, got {cfg.mode!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat ``key=value`` text; ``#`` starts a comment.

    Family parameters accept comma lists (and numeric ranges); the instance
    grid is their Cartesian product in the order the keys appear.
    """
    entries: list[tuple[str, str]] = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if any(k == key for k, _ in entries):
            raise ConfigError(key, "given more than once")
        entries.append((key, value))
    values = dict(entries)
    if "family" not in values:
        raise ConfigError("family", "missing")
    family = values["family"]
    if family not in _FAMILY_KEYS:
        raise ConfigError("family", f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    fam_keys = _FAMILY_KEYS[family]
    kwargs = {}
    axes = []
    for key, value in entries:
        if key in _GLOBAL_KEYS:
            if key != "family":
                kwargs[key] = _parse_scalar(key, value, _GLOBAL_KEYS[key])
        elif key in fam_keys:
            axes.append((key, _parse_values(key, value, fam_keys[key])))
        else:
            raise ConfigError(key, f"unknown key for family {family}")
    names = [k for k, _ in axes]
    grid = tuple(tuple(zip(names, combo)) for combo in itertools.product(*(v for _, v in axes)))
    cfg = ExperimentConfig(family=family, grid=grid, source=tuple(entries), **kwargs)
    _validate_globals(cfg)
    try:
        cfg.instances()
    except (ValueError, TypeError) as exc:
        raise ConfigError(names[0] if names else "family", str(exc)) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("path", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


# -- scaling -----------------------------------------------------------------


@dataclass(frozen=True)
class InstanceMeasurement:
    instance_id: str
    d: int
    delta: float
    beta_f: float
    sa_scheduled: int
    sa_measured: int | None
    sa_error: float
    qsa_q: int
    qsa_p: int
    qsa_walk_calls: int
    qsa_p_zeros: float
    qsa_failure: float
    sampled_success: float | None
    n_sa_law: float
    n_qsa_law: float


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    points: int


def fit_slope(deltas, costs) -> SlopeFit:
    """Least squares of ``log cost`` against ``log delta``."""
    x = np.log(np.asarray(deltas, dtype=float))
    y = np.log(np.asarray(costs, dtype=float))
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 3:
        return SlopeFit(float("nan"), float("nan"), float("nan"), int(ok.sum()))
    res = scipy.stats.linregress(x[ok], y[ok])
    return SlopeFit(float(res.slope), float(res.stderr), float(res.intercept), int(ok.sum()))


@dataclass
class ScalingReport:
    config: ExperimentConfig
    rows: list[InstanceMeasurement]
    s_sa: SlopeFit
    s_qsa: SlopeFit

    @property
    def decades(self) -> float:
        d = np.array([r.delta for r in self.rows])
        return float(np.log10(d.max() / d.min())) if d.size else 0.0

    def separation_upper(self, z: float = 1.96) -> float:
        """Upper confidence limit of ``s_sa - s_qsa``."""
        return (self.s_sa.slope - self.s_qsa.slope) + z * math.hypot(self.s_sa.stderr, self.s_qsa.stderr)

    def envelope(self) -> tuple[float, float]:
        """Largest measured/predicted ratio (either direction) for SA and QSA."""
        sa = [max(r.sa_measured / r.sa_scheduled, r.sa_scheduled / r.sa_measured)
              for r in self.rows if r.sa_measured]
        qs = [max(r.qsa_walk_calls / r.n_qsa_law, r.n_qsa_law / r.qsa_walk_calls) for r in self.rows]
        return (max(sa) if sa else float("nan"), max(qs) if qs else float("nan"))

    def write_csv(self, out: TextIO) -> None:
        for line in self.config.header_lines():
            out.write(f"# {line}\n")
        w = csv.writer(out, lineterminator="\n")
        cols = list(InstanceMeasurement.__dataclass_fields__)
        w.writerow(cols)
        for r in self.rows:
            w.writerow(["" if getattr(r, c) is None else format_value(getattr(r, c)) for c in cols])

    def text(self) -> str:
        lines = ["scaling report", *("  " + s for s in self.config.header_lines()), ""]
        lines.append(f"{'instance':<20} {'delta':>11} {'sa_sched':>10} {'sa_meas':>10} "
                     f"{'qsa_calls':>11} {'qsa_law':>11} {'qsa_fail':>9}")
        for r in self.rows:
            meas = "-" if r.sa_measured is None else str(r.sa_measured)
            lines.append(f"{r.instance_id:<20} {r.delta:>11.4e} {r.sa_scheduled:>10d} {meas:>10} "
                         f"{r.qsa_walk_calls:>11d} {r.n_qsa_law:>11.4e} {r.qsa_failure:>9.2e}")
        lines.append("")
        lines.append(f"gap range: {self.decades:.2f} decades over {len(self.rows)} instances")
        lines.append(f"s_sa  = {self.s_sa.slope:+.4f} +- {self.s_sa.stderr:.4f}")
        lines.append(f"s_qsa = {self.s_qsa.slope:+.4f} +- {self.s_qsa.stderr:.4f}")
        lines.append(f"s_sa - s_qsa upper 95% limit: {self.separation_upper():+.4f}")
        env_sa, env_q = self.envelope()
        lines.append(f"measured/predicted envelope: sa {env_sa:.3g}x, qsa {env_q:.3g}x")
        return "\n".join(lines) + "\n"


def sample_runs(model: EnergyModel, schedule, builder, cfg: ExperimentConfig, index: int) -> list:
    """``cfg.runs`` sampled QSA runs seeded ``derived_seed(cfg.seed, index, run)``."""
    seeds = [derived_seed(cfg.seed, index, r) for r in range(cfg.runs)]
    return run_qsa_batch(model, schedule, builder, seeds, backend=cfg.backend, mode=cfg.mode,
                         completion_seed=cfg.completion_seed)


def measure_instance(inst: Instance, cfg: ExperimentConfig, index: int = 0) -> InstanceMeasurement:
    """Gap, classical first-passage cost and certified quantum cost of one instance."""
    model = inst.model
    builder = inst.builder()
    beta_f = target_beta(model, cfg.epsilon)
    delta = estimate_gap(model, builder, beta_f)
    sched = sa_schedule(model, delta, cfg.epsilon, cfg.tau)
    k, err = first_passage(model, sched, builder, cfg.epsilon)
    qs = qsa_schedule(model, delta, cfg.epsilon, cfg.c_q, cfg.c_pea)
    exact = qsa_success_exact(model, qs, builder, completion_seed=cfg.completion_seed)
    sampled = None
    if cfg.runs:
        sampled = sum(r.success for r in sample_runs(model, qs, builder, cfg, index)) / cfg.runs
    pred = predicted_costs(model, delta, cfg.epsilon, cfg.tau, cfg.c_q, cfg.c_pea)
    return InstanceMeasurement(
        instance_id=inst.instance_id, d=model.d, delta=delta, beta_f=beta_f,
        sa_scheduled=sched.steps, sa_measured=k, sa_error=err,
        qsa_q=qs.q_steps, qsa_p=qs.pea.p, qsa_walk_calls=qs.walk_budget,
        qsa_p_zeros=exact.p_zeros, qsa_failure=exact.failure, sampled_success=sampled,
        n_sa_law=pred.n_sa_law, n_qsa_law=pred.n_qsa_law,
    )


def scaling_experiment(cfg: ExperimentConfig) -> ScalingReport:
    rows = [measure_instance(inst, cfg, i) for i, inst in enumerate(cfg.instances())]
    deltas = [r.delta for r in rows]
    s_sa = fit_slope(deltas, [r.sa_measured if r.sa_measured else np.nan for r in rows])
    s_qsa = fit_slope(deltas, [r.qsa_walk_calls for r in rows])
    return ScalingReport(cfg, rows, s_sa, s_qsa)
