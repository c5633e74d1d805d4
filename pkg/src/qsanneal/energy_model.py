"""Finite energy landscapes and their Boltzmann equilibrium data.

States are the integers ``0 .. d-1``. Energies are stored shifted so that the
minimum is non-negative (a landscape whose minimum is already >= 0 is left
untouched); the applied shift is recorded on the model.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import AllDegenerate, TooSmall


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EnergyModel:
    """A cost function on ``d`` states.

    Attributes:
        energies: Per-state energy, after the non-negativity shift.
        ground_set: Indices of the minimizers.
        gamma: Smallest excitation above the ground energy.
        e_max: ``max |E|`` over the stored energies.
        shift: Constant added to the raw energies at construction.
    """

    energies: np.ndarray
    ground_set: tuple[int, ...]
    gamma: float
    e_max: float
    shift: float = 0.0

    @property
    def d(self) -> int:
        return int(self.energies.shape[0])

    @property
    def ground_mask(self) -> np.ndarray:
        mask = np.zeros(self.d, dtype=bool)
        mask[list(self.ground_set)] = True
        return mask

    @property
    def ground_energy(self) -> float:
        return float(self.energies[self.ground_set[0]])


@dataclass(frozen=True)
class BoltzmannDist:
    beta: float
    probabilities: np.ndarray
    partition: float
    log_partition: float = field(default=float("nan"))

    @property
    def d(self) -> int:
        return int(self.probabilities.shape[0])


def build_model(energies: Iterable[float]) -> EnergyModel:
    """Build an :class:`EnergyModel` from raw energies in state order.

    Raises:
        TooSmall: fewer than two states.
        AllDegenerate: every state is a ground state, so there is no gap.
    """
    e = np.asarray(list(energies) if not isinstance(energies, np.ndarray) else energies,
                   dtype=float).ravel()
    if e.shape[0] < 2:
        raise TooSmall(f"need at least 2 states, got {e.shape[0]}")
    if not np.all(np.isfinite(e)):
        raise ValueError("energies must be finite")
    e_min = float(e.min())
    shift = -e_min if e_min < 0 else 0.0
    e = e + shift
    e_min = float(e.min())
    ground = np.flatnonzero(e == e_min)
    if ground.size == e.size:
        raise AllDegenerate("all states share the minimum energy")
    excited = e[e != e_min]
    gamma = float(excited.min() - e_min)
    return EnergyModel(
        energies=_frozen(e),
        ground_set=tuple(int(i) for i in ground),
        gamma=gamma,
        e_max=float(np.abs(e).max()),
        shift=float(shift),
    )


def boltzmann(model: EnergyModel, beta: float) -> BoltzmannDist:
    """Equilibrium distribution ``exp(-beta E) / Z``, computed with log-sum-exp."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    e = model.energies
    e_min = float(e.min())
    w = np.exp(-beta * (e - e_min))
    s = float(w.sum())
    log_z = np.log(s) - beta * e_min
    return BoltzmannDist(
        beta=float(beta),
        probabilities=_frozen(w / s),
        partition=float(np.exp(log_z)),
        log_partition=float(log_z),
    )


def gibbs_amplitudes(dist: BoltzmannDist) -> np.ndarray:
    """Amplitudes ``sqrt(pi)`` of the coherent Gibbs state."""
    return np.sqrt(dist.probabilities)


def excited_mass(model: EnergyModel, probabilities: np.ndarray) -> float:
    """Probability mass outside the ground set."""
    return float(np.asarray(probabilities)[~model.ground_mask].sum())


def parse_model(text: str) -> EnergyModel:
    """Parse the plain-text model format.

    First line: ``d``. Then ``d`` lines ``index energy``; every index in
    ``0..d-1`` must appear exactly once. Decimal points only, no locale.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty model file")
    try:
        d = int(lines[0])
    except ValueError:
        raise ValueError(f"first line must be the state count, got {lines[0]!r}") from None
    if len(lines) - 1 != d:
        raise ValueError(f"expected {d} energy lines, got {len(lines) - 1}")
    energies = [None] * d
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"malformed line {ln!r}; expected 'index energy'")
        idx = int(parts[0])
        if not 0 <= idx < d or energies[idx] is not None:
            raise ValueError(f"bad or repeated state index {idx}")
        energies[idx] = float(parts[1])
    return build_model(energies)


def load_model(path: str | os.PathLike) -> EnergyModel:
    with open(path, encoding="ascii") as fh:
        return parse_model(fh.read())


def format_model(model: EnergyModel, raw: bool = True) -> str:
    """Serialize ``model``; with ``raw`` the construction shift is undone."""
    buf = io.StringIO()
    buf.write(f"{model.d}\n")
    e = model.energies - model.shift if raw else model.energies
    for i, v in enumerate(e):
        buf.write(f"{i} {float(v):.17g}\n")
    return buf.getvalue()
