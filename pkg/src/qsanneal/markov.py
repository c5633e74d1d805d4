"""Reversible transition kernels, their symmetrization and spectra.

Orientation: ``matrix[j, i]`` is the probability of moving from state ``i`` to
state ``j``, so every column sums to one and a distribution evolves as
``mu_next = matrix @ mu``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Iterable, TextIO

import numpy as np
import scipy.linalg

from .energy_model import BoltzmannDist, EnergyModel, boltzmann, gibbs_amplitudes
from .errors import InvalidKernel, InvalidProposal, MismatchError, NegativeEigenvalue

STOCHASTIC_TOL = 1e-12
SIMILARITY_TOL = 1e-10
SPECTRUM_TOL = 1e-9
NEGATIVE_TOL = 1e-8


@dataclass(frozen=True)
class TransitionKernel:
    beta: float
    matrix: np.ndarray
    laziness: float = 0.0

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidKernel(f"kernel must be square, got shape {m.shape}")
        if m.min() < -STOCHASTIC_TOL or m.max() > 1 + STOCHASTIC_TOL:
            raise InvalidKernel("kernel entries must lie in [0, 1]")
        if np.abs(m.sum(axis=0) - 1).max() > STOCHASTIC_TOL:
            raise InvalidKernel("kernel columns must sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SymmetricKernel:
    matrix: np.ndarray
    beta: float


@dataclass(frozen=True)
class KernelSpectrum:
    """Descending eigen-decomposition of a symmetrized kernel.

    ``eigvecs[:, j]`` is the eigenvector for ``lambdas[j]``; column 0 is the
    Gibbs amplitude vector with a positive sign convention.
    """

    lambdas: np.ndarray
    phis: np.ndarray
    eigvecs: np.ndarray
    delta: float
    beta: float = float("nan")

    @property
    def d(self) -> int:
        return self.lambdas.shape[0]

    @property
    def degenerate(self) -> bool:
        return self.delta <= 0.0


@dataclass(frozen=True)
class BalanceReport:
    max_violation: float
    pair: tuple[int, int]


def check_proposal(proposal: np.ndarray) -> np.ndarray:
    q = np.asarray(proposal, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise InvalidProposal(f"proposal must be square, got shape {q.shape}")
    if np.abs(q - q.T).max() > STOCHASTIC_TOL:
        raise InvalidProposal("proposal must be symmetric")
    if q.min() < 0:
        raise InvalidProposal("proposal entries must be non-negative")
    if np.abs(q.sum(axis=0) - 1).max() > STOCHASTIC_TOL:
        raise InvalidProposal("proposal columns must sum to 1")
    if np.abs(np.diag(q)).max() > STOCHASTIC_TOL:
        raise InvalidProposal("proposal must have a zero diagonal")
    return q


def metropolis_kernel(
    model: EnergyModel, beta: float, proposal: np.ndarray, laziness: float = 0.5
) -> TransitionKernel:
    """Lazy Metropolis kernel for ``model`` at inverse temperature ``beta``.

    A move ``i -> j`` is proposed with ``proposal[j, i]`` and accepted with
    ``min(1, exp(-beta (E[j] - E[i])))``; with probability ``laziness`` the
    chain stays put. The diagonal absorbs all rejected mass.
    """
    if not 0.0 <= laziness < 1.0:
        raise ValueError(f"laziness must lie in [0, 1), got {laziness}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    q = check_proposal(proposal)
    if q.shape[0] != model.d:
        raise InvalidProposal(f"proposal is {q.shape[0]}x{q.shape[0]}, model has {model.d} states")
    return TransitionKernel(beta, _metropolis_matrix(model.energies, beta, q, laziness), laziness)


def _metropolis_matrix(energies, beta, q, laziness):
    # uphill[j, i] = max(E[j] - E[i], 0)
    uphill = np.maximum(energies[:, None] - energies[None, :], 0.0)
    m = (1.0 - laziness) * q * np.exp(-beta * uphill)
    np.fill_diagonal(m, 0.0)
    m[np.diag_indices_from(m)] = 1.0 - m.sum(axis=0)
    return m


def metropolis_builder(
    model: EnergyModel, proposal: np.ndarray, laziness: float = 0.5
) -> Callable[[float], TransitionKernel]:
    """Return ``beta -> metropolis_kernel(model, beta, proposal, laziness)``.

    The returned callable also has a ``raw(beta)`` attribute producing the
    bare matrix without validation, for hot loops.
    """
    q = check_proposal(proposal)
    if not 0.0 <= laziness < 1.0:
        raise ValueError(f"laziness must lie in [0, 1), got {laziness}")

    def build(beta: float) -> TransitionKernel:
        return TransitionKernel(beta, _metropolis_matrix(model.energies, beta, q, laziness), laziness)

    build.raw = lambda beta: _metropolis_matrix(model.energies, beta, q, laziness)
    return build


def verify_detailed_balance(kernel: TransitionKernel, dist: BoltzmannDist) -> BalanceReport:
    """Largest flux imbalance ``|pi_i m_{i->j} - pi_j m_{j->i}|`` over all pairs."""
    m = np.asarray(kernel.matrix)
    pi = dist.probabilities
    if m.shape[0] != pi.shape[0]:
        raise ValueError("kernel and distribution dimensions differ")
    flux = m * pi[None, :]  # flux[j, i] = pi_i m_{i->j}
    resid = np.abs(flux - flux.T)
    j, i = np.unravel_index(int(np.argmax(resid)), resid.shape)
    return BalanceReport(float(resid[j, i]), (int(min(i, j)), int(max(i, j))))


def symmetrize(kernel: TransitionKernel, model: EnergyModel) -> SymmetricKernel:
    """Symmetric kernel ``h_ij = sqrt(m_ij m_ji)``, cross-checked by similarity.

    The similarity form ``exp(beta E_i / 2) M_ij exp(-beta E_j / 2)`` only
    equals the geometric mean when detailed balance holds, so a disagreement
    raises :class:`MismatchError`.
    """
    m = np.asarray(kernel.matrix)
    h = np.sqrt(m * m.T)
    e = model.energies
    with np.errstate(divide="ignore"):
        log_m = np.log(m)
    sim = np.exp(0.5 * kernel.beta * (e[:, None] - e[None, :]) + log_m)
    err = float(np.abs(sim - h).max())
    if err > SIMILARITY_TOL:
        raise MismatchError(f"similarity and geometric-mean forms differ by {err:.3e}")
    h = 0.5 * (h + h.T)
    h.setflags(write=False)
    return SymmetricKernel(h, kernel.beta)


def kernel_spectrum(sym: SymmetricKernel, kernel: TransitionKernel | None = None) -> KernelSpectrum:
    """Full eigen-decomposition of ``sym``, sorted descending.

    When ``kernel`` is given its eigenvalues are recomputed with a general
    (non-symmetric) solver and compared against those of ``sym``.
    """
    lam, vec = scipy.linalg.eigh(sym.matrix)
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    vec = vec[:, order]
    if lam[-1] < -NEGATIVE_TOL:
        raise NegativeEigenvalue(f"smallest eigenvalue {lam[-1]:.3e} < 0; increase laziness")
    if abs(lam[0] - 1.0) > 1e-10:
        raise MismatchError(f"top eigenvalue {lam[0]!r} differs from 1")
    if kernel is not None:
        gen = np.sort(np.linalg.eigvals(kernel.matrix).real)[::-1]
        err = float(np.abs(gen - lam).max())
        if err > SPECTRUM_TOL:
            raise MismatchError(f"spectra of M and H differ by {err:.3e}")
    # sign convention: largest-magnitude component positive (column 0 is then all positive)
    idx = np.argmax(np.abs(vec), axis=0)
    flip = np.sign(vec[idx, np.arange(vec.shape[1])])
    vec = vec * flip[None, :]
    lam = np.clip(lam, 0.0, 1.0)
    lam[0] = 1.0
    phis = np.arccos(lam)
    for a in (lam, phis, vec):
        a.setflags(write=False)
    delta = float(1.0 - lam[1]) if lam.shape[0] > 1 else 1.0
    return KernelSpectrum(lam, phis, vec, delta, sym.beta)


def spectrum_at(model: EnergyModel, builder: Callable[[float], TransitionKernel], beta: float) -> KernelSpectrum:
    kernel = builder(beta)
    return kernel_spectrum(symmetrize(kernel, model))


def min_spectral_gap(
    model: EnergyModel, builder: Callable[[float], TransitionKernel], betas: Iterable[float]
) -> float:
    """Smallest ``1 - lambda_1`` over the kernels at ``betas``."""
    gap = np.inf
    for b in betas:
        k = builder(float(b))
        h = symmetrize(k, model).matrix
        lam = scipy.linalg.eigh(h, eigvals_only=True, subset_by_index=[h.shape[0] - 2, h.shape[0] - 1])
        gap = min(gap, 1.0 - lam[0])
    return float(gap)


def stationary_residual(kernel: TransitionKernel, model: EnergyModel) -> float:
    """``||M pi - pi||_inf`` against the Boltzmann vector at the kernel's beta."""
    pi = boltzmann(model, kernel.beta).probabilities
    return float(np.abs(kernel.matrix @ pi - pi).max())


def gibbs_alignment(spectrum: KernelSpectrum, dist: BoltzmannDist) -> float:
    """Distance between the principal eigenvector and ``sqrt(pi)``."""
    return float(np.abs(spectrum.eigvecs[:, 0] - gibbs_amplitudes(dist)).max())


def dump_matrix(matrix: np.ndarray, out: TextIO) -> None:
    """Write a matrix as row-major text with 17 significant digits."""
    a = np.asarray(matrix)
    out.write(f"{a.shape[0]} {a.shape[1]}\n")
    for row in a:
        out.write(" ".join(f"{float(v):.17g}" for v in row))
        out.write("\n")


def load_matrix(path: str | os.PathLike) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        rows, cols = (int(t) for t in fh.readline().split())
        data = np.array([[float(t) for t in ln.split()] for ln in fh if ln.strip()])
    if data.shape != (rows, cols):
        raise ValueError(f"matrix header says {rows}x{cols}, body is {data.shape}")
    return data
