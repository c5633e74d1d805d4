"""Phase estimation on the walk operator.

The ancilla register holds ``N = 2^p`` basis states. After the Hadamard
layer and the controlled powers of ``W`` an eigenvector with phase ``theta``
carries ancilla amplitudes ``e^{i m' theta} / sqrt(N)``; the inverse Fourier
transform then maps these to

    o(theta, m) = (1/N) sum_{m'} exp(i m' (theta - 2 pi m / N)),

which :func:`pea_amplitude` evaluates in closed form. Joint dense states are
stored as arrays of shape ``(N, d*d)`` (ancilla value first).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import TextIO

import numpy as np

from .errors import DimensionTooLarge, RegisterTooWide
from .qwalk import WalkBasisState, WalkOperator

MAX_P = 24
MAX_DENSE_AMPLITUDES = 2**22
_CHUNK = 1 << 15


@dataclass(frozen=True)
class PeaConfig:
    p: int
    c_pea: float = 1.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"register width must be >= 1, got {self.p}")
        if self.p > MAX_P:
            raise RegisterTooWide(f"p={self.p} exceeds the {MAX_P}-qubit cap")

    @property
    def n(self) -> int:
        return 1 << self.p

    @property
    def walk_calls(self) -> int:
        """Controlled-walk applications in one estimation: ``2^p - 1``."""
        return self.n - 1


def choose_p(nu: float, delta: float, c_pea: float = 1.0) -> PeaConfig:
    """Smallest ``p >= 1`` with ``2^p >= c_pea / (nu sqrt(delta))``."""
    if not nu > 0 or not delta > 0:
        raise ValueError(f"nu and delta must be positive, got nu={nu}, delta={delta}")
    if not c_pea > 0:
        raise ValueError(f"c_pea must be positive, got {c_pea}")
    target = c_pea / (nu * math.sqrt(delta))
    p = max(1, math.ceil(math.log2(target))) if target > 1 else 1
    while p > 1 and 2.0 ** (p - 1) >= target:
        p -= 1
    while 2.0**p < target:
        p += 1
    if p > MAX_P:
        raise RegisterTooWide(f"need p={p} ancillas for target 2^p >= {target:.3e}; cap is {MAX_P}")
    return PeaConfig(p, c_pea)


def _offsets(phase, m, n):
    x = np.asarray(phase, dtype=float) - 2.0 * np.pi * np.asarray(m, dtype=float) / n
    return np.mod(x + np.pi, 2.0 * np.pi) - np.pi


def pea_amplitudes(phase, m, p: int) -> np.ndarray:
    """Vectorized :func:`pea_amplitude`; ``phase`` and ``m`` broadcast."""
    n = 1 << p
    x = _offsets(phase, m, n)
    den = np.sin(0.5 * x)
    safe = np.where(den == 0.0, 1.0, den)
    ratio = np.where(den == 0.0, 1.0, np.sin(0.5 * n * x) / (n * safe))
    return np.exp(0.5j * (n - 1) * x) * ratio


def pea_probabilities(phase, m, p: int) -> np.ndarray:
    """``|o(phase, m)|^2`` without forming complex numbers."""
    n = 1 << p
    x = _offsets(phase, m, n)
    den = np.sin(0.5 * x)
    safe = np.where(den == 0.0, 1.0, den)
    return np.where(den == 0.0, 1.0, (np.sin(0.5 * n * x) / (n * safe)) ** 2)


def pea_amplitude(phase: float, m: int, p: int) -> complex:
    """Ancilla amplitude ``o(phase, m)`` for an eigenvector of eigenphase ``phase``."""
    if not 0 <= m < (1 << p):
        raise ValueError(f"outcome {m} outside [0, 2^{p})")
    return complex(pea_amplitudes(phase, m, p))


def qft(v: np.ndarray, axis: int = 0) -> np.ndarray:
    """``|m> -> N^{-1/2} sum_k e^{+2 pi i m k / N} |k>`` along ``axis``."""
    v = np.asarray(v)
    n = v.shape[axis]
    if n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    return np.fft.ifft(v, axis=axis) * math.sqrt(n)


def inverse_qft(v: np.ndarray, axis: int = 0) -> np.ndarray:
    """``|m> -> N^{-1/2} sum_k e^{-2 pi i m k / N} |k>`` along ``axis``."""
    v = np.asarray(v)
    n = v.shape[axis]
    if n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    return np.fft.fft(v, axis=axis) / math.sqrt(n)


# -- analytic backend ------------------------------------------------------


@dataclass(frozen=True)
class PeaOutcome:
    m: int
    probability: float
    post_state: object


class PeaDistribution:
    """Outcome law of one phase estimation applied to a :class:`WalkBasisState`.

    The residual component of the state has eigenphase 0 and therefore
    lands on ``m = 0`` together with ``c0``.
    """

    def __init__(self, state: WalkBasisState, walk: WalkOperator, config: PeaConfig):
        self.state = state
        self.walk = walk
        self.config = config
        plus, minus = walk.phases()
        self._phases = np.concatenate([plus, minus])
        self._amps = np.concatenate([state.cplus, state.cminus])
        self._weights = np.abs(self._amps) ** 2
        self._zero_mass = abs(state.c0) ** 2 + state.leaked
        self._probs: np.ndarray | None = None

    def probability(self, m: int) -> float:
        p = float(self._weights @ pea_probabilities(self._phases, m, self.config.p))
        return p + (self._zero_mass if m == 0 else 0.0)

    def probabilities(self) -> np.ndarray:
        """Full outcome vector of length ``2^p``."""
        if self._probs is None:
            n = self.config.n
            out = np.empty(n)
            for lo in range(0, n, _CHUNK):
                ms = np.arange(lo, min(n, lo + _CHUNK))
                out[lo:lo + ms.size] = self._weights @ pea_probabilities(
                    self._phases[:, None], ms[None, :], self.config.p)
            out[0] += self._zero_mass
            self._probs = out
        return self._probs

    def branch(self, m: int) -> WalkBasisState:
        """Unnormalized system state conditioned on outcome ``m``."""
        o = pea_amplitudes(self._phases, m, self.config.p)
        k = self.state.cplus.shape[0]
        amps = self._amps * o
        keep = m == 0
        resid = self.state.residual
        return WalkBasisState(
            c0=self.state.c0 if keep else 0.0,
            cplus=amps[:k],
            cminus=amps[k:],
            residual=resid if keep or resid is None else np.zeros_like(resid),
            leaked=self.state.leaked if keep else 0.0,
        )

    def outcome(self, m: int) -> PeaOutcome:
        prob = self.probability(m)
        br = self.branch(m)
        if prob <= 0.0:
            return PeaOutcome(m, 0.0, None)
        s = 1.0 / math.sqrt(prob)
        post = replace(
            br,
            c0=br.c0 * s,
            cplus=br.cplus * s,
            cminus=br.cminus * s,
            residual=None if br.residual is None else br.residual * s,
            leaked=br.leaked / prob,
        )
        return PeaOutcome(m, prob, post)

    def sample(self, u: float) -> int:
        """Outcome by inverse CDF of a uniform ``u`` in ``[0, 1)``."""
        if u < self.probability(0):
            return 0
        cdf = np.cumsum(self.probabilities())
        return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), cdf.size - 1))


def pea_analytic(state: WalkBasisState, walk: WalkOperator, config: PeaConfig) -> PeaDistribution:
    return PeaDistribution(state, walk, config)


def pea_channel_analytic(rho: np.ndarray, walk: WalkOperator, config: PeaConfig) -> np.ndarray:
    """Phase estimation followed by discarding the ancillas, on a density matrix.

    Ancilla outcomes of eigen-components ``l`` and ``l'`` overlap as
    ``sum_m o(t_l, m) conj(o(t_l', m)) = o(t_l - t_l', 0)``, so coherences are
    damped by that factor; the residual subspace behaves as phase 0.
    """
    vecs, phases = walk.eigenvectors()
    damp = pea_amplitudes(phases[:, None] - phases[None, :], 0, config.p)
    f = damp[:, 0]  # o(t_l, 0), since phases[0] == 0
    a = vecs.conj().T @ rho @ vecs
    b = vecs.conj().T @ rho - a @ vecs.conj().T  # E^dag rho (1 - E E^dag)
    c = rho - vecs @ (vecs.conj().T @ rho) - (rho @ vecs) @ vecs.conj().T + vecs @ a @ vecs.conj().T
    cross = vecs @ (f[:, None] * b)
    return vecs @ (damp * a) @ vecs.conj().T + cross + cross.conj().T + c


# -- dense backend ---------------------------------------------------------


def _pea_dense_batch(joint: np.ndarray, w: np.ndarray, p: int, fourier: bool) -> tuple[np.ndarray, int]:
    # joint: (N, D, K)
    n = 1 << p
    rest = joint.shape[1:]
    st = joint.astype(complex, copy=True)
    for i in range(1, p + 1):
        v = st.reshape((n >> i, 2, 1 << (i - 1)) + rest)
        a0 = v[:, 0].copy()
        a1 = v[:, 1]
        v[:, 0] = (a0 + a1) / math.sqrt(2.0)
        v[:, 1] = (a0 - a1) / math.sqrt(2.0)
    calls = 0
    ms = np.arange(n)
    for i in range(1, p + 1):
        sel = ((ms >> (i - 1)) & 1).astype(bool)
        sub = st[sel]
        for _ in range(1 << (i - 1)):
            sub = np.einsum("ab,nb...->na...", w, sub)
        calls += 1 << (i - 1)
        st[sel] = sub
    if fourier:
        st = inverse_qft(st, axis=0)
    return st, calls


def pea_dense(statevector: np.ndarray, walk: WalkOperator, config: PeaConfig,
              fourier: bool = True) -> np.ndarray:
    """Full statevector phase estimation with repeated dense walk applications.

    Ancilla qubit ``i`` (bit ``i-1`` of the register value) controls
    ``W^{2^{i-1}}``. ``statevector`` may be flat (length ``2^p d^2``) or shaped
    ``(2^p, d^2)``; the output has the same shape. With ``fourier=False`` the
    inverse Fourier transform is skipped.
    """
    if walk.dense is None:
        raise ValueError("dense phase estimation needs a dense walk operator")
    dim = walk.dense.shape[0]
    if config.n * dim > MAX_DENSE_AMPLITUDES:
        raise DimensionTooLarge(f"2^p * d^2 = {config.n * dim} exceeds {MAX_DENSE_AMPLITUDES}")
    v = np.asarray(statevector)
    joint = v.reshape(config.n, dim)
    out, _ = _pea_dense_batch(joint, walk.dense, config.p, fourier)
    return out.reshape(v.shape)


def pea_kraus_dense(walk: WalkOperator, config: PeaConfig, fourier: bool = True) -> np.ndarray:
    """Operators ``K_m`` (shape ``(2^p, D, D)``) with ``K_m psi = <m| PEA |0, psi>``."""
    if walk.dense is None:
        raise ValueError("dense phase estimation needs a dense walk operator")
    dim = walk.dense.shape[0]
    if config.n * dim * dim > 8 * MAX_DENSE_AMPLITUDES:
        raise DimensionTooLarge("Kraus set too large for the dense backend")
    joint = np.zeros((config.n, dim, dim), dtype=complex)
    joint[0] = np.eye(dim)
    out, _ = _pea_dense_batch(joint, walk.dense, config.p, fourier)
    return out


def apply_kraus(kraus: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("mab,bc,mdc->ad", kraus, rho, kraus.conj())


def write_histogram_csv(probabilities: np.ndarray, out: TextIO) -> None:
    """CSV columns ``m,probability``."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["m", "probability"])
    for m, pr in enumerate(np.asarray(probabilities)):
        w.writerow([m, f"{float(pr):.17g}"])
