"""Bipartite quantum walk ``W(M) = R2 R1`` built from a reversible kernel.

Vectors on ``H_A (x) H_B`` are flat arrays of length ``d*d`` with index
``a * d + b``; reshaping to ``(d, d)`` gives rows indexed by the A register.
The marker state is basis index 0 of each factor, so ``span{|s, 0>}`` is
column 0 of the reshaped array.

Two representations share one completion rule for ``U_X``:

* dense: the ``d^2 x d^2`` real orthogonal matrix, for cross-validation;
* spectral: eigen-coordinates derived from the kernel spectrum, used by the
  analytic backend and never forming ``W``.

The default ("controlled") completion acts blockwise,
``U_X = sum_s |s><s| (x) V_s`` with ``V_s |0> = sqrt(m_{s->.})``. Each block
is ``V_s = G_s F`` where ``G_s`` is the plane rotation taking ``|0>`` to the
row of square-root transition amplitudes and ``F`` is a seeded orthogonal
matrix fixing ``|0>``. The "generic" completion instead fills the complement
of ``range(X)`` with a seeded random orthonormal basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy_model import EnergyModel, boltzmann, gibbs_amplitudes
from .errors import CompletionFailure, DimensionTooLarge, ZeroGap
from .markov import KernelSpectrum, SymmetricKernel, TransitionKernel, kernel_spectrum, symmetrize

MAX_DENSE_D = 64
ISOMETRY_TOL = 1e-10
MIN_SINE = 1e-7


@dataclass(frozen=True)
class Completion:
    seed: int = 0
    kind: str = "controlled"

    def __post_init__(self):
        if self.kind not in ("controlled", "generic"):
            raise ValueError(f"unknown completion kind {self.kind!r}")


def _seeded_frame(d: int, seed: int) -> np.ndarray:
    """Orthogonal ``d x d`` matrix with ``F e0 = e0``, drawn from ``seed``."""
    rng = np.random.default_rng([seed, d])
    f = np.eye(d)
    if d > 2:
        q, r = np.linalg.qr(rng.standard_normal((d - 1, d - 1)))
        f[1:, 1:] = q * np.sign(np.diag(r))[None, :]
    elif d == 2 and rng.random() < 0.5:
        f[1, 1] = -1.0
    return f


def isometries(kernel: TransitionKernel) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``X`` and ``Y`` as ``d^2 x d`` matrices.

    ``X|s> = |s> sum_t sqrt(m_{s->t}) |t>`` and
    ``Y|t> = sum_s sqrt(m_{t->s}) |s>|t>``.
    """
    d = kernel.d
    s = np.sqrt(kernel.matrix)  # s[t, u] = sqrt(m_{u->t})
    x = np.zeros((d, d, d))
    y = np.zeros((d, d, d))
    idx = np.arange(d)
    x[idx, :, idx] = s.T
    y[:, idx, idx] = s
    return x.reshape(d * d, d), y.reshape(d * d, d)


@dataclass(frozen=True)
class WalkBasisState:
    """A state in eigen-coordinates of one walk operator.

    ``cplus[j-1]`` / ``cminus[j-1]`` are the amplitudes on the eigenvectors
    with phases ``+2 phi_j`` / ``-2 phi_j``. ``residual`` is the (flat)
    component orthogonal to all of them; the walk acts on it as the
    identity. ``leaked`` is its squared norm.
    """

    c0: complex
    cplus: np.ndarray
    cminus: np.ndarray
    residual: np.ndarray | None = None
    leaked: float = 0.0

    def norm2(self) -> float:
        return float(abs(self.c0) ** 2 + np.sum(np.abs(self.cplus) ** 2)
                     + np.sum(np.abs(self.cminus) ** 2) + self.leaked)


@dataclass(frozen=True)
class WalkSpectrumView:
    phases: np.ndarray
    relevant_dim: int
    residual_zero: int
    residual_pi: int


@dataclass(frozen=True)
class WalkOperator:
    """``W(M)`` for one kernel, with optional dense matrix.

    The spectral methods (:meth:`basis_state`, :meth:`state_vector`) work in
    either case; ``dense`` is only populated by :func:`build_walk_dense`.
    """

    kernel: TransitionKernel
    spectrum: KernelSpectrum
    completion: Completion = Completion()
    dense: np.ndarray | None = None
    marker_index: int = 0
    _frame: np.ndarray | None = field(default=None, repr=False)
    _ux: np.ndarray | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.kernel.d

    @property
    def completion_seed(self) -> int:
        return self.completion.seed

    @property
    def isometry_x(self) -> np.ndarray:
        return isometries(self.kernel)[0]

    @property
    def isometry_y(self) -> np.ndarray:
        return isometries(self.kernel)[1]

    @property
    def sines(self) -> np.ndarray:
        return np.sin(self.spectrum.phis)

    def phases(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenphases in ``[0, 2 pi)`` of the ``+`` and ``-`` branches, ``j >= 1``."""
        two_phi = 2.0 * self.spectrum.phis[1:]
        return two_phi, np.mod(2.0 * np.pi - two_phi, 2.0 * np.pi)

    # -- U_X application -------------------------------------------------

    def _rotation_data(self):
        x = np.sqrt(self.kernel.matrix).T  # x[s] = sqrt(m_{s->.}), row per block
        c = x[:, 0].copy()
        r = x.copy()
        r[:, 0] = 0.0
        s = np.linalg.norm(r, axis=1)
        rhat = np.divide(r, s[:, None], out=np.zeros_like(r), where=s[:, None] > 0)
        return c, s, rhat

    def apply_ux(self, v: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """Apply ``U_X`` (or its adjoint) to a ``(d, d)``-shaped array."""
        if self._ux is not None:
            u = self._ux.T if adjoint else self._ux
            return (u @ v.reshape(-1)).reshape(v.shape)
        f = self._frame
        if not adjoint:
            v = v @ f.T
        c, s, rhat = self._rotation_data()
        v0 = v[:, 0]
        vr = np.einsum("ij,ij->i", rhat, v)
        out = v + ((c - 1.0) * vr)[:, None] * rhat
        out[:, 0] += (c - 1.0) * v0
        if adjoint:
            out += (s * v0)[:, None] * (-rhat)
            out[:, 0] += s * vr
            out = out @ f
        else:
            out += (s * v0)[:, None] * rhat
            out[:, 0] -= s * vr
        return out

    def dense_ux(self) -> np.ndarray:
        d = self.d
        if self._ux is not None:
            return self._ux
        eye = np.eye(d * d).reshape(d * d, d, d)
        cols = np.stack([self.apply_ux(e) for e in eye])
        return cols.reshape(d * d, d * d).T

    def dense_uy(self) -> np.ndarray:
        """``U_Y`` as the register swap conjugate of the controlled ``U_X``."""
        d = self.d
        swap = np.eye(d * d).reshape(d, d, d * d).transpose(1, 0, 2).reshape(d * d, d * d)
        ctrl = WalkOperator(self.kernel, self.spectrum, Completion(self.completion.seed),
                            _frame=_seeded_frame(d, self.completion.seed))
        return swap @ ctrl.dense_ux() @ swap

    # -- spectral coordinates ---------------------------------------------

    def _g_overlaps(self, w: np.ndarray) -> np.ndarray:
        """``<g_j | w>`` for all ``j`` where ``g_j = (1 - Pi_1) U_X^T Y phi_j``."""
        s = np.sqrt(self.kernel.matrix)
        t = (s * self.apply_ux(w)).sum(axis=0)
        return self.spectrum.eigvecs.T @ t

    def _g_combination(self, coeffs: np.ndarray) -> np.ndarray:
        """``sum_j coeffs_j g_j`` as a ``(d, d)`` array."""
        s = np.sqrt(self.kernel.matrix)
        f = self.spectrum.eigvecs @ coeffs
        out = self.apply_ux(s * f[None, :], adjoint=True)
        out[:, 0] = 0.0
        return out

    def _check_sines(self) -> np.ndarray:
        sines = self.sines[1:]
        if sines.size and sines.min() < MIN_SINE:
            raise ZeroGap(f"walk phase {sines.min():.2e} too small for spectral coordinates")
        return sines

    def basis_state(self, psi: np.ndarray) -> WalkBasisState:
        """Decompose a flat state into walk eigen-coordinates."""
        d = self.d
        sines = self._check_sines()
        v = np.asarray(psi, dtype=complex).reshape(d, d)
        u = v[:, 0]
        w = v.copy()
        w[:, 0] = 0.0
        alpha = self.spectrum.eigvecs.T @ u
        gam = np.zeros(d, dtype=complex)
        gam[1:] = self._g_overlaps(w)[1:] / sines
        resid = w - self._g_combination(np.concatenate([[0.0], gam[1:] / sines]))
        rs = 1.0 / np.sqrt(2.0)
        return WalkBasisState(
            c0=complex(alpha[0]),
            cplus=rs * (alpha[1:] + 1j * gam[1:]),
            cminus=rs * (alpha[1:] - 1j * gam[1:]),
            residual=resid.reshape(-1),
            leaked=float(np.vdot(resid, resid).real),
        )

    def state_vector(self, st: WalkBasisState) -> np.ndarray:
        """Inverse of :meth:`basis_state`."""
        d = self.d
        sines = self._check_sines()
        rs = 1.0 / np.sqrt(2.0)
        alpha = rs * (st.cplus + st.cminus)
        gam = -1j * rs * (st.cplus - st.cminus)
        v = np.zeros((d, d), dtype=complex)
        v[:, 0] = self.spectrum.eigvecs @ np.concatenate([[st.c0], alpha])
        v += self._g_combination(np.concatenate([[0.0], gam / sines]))
        if st.residual is not None:
            v += np.asarray(st.residual).reshape(d, d)
        return v.reshape(-1)

    def eigenvectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Relevant eigenvectors (columns) and their phases.

        Order: ``psi_0``, then ``psi_{+j}``, then ``psi_{-j}`` for ``j = 1..d-1``.
        """
        d = self.d
        n = d - 1
        cols = []
        zero = np.zeros(n, dtype=complex)
        cols.append(self.state_vector(WalkBasisState(1.0, zero, zero)))
        for j in range(n):
            e = np.zeros(n, dtype=complex)
            e[j] = 1.0
            cols.append(self.state_vector(WalkBasisState(0.0, e, zero)))
        for j in range(n):
            e = np.zeros(n, dtype=complex)
            e[j] = 1.0
            cols.append(self.state_vector(WalkBasisState(0.0, zero, e)))
        plus, minus = self.phases()
        return np.stack(cols, axis=1), np.concatenate([[0.0], plus, minus])


def build_walk(
    kernel: TransitionKernel,
    spectrum: KernelSpectrum,
    completion_seed: int = 0,
    completion: str = "controlled",
) -> WalkOperator:
    """Spectral-only walk operator (no ``d^2 x d^2`` matrices)."""
    comp = Completion(completion_seed, completion)
    d = kernel.d
    x_norm = np.abs(kernel.matrix.sum(axis=0) - 1.0).max()
    if x_norm > ISOMETRY_TOL:
        raise CompletionFailure(f"isometry columns deviate from unit norm by {x_norm:.2e}")
    if comp.kind == "controlled":
        return WalkOperator(kernel, spectrum, comp, _frame=_seeded_frame(d, comp.seed))
    if d > MAX_DENSE_D:
        raise DimensionTooLarge(f"generic completion needs dense d^2 matrices; d={d} > {MAX_DENSE_D}")
    return WalkOperator(kernel, spectrum, comp, _ux=_generic_ux(kernel, comp.seed))


def _generic_ux(kernel: TransitionKernel, seed: int) -> np.ndarray:
    d = kernel.d
    dd = d * d
    x, _ = isometries(kernel)
    rng = np.random.default_rng([seed, d, 1])
    q, r = np.linalg.qr(np.concatenate([x, rng.standard_normal((dd, dd - d))], axis=1))
    diag = np.abs(np.diag(r))
    if diag.min() < 1e-8:
        raise CompletionFailure("orthonormal completion is numerically rank-deficient")
    q = q * np.sign(np.diag(r))[None, :]
    marker_cols = np.arange(d) * d
    other_cols = np.setdiff1d(np.arange(dd), marker_cols)
    ux = np.empty((dd, dd))
    ux[:, marker_cols] = x
    ux[:, other_cols] = q[:, d:]
    return ux


def build_walk_dense(
    kernel: TransitionKernel,
    sym: SymmetricKernel | None = None,
    spectrum: KernelSpectrum | None = None,
    completion_seed: int = 0,
    completion: str = "controlled",
    model: EnergyModel | None = None,
) -> WalkOperator:
    """Dense ``W = R2 R1`` with ``R1 = 2 Pi_1 - 1`` and ``R2 = 2 Pi_2 - 1``.

    ``Pi_1 = 1 (x) |0><0|`` and
    ``Pi_2 = U_X^T U_Y (|0><0| (x) 1) U_Y^T U_X``.
    """
    d = kernel.d
    if d > MAX_DENSE_D:
        raise DimensionTooLarge(f"dense walk limited to d <= {MAX_DENSE_D}, got {d}")
    if spectrum is None:
        if sym is None:
            if model is None:
                raise ValueError("need a symmetrized kernel, a spectrum or the model")
            sym = symmetrize(kernel, model)
        spectrum = kernel_spectrum(sym)
    walk = build_walk(kernel, spectrum, completion_seed, completion)
    ux = walk.dense_ux()
    dd = d * d
    if np.abs(ux.T @ ux - np.eye(dd)).max() > ISOMETRY_TOL:
        raise CompletionFailure("U_X completion is not orthogonal")
    uy = walk.dense_uy()
    a_marker = np.arange(d)  # indices |0, s> = 0 * d + s
    z = ux.T @ uy[:, a_marker]
    r1 = np.where(np.arange(dd) % d == 0, 1.0, -1.0)
    w = 2.0 * z @ (z.T * r1[None, :]) - np.diag(r1)
    return WalkOperator(kernel, spectrum, walk.completion, w, _frame=walk._frame, _ux=walk._ux)


def dense_projectors(walk: WalkOperator) -> tuple[np.ndarray, np.ndarray]:
    """``Pi_1`` and ``Pi_2`` as dense matrices."""
    d = walk.d
    dd = d * d
    p1 = np.diag((np.arange(dd) % d == 0).astype(float))
    z = walk.dense_ux().T @ walk.dense_uy()[:, np.arange(d)]
    return p1, z @ z.T


def walk_eigenphase_table(spectrum: KernelSpectrum) -> WalkSpectrumView:
    """Eigenphases ``{0} U {+-2 phi_j}`` in ``[0, 2 pi)``; residual phases are 0."""
    d = spectrum.d
    two_phi = 2.0 * spectrum.phis[1:]
    phases = np.concatenate([[0.0], two_phi, np.mod(2 * np.pi - two_phi, 2 * np.pi)])
    rel = 2 * (d - 1) + 1
    return WalkSpectrumView(phases, rel, d * d - rel, 0)


def decompose_gibbs(model: EnergyModel, beta_from: float, spectrum_to: KernelSpectrum) -> WalkBasisState:
    """Coordinates of ``|phi_0(beta_from), 0>`` in the walk eigenbasis at ``spectrum_to``."""
    phi0 = gibbs_amplitudes(boltzmann(model, beta_from))
    c = spectrum_to.eigvecs.T @ phi0
    rs = 1.0 / np.sqrt(2.0)
    return WalkBasisState(
        c0=complex(c[0]),
        cplus=(rs * c[1:]).astype(complex),
        cminus=(rs * c[1:]).astype(complex),
        residual=None,
        leaked=0.0,
    )


def gibbs_overlap(model: EnergyModel, beta1: float, beta2: float) -> float:
    """``sum_s sqrt(pi_s(beta1) pi_s(beta2))``."""
    p1 = boltzmann(model, beta1).probabilities
    p2 = boltzmann(model, beta2).probabilities
    return float(np.sqrt(p1 * p2).sum())


def marker_embed(u: np.ndarray) -> np.ndarray:
    """Flat state ``sum_s u_s |s, 0>``."""
    u = np.asarray(u)
    d = u.shape[0]
    v = np.zeros((d, d), dtype=np.result_type(u.dtype, float))
    v[:, 0] = u
    return v.reshape(-1)


def a_marginal(psi: np.ndarray, d: int) -> np.ndarray:
    """Probability of each A-register outcome (unnormalized for sub-normalized states)."""
    return (np.abs(np.asarray(psi).reshape(d, d)) ** 2).sum(axis=1)


def dump_walk(walk: WalkOperator, out) -> None:
    """Plain-text dump of the dense walk matrix (17 significant digits)."""
    from .markov import dump_matrix

    if walk.dense is None:
        raise ValueError("walk has no dense matrix")
    dump_matrix(walk.dense, out)
