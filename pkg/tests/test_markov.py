import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from qsanneal.energy_model import boltzmann, build_model, gibbs_amplitudes
from qsanneal.errors import InvalidKernel, InvalidProposal, MismatchError, NegativeEigenvalue
from qsanneal.markov import (
    SymmetricKernel,
    TransitionKernel,
    dump_matrix,
    gibbs_alignment,
    kernel_spectrum,
    load_matrix,
    metropolis_kernel,
    min_spectral_gap,
    stationary_residual,
    symmetrize,
    verify_detailed_balance,
)

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])
LN2 = math.log(2)


def test_two_state_metropolis_columns(two_level):
    model, swap, _ = two_level
    k = metropolis_kernel(model, LN2, swap, 0.5)
    # column 0: uphill move accepted with e^{-ln 2} = 1/2, then halved by laziness
    np.testing.assert_allclose(k.matrix[:, 0], [0.75, 0.25], atol=1e-15)
    np.testing.assert_allclose(k.matrix[:, 1], [0.5, 0.5], atol=1e-15)


def test_infinite_temperature_equals_proposal(rng=np.random.default_rng(3)):
    model, q, _ = random_instance(rng, 4, 6)
    k = metropolis_kernel(model, 0.0, q, laziness=0.0)
    np.testing.assert_allclose(k.matrix, q + np.diag(1 - q.sum(axis=0)), atol=1e-15)


def test_laziness_bounds():
    model = build_model([0, 1])
    with pytest.raises(ValueError):
        metropolis_kernel(model, 1.0, SWAP, laziness=1.0)


@pytest.mark.parametrize("q", [
    np.array([[0.0, 1.0], [0.5, 0.0]]),          # not symmetric
    np.array([[0.5, 0.5], [0.5, 0.5]]),          # diagonal
    np.array([[0.0, 0.9], [0.9, 0.0]]),          # columns do not sum to 1
])
def test_invalid_proposals(q):
    with pytest.raises(InvalidProposal):
        metropolis_kernel(build_model([0, 1]), 1.0, q)


def test_kernel_validation():
    with pytest.raises(InvalidKernel):
        TransitionKernel(0.0, np.array([[0.5, 0.5], [0.6, 0.5]]))


def test_detailed_balance_examples(two_level):
    model, swap, _ = two_level
    k = metropolis_kernel(model, LN2, swap)
    pi = boltzmann(model, LN2)
    # pi_0 m_{0->1} = (2/3)(1/4) and pi_1 m_{1->0} = (1/3)(1/2): both 1/6
    assert pi.probabilities[0] * k.matrix[1, 0] == pytest.approx(1 / 6, abs=1e-16)
    assert verify_detailed_balance(k, pi).max_violation <= 1e-16
    assert verify_detailed_balance(TransitionKernel(0.0, np.eye(3)), boltzmann(build_model([0, 1, 2]), 1.0)).max_violation == 0


def test_detailed_balance_detects_perturbation():
    model = build_model([0.0, 1.0, 2.0])
    q = (np.ones((3, 3)) - np.eye(3)) / 2
    k = metropolis_kernel(model, 1.0, q)
    m = k.matrix.copy()
    m[2, 0] += 1e-3
    m[0, 0] -= 1e-3
    pi = boltzmann(model, 1.0)
    rep = verify_detailed_balance(TransitionKernel(1.0, m), pi)
    assert rep.pair == (0, 2)
    assert rep.max_violation == pytest.approx(pi.probabilities[0] * 1e-3, rel=1e-6)


def test_symmetrize_two_state(two_level):
    model, swap, _ = two_level
    h = symmetrize(metropolis_kernel(model, LN2, swap), model).matrix
    np.testing.assert_allclose(h, [[0.75, math.sqrt(0.125)], [math.sqrt(0.125), 0.5]], atol=1e-15)


def test_symmetrize_trivial_cases():
    model = build_model([0.0, 0.0, 1.0])
    q = (np.ones((3, 3)) - np.eye(3)) / 2
    k = metropolis_kernel(model, 0.0, q)
    np.testing.assert_allclose(symmetrize(k, model).matrix, k.matrix, atol=1e-15)
    ident = TransitionKernel(2.0, np.eye(3))
    np.testing.assert_array_equal(symmetrize(ident, model).matrix, np.eye(3))


def test_symmetrize_rejects_irreversible_kernel():
    model = build_model([0.0, 1.0, 2.0])
    cyc = np.roll(np.eye(3), 1, axis=0) * 0.5 + np.eye(3) * 0.5
    with pytest.raises(MismatchError):
        symmetrize(TransitionKernel(1.0, cyc), model)


def test_two_state_spectrum(two_level):
    model, swap, _ = two_level
    k = metropolis_kernel(model, LN2, swap)
    spec = kernel_spectrum(symmetrize(k, model), k)
    # 2x2 closed form: lambda_1 = trace - 1
    assert spec.lambdas[1] == pytest.approx(np.trace(k.matrix) - 1, abs=1e-14)
    np.testing.assert_allclose(spec.lambdas, [1.0, 0.25], atol=1e-14)
    assert spec.delta == pytest.approx(0.75, abs=1e-14)
    assert spec.phis[1] == pytest.approx(1.3181160716528180, abs=1e-12)


def test_identity_kernel_is_degenerate():
    spec = kernel_spectrum(SymmetricKernel(np.eye(3), 1.0))
    assert spec.delta == 0.0 and spec.degenerate


def test_uniform_kernel_rank_one():
    spec = kernel_spectrum(SymmetricKernel(np.full((4, 4), 0.25), 0.0))
    np.testing.assert_allclose(spec.lambdas, [1, 0, 0, 0], atol=1e-14)
    assert spec.delta == pytest.approx(1.0)


def test_negative_spectrum_rejected():
    model = build_model([0.0, 1.0])
    k = metropolis_kernel(model, 0.0, SWAP, laziness=0.0)
    with pytest.raises(NegativeEigenvalue):
        kernel_spectrum(symmetrize(k, model))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 5))
def test_random_kernel_corpus(seed, beta):
    rng = np.random.default_rng(seed)
    model, q, builder = random_instance(rng, 2, 32)
    k = builder(beta)
    pi = boltzmann(model, beta)
    assert np.abs(k.matrix.sum(axis=0) - 1).max() <= 1e-12
    assert verify_detailed_balance(k, pi).max_violation <= 1e-12
    assert stationary_residual(k, model) <= 1e-12
    sym = symmetrize(k, model)
    assert np.abs(sym.matrix - sym.matrix.T).max() <= 1e-12
    spec = kernel_spectrum(sym, k)  # general eigensolver cross-check inside
    general = np.sort(np.linalg.eigvals(k.matrix).real)[::-1]
    assert np.abs(general - spec.lambdas).max() <= 1e-9
    assert spec.lambdas.min() >= 0.0
    assert gibbs_alignment(spec, pi) <= 1e-8
    assert np.all(np.diff(spec.phis) >= 0)


def test_min_gap_over_betas(two_level):
    model, swap, builder = two_level
    # two-state lazy swap chain: delta(beta) = (1 - a)(1 + e^{-beta}), smallest at the largest beta
    g = min_spectral_gap(model, builder, [0.0, 1.0, 3.0])
    assert g == pytest.approx(0.5 * (1 + math.exp(-3.0)), abs=1e-12)


def test_matrix_dump_round_trip(tmp_path):
    a = np.random.default_rng(0).random((3, 4))
    buf = io.StringIO()
    dump_matrix(a, buf)
    path = tmp_path / "m.txt"
    path.write_text(buf.getvalue())
    np.testing.assert_array_equal(load_matrix(path), a)
