"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (bypassing output capture)
with the measured worst case, the tolerance and the runtime. Oracles are
written here from scratch: raw Metropolis matrices, general eigensolvers,
brute-force sums and explicit propagation.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from qsanneal.classical_sa import anneal_exact, sa_schedule, target_beta
from qsanneal.energy_model import build_model
from qsanneal.harness import estimate_gap, parse_config, scaling_experiment
from qsanneal.markov import TransitionKernel, metropolis_builder
from qsanneal.phase_estimation import PeaConfig, pea_amplitude, pea_dense
from qsanneal.qsa import qsa_distribution, qsa_error_bound, qsa_schedule, qsa_success_exact
from qsanneal.qwalk import build_walk_dense


def report(capsys, number, name, passed, detail, seconds, limit):
    tag = "PASS" if passed and seconds < limit else "FAIL"
    with capsys.disabled():
        print(f"\n{tag}  [{number}] {name}: {detail}; {seconds:.1f} s (limit {limit:.0f} s)")


# -- oracles ---------------------------------------------------------------------------


def cycle_proposal(d, rng, cycles=3):
    q = np.zeros((d, d))
    for _ in range(cycles):
        order = rng.permutation(d)
        for a, b in zip(order, np.roll(order, -1)):
            q[a, b] += 0.5 / cycles
            q[b, a] += 0.5 / cycles
    return q


def raw_metropolis(energies, q, beta, laziness):
    e = np.asarray(energies, float)
    # entry [j, i]: propose i -> j, accept with min(1, e^{-beta (E_j - E_i)})
    m = (1 - laziness) * q * np.exp(-beta * np.maximum(e[:, None] - e[None, :], 0.0))
    np.fill_diagonal(m, 0.0)
    m[np.diag_indices_from(m)] = 1.0 - m.sum(axis=0)
    return m


def gibbs(energies, beta):
    w = np.exp(-beta * (np.asarray(energies) - np.min(energies)))
    return w / w.sum()


def random_energies(rng, d, integer=True, top=3):
    if integer:
        e = np.r_[0.0, rng.integers(1, top + 1, d - 1)].astype(float)
        rng.shuffle(e)
        return e
    return rng.uniform(0.0, 3.0, d)


def random_setup(rng, d_min, d_max, integer=True, top=3, cycles=3):
    d = int(rng.integers(d_min, d_max + 1))
    e = random_energies(rng, d, integer, top)
    q = np.array([[0.0, 1.0], [1.0, 0.0]]) if d == 2 else cycle_proposal(d, rng, cycles)
    return e, q


def marker_state(u):
    d = len(u)
    v = np.zeros((d, d), complex)
    v[:, 0] = u
    return v.reshape(-1)


def phase_gap(a, b):
    return abs(np.angle(np.exp(1j * (a - b))))


# -- 1 ---------------------------------------------------------------------------------------


def test_spectral_correspondence(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_match = worst_resid = worst_fixed = 0.0
    for _ in range(500):
        e, q = random_setup(rng, 2, 16, integer=False)
        laziness = float(rng.uniform(0.5, 0.9))
        beta = float(rng.uniform(0.0, 3.0))
        m = raw_metropolis(e, q, beta, laziness)
        walk = build_walk_dense(TransitionKernel(beta, m, laziness), model=build_model(e))
        phases = list(np.angle(np.linalg.eigvals(walk.dense)))
        lambdas = np.sort(np.linalg.eigvals(m).real)[::-1]
        targets = [s * 2 * math.acos(min(1.0, lam)) for lam in lambdas[1:] for s in (1, -1)]
        for t in targets:
            k = int(np.argmin([phase_gap(p, t) for p in phases]))
            worst_match = max(worst_match, phase_gap(phases.pop(k), t))
        for p in phases:
            worst_resid = max(worst_resid, min(phase_gap(p, 0.0), phase_gap(p, math.pi)))
        fixed = marker_state(np.sqrt(gibbs(e, beta)))
        worst_fixed = max(worst_fixed, float(np.abs(walk.dense @ fixed - fixed).max()))
    elapsed = time.perf_counter() - t0
    worst = max(worst_match, worst_resid, worst_fixed)
    report(capsys, 1, "spectral correspondence", worst <= 1e-8,
           f"500 kernels, phase {worst_match:.1e}, residual {worst_resid:.1e}, "
           f"fixed point {worst_fixed:.1e} (tol 1e-8)", elapsed, 120)
    assert worst_match <= 1e-8 and worst_resid <= 1e-8 and worst_fixed <= 1e-8
    assert elapsed < 120


# -- 2 ---------------------------------------------------------------------------------------


def test_completion_invariance(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst_prob = worst_state = 0.0
    for _ in range(50):
        e, q = random_setup(rng, 2, 6, integer=False)
        beta = float(rng.uniform(0.0, 2.5))
        kern = TransitionKernel(beta, raw_metropolis(e, q, beta, 0.5), 0.5)
        model = build_model(e)
        d = len(e)
        cfg = PeaConfig(int(rng.integers(1, 6)))
        u = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        joint = np.zeros((cfg.n, d * d), complex)
        joint[0] = marker_state(u / np.linalg.norm(u))
        s1, s2 = (int(x) for x in rng.integers(0, 2**62, 2))
        outs = [pea_dense(joint, build_walk_dense(kern, model=model, completion_seed=s, completion=kind), cfg)
                for s, kind in ((s1, "controlled"), (s2, "controlled"), (s2, "generic"))]
        probs = [(np.abs(o) ** 2).sum(axis=1) for o in outs]
        marker_parts = [o.reshape(cfg.n, d, d)[:, :, 0] for o in outs]
        for p_, mp in zip(probs[1:], marker_parts[1:]):
            worst_prob = max(worst_prob, float(np.abs(p_ - probs[0]).max()))
            worst_state = max(worst_state, float(np.abs(mp - marker_parts[0]).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_prob <= 1e-8 and worst_state <= 1e-8
    report(capsys, 2, "completion invariance", ok,
           f"50 pairs, outcome law {worst_prob:.1e}, marker-space branch {worst_state:.1e} (tol 1e-8)",
           elapsed, 120)
    assert ok and elapsed < 120


# -- 3 ---------------------------------------------------------------------------------------


def test_pea_amplitude_law(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(1000):
        p = int(rng.integers(1, 11))
        n = 2**p
        phase = float(rng.uniform(0, 2 * math.pi))
        m = int(rng.integers(n))
        brute = sum(np.exp(-2j * math.pi * m * k / n) * np.exp(1j * k * phase) for k in range(n)) / n
        worst = max(worst, abs(pea_amplitude(phase, m, p) - brute))
    violations = 0
    for _ in range(1000):
        phi = float(rng.uniform(0, math.pi / 2)) or math.pi / 2
        p = int(rng.integers(1, 13))
        violations += abs(pea_amplitude(2 * phi, 0, p)) > math.pi / (2**p * 2 * phi)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and violations == 0
    report(capsys, 3, "phase estimation amplitude law", ok,
           f"1000 triples, worst {worst:.1e} (tol 1e-10); garbage bound violations {violations}/1000",
           elapsed, 10)
    assert ok and elapsed < 10


# -- 4 ---------------------------------------------------------------------------------------


def test_backend_equivalence(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(20):
        e, q = random_setup(rng, 2, 6)
        model = build_model(e)
        builder = metropolis_builder(model, q)
        sched = qsa_schedule(model, 0.2, 0.2).with_steps(int(rng.integers(1, 9)), model.e_max,
                                                         p=int(rng.integers(1, 6)))
        seed = int(rng.integers(2**31))
        dense = qsa_distribution(model, sched, builder, backend="dense", completion_seed=seed)
        analytic = qsa_distribution(model, sched, builder, backend="analytic", completion_seed=seed)
        worst = max(worst, float(np.abs(dense - analytic).max()))
        zd = qsa_success_exact(model, sched, builder, backend="dense", completion_seed=seed)
        za = qsa_success_exact(model, sched, builder, backend="analytic", completion_seed=seed)
        worst = max(worst, float(np.abs(zd.final_marginal * zd.p_zeros - za.final_marginal * za.p_zeros).max()))
    elapsed = time.perf_counter() - t0
    report(capsys, 4, "dense vs analytic QSA", worst <= 1e-7,
           f"20 instances, worst H_A probability difference {worst:.1e} (tol 1e-7)", elapsed, 300)
    assert worst <= 1e-7 and elapsed < 300


# -- 5 ---------------------------------------------------------------------------------------


def test_lyapunov_suite(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    worst_h2 = 0.0
    worst_err_margin = -np.inf
    worst_lib = 0.0
    eps = 0.2
    for _ in range(100):
        # energies in {0, 1, 2} over four random cycles keep the step count bounded
        e, q = random_setup(rng, 2, 16, top=2, cycles=4)
        d = len(e)
        gamma = np.min(e[e > 0])
        e_max = e.max()
        beta_f = math.log(2 * d / eps**2) / gamma
        grid = np.linspace(0.0, beta_f, 201)
        delta = min(1 - np.sort(np.linalg.eigvals(raw_metropolis(e, q, b, 0.5)).real)[-2] for b in grid)
        delta_beta = delta / (4 * e_max)
        steps = math.ceil(beta_f / delta_beta - 1e-12)
        # mu' = mu + inflow - outflow, with moves i -> j at rate q/2 * min(1, e^{-beta dE})
        uphill = np.maximum(e[:, None] - e[None, :], 0.0)
        mus = np.empty((steps + 1, d))
        mus[0] = 1.0 / d
        for k in range(1, steps + 1):
            moves = 0.5 * q * np.exp(-k * delta_beta * uphill)
            mus[k] = mus[k - 1] + moves @ mus[k - 1] - moves.sum(axis=0) * mus[k - 1]
        betas = delta_beta * np.arange(steps + 1)
        weights = np.exp(-betas[:, None] * e[None, :])
        pis = weights / weights.sum(axis=1, keepdims=True)
        h2 = np.sum(mus**2 / pis, axis=1)
        worst_h2 = max(worst_h2, float(h2.max()))
        mu = mus[-1]
        err = mu[e > 0].sum()
        bound = math.sqrt(2 * d) * math.exp(-steps * delta_beta * gamma / 2)
        worst_err_margin = max(worst_err_margin, err - bound)
        model = build_model(e)
        sched = sa_schedule(model, delta, eps, tau=0.25)
        assert sched.steps == steps
        trace = anneal_exact(model, sched, metropolis_builder(model, q), keep_distributions=False)
        worst_lib = max(worst_lib, float(np.abs(trace.h_norms**2 - h2).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_h2 <= 2 + 1e-6 and worst_err_margin <= 0 and worst_lib <= 1e-9
    report(capsys, 5, "annealing Lyapunov suite", ok,
           f"100 instances, max |h|^2 {worst_h2:.6f} (limit 2+1e-6), error minus bound "
           f"{worst_err_margin:.2e} (<= 0), library vs oracle {worst_lib:.1e}", elapsed, 120)
    assert ok and elapsed < 120


# -- 6 ---------------------------------------------------------------------------------------


@pytest.mark.slow
def test_zeno_exponent(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    slopes = []
    worst_dense = 0.0
    for i in range(5):
        e, q = random_setup(rng, 3, 8)
        model = build_model(e)
        builder = metropolis_builder(model, q)
        eps = 0.2
        delta = estimate_gap(model, builder, target_beta(model, eps))
        base = qsa_schedule(model, delta, eps)
        q0 = max(8, base.q_steps // 8)
        qs = [q0 * 2**k for k in range(5)]
        deficits = []
        for qn in qs:
            sched = base.with_steps(qn, model.e_max)
            ex = qsa_success_exact(model, sched, builder)
            deficits.append(1 - ex.p_zeros)
            if qn == q0 and sched.pea.n * model.d**2 <= 2**14:
                dn = qsa_success_exact(model, sched, builder, backend="dense")
                worst_dense = max(worst_dense, abs(dn.p_zeros - ex.p_zeros))
        slopes.append(float(np.polyfit(np.log(qs), np.log(deficits), 1)[0]))
    elapsed = time.perf_counter() - t0
    ok = all(abs(s + 1) <= 0.2 for s in slopes) and worst_dense <= 1e-8
    report(capsys, 6, "Zeno exponent", ok,
           f"slopes {', '.join(f'{s:+.3f}' for s in slopes)} (target -1 +- 0.2), "
           f"dense cross-check {worst_dense:.1e}", elapsed, 300)
    assert ok and elapsed < 300


# -- 7 ---------------------------------------------------------------------------------------


@pytest.mark.slow
def test_error_bound_corpus(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    eps = 0.1
    cases = []
    for i in range(50):
        e, q = random_setup(rng, 2, 16)
        model = build_model(e)
        builder = metropolis_builder(model, q)
        delta = estimate_gap(model, builder, target_beta(model, eps))
        # shorter schedules make the Zeno term, not the thermal one, carry the failure
        sched = qsa_schedule(model, delta, eps, c_q=(1 / 16, 1 / 4, 1.0)[i % 3])
        ex = qsa_success_exact(model, sched, builder)
        cases.append((model, sched, 1.0 - ex.p_zeros_and_ground))
    # smallest tau' covering every case
    need = [max(0.0, (f - m.d * math.exp(-s.beta_f * m.gamma)) / (s.q_steps * s.nu**2)) for m, s, f in cases]
    tau_prime = max(max(need), 1e-12)
    violations = sum(f > qsa_error_bound(m, s, tau_prime) + 1e-15 for m, s, f in cases)
    zeno_dominated = sum(f > m.d * math.exp(-s.beta_f * m.gamma) for m, s, f in cases)
    elapsed = time.perf_counter() - t0
    ok = tau_prime <= 10 and violations == 0
    report(capsys, 7, "error bound with fitted tau'", ok,
           f"50 instances, fitted tau' {tau_prime:.3g} (limit 10), {zeno_dominated} failures above the "
           f"thermal term, violations {violations}", elapsed, 600)
    assert ok and elapsed < 600


# -- 8 ---------------------------------------------------------------------------------------


BARRIER_SWEEP = """
family = barrier_chain
d = 16
barrier = 0:4.5:0.25
epsilon = 0.1
"""


@pytest.mark.slow
def test_headline_scaling(capsys):
    t0 = time.perf_counter()
    report_ = scaling_experiment(parse_config(BARRIER_SWEEP))
    # spot-check the two end points: gap from a general eigensolver, classical
    # first passage from explicit propagation
    first, last = report_.rows[0], report_.rows[-1]
    oracle_gap = []
    for row, b in ((first, 0.0), (last, 4.5)):
        inst = parse_config(f"family=barrier_chain\nd=16\nbarrier={b}\n").instances()[0]
        e, q = inst.model.energies, inst.proposal
        grid = np.linspace(0.0, row.beta_f, 801)
        oracle_gap.append(min(1 - np.sort(np.linalg.eigvals(raw_metropolis(e, q, x, 0.5)).real)[-2] for x in grid))
    gap_err = max(abs(first.delta / oracle_gap[0] - 1), abs(last.delta / oracle_gap[1] - 1))
    inst = parse_config("family=barrier_chain\nd=16\nbarrier=0\n").instances()[0]
    e, q = inst.model.energies, inst.proposal
    delta_beta = 0.25 * first.delta / e.max()
    mu = np.full(16, 1 / 16)
    k = 0
    while mu[e > 0].sum() > 0.1:
        k += 1
        mu = raw_metropolis(e, q, k * delta_beta, 0.5) @ mu
    s_sa, s_qsa = report_.s_sa.slope, report_.s_qsa.slope
    env_sa, env_q = report_.envelope()
    elapsed = time.perf_counter() - t0
    ok = (report_.decades >= 2 and abs(s_sa + 1) <= 0.15 and abs(s_qsa + 0.5) <= 0.15
          and report_.separation_upper() <= -0.3 and gap_err <= 1e-3 and k == first.sa_measured)
    report(capsys, 8, "headline scaling", ok,
           f"{report_.decades:.2f} decades, s_sa {s_sa:+.3f} +- {report_.s_sa.stderr:.3f}, "
           f"s_qsa {s_qsa:+.3f} +- {report_.s_qsa.stderr:.3f}, separation upper limit "
           f"{report_.separation_upper():+.3f}, envelope sa {env_sa:.2f}x qsa {env_q:.2f}x", elapsed, 1800)
    assert report_.decades >= 2
    assert abs(s_sa + 1) <= 0.15 and abs(s_qsa + 0.5) <= 0.15
    assert report_.separation_upper() <= -0.3
    assert env_sa < 8 and env_q < 8
    assert gap_err <= 1e-3 and k == first.sa_measured
    assert elapsed < 1800


# -- 9 ---------------------------------------------------------------------------------------


def test_cli_determinism(capsys, tmp_path):
    t0 = time.perf_counter()
    (tmp_path / "model.txt").write_text("3\n0 0\n1 1.5\n2 0.5\n")
    (tmp_path / "sa.cfg").write_text("family=ising_ring\nn_spins=3\nfield=0.5,1\nepsilon=0.2\nruns=10\n")
    (tmp_path / "qsa.cfg").write_text("family=random_energies\nd=3,5\ninstance_seed=4\nepsilon=0.3\nruns=20\n")
    (tmp_path / "sc.cfg").write_text("family=two_level\nlaziness=0.5,0.8,0.95\nepsilon=0.3\nruns=4\n")
    commands = [
        ["spectrum", str(tmp_path / "model.txt"), "--beta", "0.7"],
        ["sa", str(tmp_path / "sa.cfg"), "--seed", "3"],
        ["qsa", str(tmp_path / "qsa.cfg"), "--seed", "3"],
        ["qsa", str(tmp_path / "qsa.cfg"), "--seed", "3", "--mode", "deferred"],
        ["scaling", str(tmp_path / "sc.cfg"), "--seed", "3"],
    ]
    mismatched = []
    for i, cmd in enumerate(commands):
        outs = []
        for rep in range(2):
            out = tmp_path / f"run{i}-{rep}"
            res = subprocess.run([sys.executable, "-m", "qsanneal.cli", *cmd, "--out", str(out)],
                                 capture_output=True, text=True)
            assert res.returncode == 0, res.stderr
            outs.append(({p.name: p.read_bytes() for p in sorted(out.iterdir())}, res.stdout))
        if outs[0] != outs[1] or not outs[0][0]:
            mismatched.append(cmd[0])
    elapsed = time.perf_counter() - t0
    report(capsys, 9, "CLI determinism", not mismatched,
           f"{len(commands)} invocations rerun, mismatches {mismatched or 'none'}", elapsed, 120)
    assert not mismatched
