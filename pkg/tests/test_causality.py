import logging
import math

import numpy as np
import pytest

from procmat import causality
from procmat.builder import NamedProcessBuilder, family_terms, make_named
from procmat.causality import (
    InvalidTableError,
    ProbabilityTable,
    causal_bound,
    causal_lp,
    certify_witness,
    deterministic_causal_strategies,
    explicit_tb_decomposition,
    gyni_score,
    random_robustness,
    robustness_closed_forms,
    separable_decomposition_check,
    werner_window,
    witness_check,
    witness_sw,
)
from procmat.conic_solver import SolverError
from procmat.instruments import instrument_for, prob_table
from procmat.operators import HermitianOp, Subsystem, max_entangled, partial_trace, pauli_compose
from procmat.process_space import FamilyParams, InvalidProcessError, PartyStructure, ProcessMatrix, white_noise
from procmat.sampler import ChainConfig, run_chain

SQRT3 = math.sqrt(3.0)


def wqe(q, eps):
    return NamedProcessBuilder().build("wqe", FamilyParams(q=q, eps=eps))


def family_unchecked(q, eps):
    # (0.6, 0.3) lies past the validity bound; only its T_B is a process
    structure = PartyStructure.qubits()
    return ProcessMatrix(pauli_compose(family_terms(q, eps), structure.canonical), structure, check=False)


def gyni_table():
    p = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for y in range(2):
            p[y, x, x, y] = 1.0
    return ProbabilityTable(p)


# ----------------------------------------------------------------------
# random robustness
# ----------------------------------------------------------------------

@pytest.mark.parametrize("q,eps", [(0.4, 0.1), (0.7, 0.2), (SQRT3 - 1, 4 / SQRT3 - 2)])
def test_family_robustness_equals_eps(q, eps):
    assert random_robustness(wqe(q, eps)).lambda_opt == pytest.approx(eps, abs=1e-6)


@pytest.mark.parametrize("name,expected", [("wopt", 0.309401), ("wocb", 0.414214)])
def test_named_robustness(name, expected):
    report = random_robustness(make_named(name))
    assert report.lambda_opt == pytest.approx(expected, abs=1e-6)
    assert not report.separable
    assert report.witness is not None


def test_partial_transpose_of_wopt_is_separable():
    t = make_named("wopt").transpose_b(check=True)
    report = random_robustness(t)
    assert report.lambda_opt == pytest.approx((2 * SQRT3 - 4) / 3, abs=1e-6)
    assert report.separable
    assert report.witness is None
    assert separable_decomposition_check(t, report)


def test_white_noise_robustness_is_minus_one():
    assert random_robustness(make_named("white-noise")).lambda_opt == pytest.approx(-1.0, abs=1e-6)


def test_robustness_under_white_noise():
    w = make_named("wopt")
    gamma = 0.1
    r = random_robustness(w).lambda_opt
    r_noisy = random_robustness(w.with_noise(gamma, check=True)).lambda_opt
    assert r_noisy == pytest.approx((1 - gamma) * r - gamma, abs=1e-6)


def test_dual_witness_certifies_the_value():
    w = make_named("wopt")
    report = random_robustness(w)
    assert report.witness.normalization == pytest.approx(1.0, abs=1e-6)
    assert report.witness.value(w) == pytest.approx(-report.lambda_opt, abs=1e-6)


def test_robustness_rejects_invalid_input(qubits):
    op = pauli_compose({"IIII": 0.25, "IZII": 0.1}, qubits.canonical)
    with pytest.raises(InvalidProcessError):
        random_robustness(ProcessMatrix(op, qubits, check=False))


def test_robustness_is_convex(rng):
    w1 = make_named("wopt")
    w2 = make_named("wba")
    mu = 0.4
    r1 = random_robustness(w1).lambda_opt
    r2 = random_robustness(w2).lambda_opt
    r_mix = random_robustness(w1.mix(w2, 1 - mu, check=True)).lambda_opt
    assert r_mix <= mu * r1 + (1 - mu) * r2 + 1e-6


@pytest.mark.slow
def test_robustness_is_convex_on_sampled_pairs():
    samples = run_chain(ChainConfig(seed=17, warmup_steps=200, thinning=20), 100)
    weights = np.random.default_rng(17).uniform(size=50)
    values = [random_robustness(w).lambda_opt for w in samples]
    for k, mu in enumerate(weights):
        w1, w2 = samples[2 * k], samples[2 * k + 1]
        r_mix = random_robustness(w1.mix(w2, 1 - mu, check=True)).lambda_opt
        assert r_mix <= mu * values[2 * k] + (1 - mu) * values[2 * k + 1] + 1e-6


# ----------------------------------------------------------------------
# ancilla-extended processes
# ----------------------------------------------------------------------

def test_extended_robustness_is_solved_blockwise(builder):
    w = builder.build_extended()
    assert w.structure.side == 256
    report = random_robustness(w)
    # tracing out the ancillas cannot raise the robustness
    assert report.lambda_opt >= 0.309401 - 1e-6
    assert not report.separable
    assert report.witness.normalization == pytest.approx(1.0, abs=1e-6)
    assert report.witness.value(w) == pytest.approx(-report.lambda_opt, abs=1e-6)
    w1, w2 = report.decomposition
    labels = w.structure.labels
    target = w.op.permute(labels) + white_noise(w.structure).permute(labels) * report.lambda_opt
    assert (w1 + w2).allclose(target, atol=1e-6)
    assert w1.min_eigenvalue() >= -1e-7
    assert w2.min_eigenvalue() >= -1e-7


def test_extended_robustness_with_noise(builder):
    report = random_robustness(builder.build_extended(kappa=0.1))
    clean = random_robustness(builder.build_extended()).lambda_opt
    assert report.lambda_opt == pytest.approx(0.9 * clean - 0.1, abs=1e-6)


def test_unreduced_extension_is_refused(builder):
    diag = np.zeros(16)
    diag[0] = 1.0
    state = HermitianOp(np.diag(diag), (Subsystem("AIp", 4), Subsystem("BIp", 4)))
    w = builder.build_extended(state=state)
    with pytest.raises(SolverError, match="GiB"):
        random_robustness(w)


@pytest.mark.slow
def test_blockwise_and_full_programs_agree(builder, monkeypatch):
    w = builder.build_extended(state=max_entangled(2, ("AIp", "BIp")))
    reduced = random_robustness(w).lambda_opt
    monkeypatch.setattr(causality, "_block_form", lambda _w: None)
    full = random_robustness(w).lambda_opt
    assert reduced == pytest.approx(full, abs=1e-6)


# ----------------------------------------------------------------------
# witnesses and decompositions
# ----------------------------------------------------------------------

@pytest.mark.parametrize("q,eps", [(0.4, 0.1), (0.6, 0.3), (SQRT3 - 1, 4 / SQRT3 - 2)])
def test_witness_value_on_family(q, eps):
    assert witness_sw().value(family_unchecked(q, eps)) == pytest.approx(-eps, abs=1e-12)


def test_witness_marginals_are_positive():
    s = witness_sw()
    assert witness_check(s)
    for label in ("AO", "BO"):
        assert partial_trace(s.s, [label]).min_eigenvalue() >= -1e-12
    assert s.normalization == pytest.approx(1.0)


def test_witness_check_rejects_non_witness(qubits):
    from procmat.causality import Witness

    bad = Witness(pauli_compose({"IIII": 0.25, "IZZI": -1.0}, qubits.canonical))
    assert not witness_check(bad)


def test_witness_certification():
    cert = certify_witness(witness_sw())
    assert cert.certified
    assert cert.value >= -1e-7


def test_explicit_decomposition_reconstructs_partial_transpose():
    q, eps = 0.6, 0.3
    parts = explicit_tb_decomposition(q, eps)
    target = family_unchecked(q, eps).transpose_b()
    assert (parts[0] + parts[1] + parts[2]).allclose(target.op, atol=1e-12)
    for part in parts:
        assert part.min_eigenvalue() >= -1e-12


def test_family_decomposition_check():
    q, eps = 0.6, 0.3
    t = family_unchecked(q, eps).transpose_b(check=True)
    report = random_robustness(t)
    assert separable_decomposition_check(t, report, family=(q, eps))


def test_decomposition_check_fails_for_nonseparable():
    w = make_named("wopt")
    assert not separable_decomposition_check(w, random_robustness(w))


# ----------------------------------------------------------------------
# probability tables and the causal LP
# ----------------------------------------------------------------------

def test_table_validation():
    with pytest.raises(InvalidTableError, match="negative"):
        ProbabilityTable(np.full((2, 2, 2, 2), 0.25) - np.eye(2)[:, :, None, None])
    with pytest.raises(InvalidTableError, match="sum to 1"):
        ProbabilityTable(np.full((2, 2, 2, 2), 0.3))
    with pytest.raises(InvalidTableError, match="axes"):
        ProbabilityTable(np.ones((2, 2)))


def test_gyni_of_guessing_table_is_one():
    assert gyni_score(gyni_table()) == pytest.approx(1.0)
    assert gyni_score(ProbabilityTable.uniform()) == pytest.approx(0.25)


def test_deterministic_strategies_count():
    assert deterministic_causal_strategies().shape == (128, 2, 2, 2, 2)


def test_gyni_causal_bound():
    c = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for y in range(2):
            c[y, x, x, y] = 0.25
    assert causal_bound(c) == pytest.approx(0.5)


def test_uniform_table_is_causal():
    result = causal_lp(ProbabilityTable.uniform())
    assert result.causal
    assert result.certificate is None


@pytest.mark.parametrize("index", [0, 17, 64, 127])
def test_deterministic_causal_tables_are_causal(index):
    table = ProbabilityTable(deterministic_causal_strategies()[index])
    assert causal_lp(table).causal


def test_guessing_table_gets_a_certificate():
    result = causal_lp(gyni_table())
    assert not result.causal
    g, beta = result.certificate
    assert beta == 0.0
    assert result.certificate_value > 1e-6
    values = np.tensordot(deterministic_causal_strategies(), g, axes=4)
    assert np.max(values) <= 1e-6


def test_causal_lp_decomposition_mass():
    p = 0.5 * deterministic_causal_strategies()[3] + 0.5 * deterministic_causal_strategies()[100]
    result = causal_lp(ProbabilityTable(p))
    assert result.causal
    q = result.decomposition[0]
    assert 0.0 <= q <= 1.0


@pytest.mark.slow
def test_separable_processes_give_causal_tables():
    samples = run_chain(ChainConfig(seed=23, warmup_steps=200, thinning=20), 50)
    witness = random_robustness(make_named("wopt")).witness
    for k, w in enumerate(samples):
        r = random_robustness(w).lambda_opt
        # past r / (1 + r) the admixed noise makes the process separable
        gamma = max(0.0, r / (1.0 + r)) + 0.02
        sep = w.with_noise(gamma, check=True)
        assert random_robustness(sep).separable
        assert witness.value(sep) >= -1e-7
        rng = np.random.default_rng(k)
        a, b = instrument_for(sep, "A", 2, 2, rng), instrument_for(sep, "B", 2, 2, rng)
        assert causal_lp(prob_table(sep, a, b)).causal


# ----------------------------------------------------------------------
# Werner-like family
# ----------------------------------------------------------------------

def test_closed_forms_at_half():
    forms = robustness_closed_forms(0.5)
    assert forms["r_mix"] == pytest.approx(0.361807, abs=1e-6)
    assert forms["r_mix_tb"] == pytest.approx(0.117790, abs=1e-6)
    assert forms["gamma_low"] == pytest.approx(0.10538, abs=1e-5)
    assert forms["gamma_high"] == pytest.approx(0.26568, abs=1e-5)
    assert forms["alpha_star"] == pytest.approx(0.6987, abs=1e-4)


def test_werner_window_by_sdp(caplog):
    with caplog.at_level(logging.WARNING, logger="procmat.causality"):
        window = werner_window(0.5, gamma_check=0.2)
    assert "R_mix(0)" in caplog.text
    assert window.r_mix == pytest.approx(0.361807, abs=1e-6)
    assert window.r_mix_tb == pytest.approx(0.117790, abs=1e-4)
    assert abs(window.gamma_low - 0.10538) <= 1e-4
    assert abs(window.gamma_high - 0.26568) <= 1e-4
    assert window.r_wer > 1e-4
    assert window.r_wer_tb < -1e-4
    assert window.check_passed
