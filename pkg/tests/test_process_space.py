import math

import numpy as np
import pytest
from pydantic import ValidationError

from procmat.builder import (
    EPS_OPT,
    NAMED_PROCESSES,
    Q_OPT,
    NamedProcessBuilder,
    eps_validity_spectral,
    family_terms,
    make_named,
)
from procmat.operators import Subsystem, max_entangled, pauli_coefficients, pauli_compose, random_hermitian
from procmat.process_space import (
    FamilyParams,
    InvalidProcessError,
    PartyStructure,
    ProcessMatrix,
    allowed_basis,
    born_probability,
    dim_ordered,
    dim_valid,
    eps_causal,
    eps_validity,
    extend_with_state,
    is_causally_ordered,
    project_valid,
    subspace_projection,
    white_noise,
)


def test_allowed_basis_sizes(qubits):
    basis = allowed_basis(qubits)
    assert len(basis) == 87
    assert len(basis.ordered("A<B")) == 51
    assert len(basis.ordered("B<A")) == 51
    assert sum(basis.census.values()) == 87


def test_dim_valid():
    assert dim_valid(2, 2, 2, 2) == 87
    assert dim_valid(3, 3, 3, 3) == 1232


def test_dim_ordered_qubits():
    assert dim_ordered(2, 2, 2) == 51


def test_allowed_basis_is_orthonormal(qubits):
    mats = allowed_basis(qubits).matrices(normalized=True)
    gram = np.real(np.einsum("iab,jba->ij", mats, mats))
    assert np.allclose(gram, np.eye(87), atol=1e-12)


def test_projection_keeps_allowed_and_removes_forbidden_terms(qubits):
    op = pauli_compose({"IIII": 0.25, "IZZI": 0.1, "IZII": 0.2, "IIZZ": 0.3}, qubits.canonical)
    kept = pauli_coefficients(subspace_projection(op, qubits))
    assert kept[0, 3, 3, 0] == pytest.approx(0.1)
    assert kept[0, 0, 0, 0] == pytest.approx(0.25)
    assert kept[0, 3, 0, 0] == pytest.approx(0.0, abs=1e-14)
    assert kept[0, 0, 3, 3] == pytest.approx(0.0, abs=1e-14)


def test_project_valid_is_idempotent_and_normalized(qubits, rng):
    op = random_hermitian(qubits.canonical, rng)
    p1 = project_valid(op, qubits)
    p2 = project_valid(p1, qubits)
    assert p1.trace() == pytest.approx(4.0)
    assert p2.allclose(p1, atol=1e-10)
    assert ProcessMatrix(p1, qubits, check=False).in_valid_subspace


@pytest.mark.parametrize("name", NAMED_PROCESSES)
def test_named_processes_are_valid(name):
    w = make_named(name)
    assert w.is_valid
    assert w.trace == pytest.approx(4.0, abs=1e-12)


def test_unknown_name_is_rejected(builder):
    with pytest.raises(InvalidProcessError, match="unknown process"):
        builder.build("nope")


def test_family_beyond_validity_bound_is_rejected(builder):
    q = 0.5
    with pytest.raises(InvalidProcessError, match="min eigenvalue"):
        builder.build("wqe", FamilyParams(q=q, eps=eps_validity(q) + 1e-3))


def test_family_params_are_range_checked():
    with pytest.raises(ValidationError):
        FamilyParams(q=1.5)


def test_wopt_sits_on_the_validity_boundary():
    assert eps_validity(Q_OPT) == pytest.approx(EPS_OPT, abs=1e-12)
    assert make_named("wopt").min_eigenvalue == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("q", [0.2, 0.5, 0.8])
def test_closed_form_validity_bound_matches_spectrum(q):
    assert eps_validity_spectral(q) == pytest.approx(eps_validity(q), abs=1e-9)


@pytest.mark.parametrize("q", np.linspace(0.0, 1.0, 11))
def test_validity_bound_below_causal_bound(q):
    assert eps_validity(q) <= eps_causal(q) + 1e-15


def test_causal_order_of_fixed_order_processes():
    assert is_causally_ordered(make_named("wab"), "A<B")
    assert not is_causally_ordered(make_named("wab"), "B<A")
    assert is_causally_ordered(make_named("wba"), "B<A")
    assert not is_causally_ordered(make_named("wopt"), "A<B")
    assert not is_causally_ordered(make_named("wopt"), "B<A")


def test_ocb_is_invariant_under_partial_transpose():
    w = make_named("wocb")
    assert w.transpose_b().op.allclose(w.op, atol=1e-12)


@pytest.mark.parametrize("q,eps", [(0.4, 0.1), (0.7, 0.2), (0.5, 0.2)])
def test_partial_transpose_stays_in_valid_subspace(q, eps):
    w = NamedProcessBuilder().build("wqe", FamilyParams(q=q, eps=eps))
    t = w.transpose_b()
    assert t.in_valid_subspace
    assert t.is_normalized


def test_mix_and_noise(builder):
    w = builder.build("wopt")
    noisy = w.with_noise(0.5, check=True)
    expected = 0.5 * w.op + 0.5 * white_noise(w.structure)
    assert noisy.op.allclose(expected, atol=1e-12)
    mixed = w.mix(builder.build("wocb"), 0.25, check=True)
    terms = pauli_coefficients(mixed.op)
    assert terms[3, 0, 1, 3] == pytest.approx(0.75 * 0.25 * (1 - Q_OPT + EPS_OPT) + 0.25 / (4 * math.sqrt(2)))


def test_validate_reports_all_failures(qubits):
    op = pauli_compose({"IIII": 0.5, "IZII": 0.6}, qubits.canonical)
    w = ProcessMatrix(op, qubits, check=False)
    with pytest.raises(InvalidProcessError) as info:
        w.validate()
    message = str(info.value)
    assert "min eigenvalue" in message
    assert "trace" in message
    assert "forbidden" in message


def test_from_subsystems_rejects_unknown_labels():
    subs = [Subsystem(label, 2) for label in ("AI", "AO", "BI", "BO", "CI")]
    with pytest.raises(InvalidProcessError, match="unknown subsystem"):
        PartyStructure.from_subsystems(subs)


def test_from_subsystems_requires_core():
    with pytest.raises(InvalidProcessError, match="missing"):
        PartyStructure.from_subsystems([Subsystem("AI", 2)])


def test_process_accepts_any_subsystem_order(qubits):
    w = make_named("wopt")
    shuffled = w.op.permute(["BO", "AI", "BI", "AO"])
    again = ProcessMatrix(shuffled)
    assert again.structure.labels == qubits.labels
    assert again.op.allclose(w.op, atol=1e-12)


def test_extend_with_state():
    w = make_named("wopt")
    ext = extend_with_state(w, max_entangled(2, ("AIp", "BIp")))
    assert ext.structure.is_extended
    assert ext.structure.labels == ("AI", "AIp", "AO", "BI", "BIp", "BO")
    assert ext.is_valid
    with pytest.raises(InvalidProcessError, match="already"):
        extend_with_state(ext, max_entangled(2, ("AIp", "BIp")))


def test_build_extended_default_is_ququart_pair(builder):
    ext = builder.build_extended(kappa=1e-3)
    assert ext.structure.d_in == 64
    assert ext.structure.side == 256
    assert ext.is_valid


def test_born_rule_normalization_for_product_operators(qubits):
    w = make_named("wopt")
    a = pauli_compose({"II": 0.5}, [Subsystem("AI", 2), Subsystem("AO", 2)])
    b = pauli_compose({"II": 0.5}, [Subsystem("BI", 2), Subsystem("BO", 2)])
    assert born_probability(w, a, b) == pytest.approx(1.0)


def test_family_terms_coefficients():
    terms = family_terms(0.6, 0.3)
    assert terms["IIII"] == pytest.approx(0.25)
    assert terms["IZZI"] == pytest.approx(0.6 / 12)
    assert terms["ZIXZ"] == pytest.approx(0.7 / 4)
