import numpy as np
import pytest

from procmat.operators import (
    HermitianOp,
    OperatorError,
    PauliString,
    Subsystem,
    cj_from_kraus,
    identity_op,
    max_entangled,
    partial_trace,
    partial_transpose,
    pauli_coefficients,
    pauli_compose,
    pauli_decompose,
    random_density,
    random_hermitian,
    tensor,
)

A = Subsystem("A", 2)
B = Subsystem("B", 3)
C = Subsystem("C", 2)


def amplitude_damping(g):
    return [np.array([[1, 0], [0, np.sqrt(1 - g)]]), np.array([[0, np.sqrt(g)], [0, 0]])]


def test_rejects_non_hermitian():
    with pytest.raises(OperatorError, match="not Hermitian"):
        HermitianOp(np.array([[0, 1], [0, 0]]), [A])


def test_rejects_shape_mismatch():
    with pytest.raises(OperatorError, match="does not match"):
        HermitianOp(np.eye(3), [A])


def test_rejects_duplicate_labels():
    with pytest.raises(OperatorError, match="duplicate"):
        HermitianOp(np.eye(4), [A, Subsystem("A", 2)])


def test_subsystem_needs_positive_dim():
    with pytest.raises(OperatorError):
        Subsystem("X", 0)


def test_partial_trace_of_product(rng):
    rho_a = random_density([A], rng)
    rho_b = random_density([B], rng)
    reduced = partial_trace(tensor(rho_a, rho_b), ["B"])
    assert reduced.labels == ("A",)
    assert np.allclose(reduced.matrix, rho_a.matrix, atol=1e-12)


def test_partial_trace_preserves_trace(rng):
    op = random_hermitian([A, B, C], rng)
    assert partial_trace(op, ["A", "C"]).trace() == pytest.approx(op.trace(), abs=1e-10)


def test_partial_transpose_is_an_involution(rng):
    op = random_hermitian([A, B, C], rng)
    twice = partial_transpose(partial_transpose(op, ["B"]), ["B"])
    assert twice.allclose(op, atol=1e-12)


def test_partial_transpose_detects_bell_state():
    bell = max_entangled(2, ("A", "C"))
    assert partial_transpose(bell, ["C"]).min_eigenvalue() == pytest.approx(-0.5, abs=1e-12)


def test_permute_round_trip_and_inner_alignment(rng):
    op = random_hermitian([A, B, C], rng)
    other = random_hermitian([A, B, C], rng)
    moved = op.permute(["C", "A", "B"])
    assert moved.labels == ("C", "A", "B")
    assert moved.permute(["A", "B", "C"]).allclose(op, atol=1e-12)
    assert moved.inner(other) == pytest.approx(op.inner(other), abs=1e-10)


def test_permute_with_unknown_label_fails(rng):
    op = random_hermitian([A, B], rng)
    with pytest.raises(OperatorError):
        op.permute(["A", "Z"])


def test_arithmetic_aligns_subsystem_order(rng):
    op = random_hermitian([A, B], rng)
    total = op + op.permute(["B", "A"])
    assert total.allclose(2 * op, atol=1e-12)
    assert (total - op).allclose(op, atol=1e-12)


def test_complex_scalar_is_rejected(rng):
    with pytest.raises(OperatorError):
        random_hermitian([A], rng) * 1j


@pytest.mark.parametrize("gamma", [0.0, 0.3, 1.0])
def test_cj_of_channel_is_psd_and_trace_preserving(gamma):
    cj = cj_from_kraus(amplitude_damping(gamma), Subsystem("in", 2), Subsystem("out", 2))
    assert cj.min_eigenvalue() > -1e-12
    assert np.allclose(partial_trace(cj, ["out"]).matrix, np.eye(2), atol=1e-12)


def test_cj_of_identity_is_unnormalized_bell_projector():
    cj = cj_from_kraus([np.eye(2)], Subsystem("in", 2), Subsystem("out", 2))
    expected = 2 * max_entangled(2, ("in", "out")).matrix
    assert np.allclose(cj.matrix, expected, atol=1e-12)


def test_cj_rejects_wrong_kraus_shape():
    with pytest.raises(OperatorError):
        cj_from_kraus([np.eye(3)], Subsystem("in", 2), Subsystem("out", 2))


def test_pauli_decompose_compose_round_trip(rng):
    subs = [Subsystem(f"q{i}", 2) for i in range(3)]
    op = random_hermitian(subs, rng)
    back = pauli_compose(pauli_decompose(op, cutoff=0.0), subs)
    assert back.allclose(op, atol=1e-12)


def test_pauli_coefficients_of_single_string():
    subs = [Subsystem("a", 2), Subsystem("b", 2)]
    op = pauli_compose({"ZX": 0.5, "II": 0.25}, subs)
    alpha = pauli_coefficients(op)
    assert alpha[3, 1] == pytest.approx(0.5)
    assert alpha[0, 0] == pytest.approx(0.25)
    assert np.count_nonzero(np.abs(alpha) > 1e-14) == 2


def test_pauli_requires_qubits():
    with pytest.raises(OperatorError, match="qubit"):
        pauli_coefficients(identity_op([B]))


@pytest.mark.parametrize("letters", ["", "IQ", "xz"])
def test_invalid_pauli_string(letters):
    with pytest.raises(OperatorError):
        PauliString(letters)


def test_pauli_compose_checks_length():
    with pytest.raises(OperatorError, match="letters"):
        pauli_compose({"IZX": 1.0}, [A, C])


def test_max_entangled_is_a_pure_state():
    phi = max_entangled(3, ("x", "y"))
    vals = phi.eigenvalues()
    assert phi.trace() == pytest.approx(1.0)
    assert vals[0] == pytest.approx(1.0)
    assert np.allclose(vals[1:], 0.0, atol=1e-12)
