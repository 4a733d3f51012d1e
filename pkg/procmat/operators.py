"""Hermitian operator algebra over labelled tensor factors.

Every operator carries the ordered list of subsystems it acts on; the
computational basis is row-major over that list, which is also the order used
by every serialized form.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
PAULI_LETTERS = "IXYZ"

_PAULI = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


class OperatorError(ValueError):
    """Malformed operator, unknown label or dimension mismatch."""


@dataclass(frozen=True)
class Subsystem:
    """A labelled tensor factor (e.g. ``AI``, ``BIp``)."""

    label: str
    dim: int

    def __post_init__(self) -> None:
        if not self.label:
            raise OperatorError("subsystem label is required")
        if int(self.dim) != self.dim or self.dim < 1:
            raise OperatorError(
                f"subsystem {self.label!r} needs an integer dim >= 1, got {self.dim!r}")


def _check_labels(subsystems: Sequence[Subsystem]) -> None:
    labels = [s.label for s in subsystems]
    if len(set(labels)) != len(labels):
        raise OperatorError(f"duplicate subsystem labels in {labels}")


def _side(subsystems: Sequence[Subsystem]) -> int:
    side = 1
    for s in subsystems:
        side *= s.dim
    return side


# ---------------------------------------------------------------------------
# Array-level helpers (support leading batch axes)
# ---------------------------------------------------------------------------

def ptrace_array(mat: np.ndarray, dims: Sequence[int], traced: Iterable[int]) -> np.ndarray:
    """Partial trace of ``mat[..., D, D]`` over the factor positions in ``traced``."""
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    traced_set = set(traced)
    lead = mat.shape[:-2]
    off = len(lead)
    t = mat.reshape(lead + dims + dims)
    lead_idx = list(range(off))
    rows = [off + i for i in range(n)]
    cols = [off + i if i in traced_set else off + n + i for i in range(n)]
    keep = [i for i in range(n) if i not in traced_set]
    out = lead_idx + [off + i for i in keep] + [off + n + i for i in keep]
    res = np.einsum(t, lead_idx + rows + cols, out)
    dk = int(np.prod([dims[i] for i in keep], dtype=np.int64)) if keep else 1
    return res.reshape(lead + (dk, dk))


def ptranspose_array(mat: np.ndarray, dims: Sequence[int], positions: Iterable[int]) -> np.ndarray:
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    lead = mat.shape[:-2]
    off = len(lead)
    t = mat.reshape(lead + dims + dims)
    axes = list(range(off + 2 * n))
    for p in positions:
        axes[off + p], axes[off + n + p] = axes[off + n + p], axes[off + p]
    return t.transpose(axes).reshape(mat.shape)


def permute_array(mat: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: new position ``i`` holds old factor ``order[i]``."""
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    lead = mat.shape[:-2]
    off = len(lead)
    t = mat.reshape(lead + dims + dims)
    axes = list(range(off)) + [off + o for o in order] + [off + n + o for o in order]
    return t.transpose(axes).reshape(mat.shape)


# ---------------------------------------------------------------------------
# HermitianOp
# ---------------------------------------------------------------------------

Scalar = Union[int, float, np.floating, np.integer]


class HermitianOp:
    """Dense Hermitian matrix over an ordered list of labelled subsystems."""

    __slots__ = ("_subsystems", "_matrix")

    def __init__(
        self,
        matrix: np.ndarray,
        subsystems: Sequence[Subsystem],
        *,
        tol: float = HERMITIAN_TOL,
    ) -> None:
        subsystems = tuple(subsystems)
        _check_labels(subsystems)
        m = np.array(matrix, dtype=complex)
        side = _side(subsystems)
        if m.shape != (side, side):
            labels = [f"{s.label}:{s.dim}" for s in subsystems]
            raise OperatorError(
                f"matrix shape {m.shape} does not match subsystems {labels} (side {side})")
        asym = float(np.max(np.abs(m - m.conj().T)))
        scale = max(1.0, float(np.max(np.abs(m))))
        if asym > tol * scale:
            raise OperatorError(f"matrix is not Hermitian (max |M - M^dagger| = {asym:.3e})")
        m = (m + m.conj().T) / 2
        m.setflags(write=False)
        self._subsystems = subsystems
        self._matrix = m

    @classmethod
    def identity(cls, subsystems: Sequence[Subsystem], scale: float = 1.0) -> "HermitianOp":
        return cls(scale * np.eye(_side(subsystems)), subsystems)

    # -- views ---------------------------------------------------------------
    @property
    def subsystems(self) -> Tuple[Subsystem, ...]:
        return self._subsystems

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(s.label for s in self._subsystems)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(s.dim for s in self._subsystems)

    @property
    def side(self) -> int:
        return self._matrix.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """Read-only view of the entries."""
        return self._matrix

    def dim_of(self, label: str) -> int:
        return self._subsystems[self._positions([label])[0]].dim

    def _positions(self, labels: Iterable[str]) -> List[int]:
        index = {s.label: i for i, s in enumerate(self._subsystems)}
        out = []
        for label in labels:
            if label not in index:
                raise OperatorError(f"unknown subsystem label {label!r}; have {list(index)}")
            out.append(index[label])
        return out

    # -- structural ------------------------------------------------------------
    def permute(self, labels: Sequence[str]) -> "HermitianOp":
        labels = list(labels)
        if sorted(labels) != sorted(self.labels):
            raise OperatorError(f"cannot reorder {list(self.labels)} as {labels}")
        if tuple(labels) == self.labels:
            return self
        order = self._positions(labels)
        m = permute_array(self._matrix, self.dims, order)
        return HermitianOp(m, [self._subsystems[o] for o in order])

    def relabel(self, mapping: Mapping[str, str]) -> "HermitianOp":
        subs = [Subsystem(mapping.get(s.label, s.label), s.dim) for s in self._subsystems]
        return HermitianOp(self._matrix, subs)

    def aligned_matrix(self, other: "HermitianOp") -> np.ndarray:
        """Entries of ``other`` expressed in this operator's subsystem order."""
        if sorted(other.labels) != sorted(self.labels):
            raise OperatorError(
                f"subsystem mismatch: {list(self.labels)} vs {list(other.labels)}")
        other = other.permute(self.labels)
        if other.dims != self.dims:
            raise OperatorError(f"dimension mismatch: {self.dims} vs {other.dims}")
        return other.matrix

    # -- scalars -------------------------------------------------------------
    def trace(self) -> float:
        return float(np.real(np.trace(self._matrix)))

    def inner(self, other: "HermitianOp") -> float:
        """Hilbert-Schmidt product Re tr[self · other]."""
        return float(np.real(np.vdot(self._matrix, self.aligned_matrix(other))))

    def frobenius_distance(self, other: "HermitianOp") -> float:
        return float(np.linalg.norm(self._matrix - self.aligned_matrix(other)))

    def allclose(self, other: "HermitianOp", atol: float = 1e-9) -> bool:
        return self.frobenius_distance(other) <= atol

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in descending order."""
        return np.linalg.eigvalsh(self._matrix)[::-1]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self._matrix)[0])

    def transpose(self) -> "HermitianOp":
        return HermitianOp(self._matrix.T, self._subsystems)

    # -- arithmetic ------------------------------------------------------------
    def __add__(self, other: "HermitianOp") -> "HermitianOp":
        if not isinstance(other, HermitianOp):
            return NotImplemented
        return HermitianOp(self._matrix + self.aligned_matrix(other), self._subsystems)

    def __sub__(self, other: "HermitianOp") -> "HermitianOp":
        if not isinstance(other, HermitianOp):
            return NotImplemented
        return HermitianOp(self._matrix - self.aligned_matrix(other), self._subsystems)

    def __neg__(self) -> "HermitianOp":
        return HermitianOp(-self._matrix, self._subsystems)

    def __mul__(self, scalar: Scalar) -> "HermitianOp":
        if isinstance(scalar, (complex, np.complexfloating)) and np.imag(scalar) != 0:
            raise OperatorError("only real scalars keep an operator Hermitian")
        if not np.isscalar(scalar):
            return NotImplemented
        return HermitianOp(float(np.real(scalar)) * self._matrix, self._subsystems)

    __rmul__ = __mul__

    def __truediv__(self, scalar: Scalar) -> "HermitianOp":
        return self * (1.0 / float(scalar))

    def __repr__(self) -> str:
        dims = ", ".join(f"{s.label}:{s.dim}" for s in self._subsystems)
        return f"HermitianOp([{dims}], trace={self.trace():.6g})"


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def identity_op(subsystems: Sequence[Subsystem], scale: float = 1.0) -> HermitianOp:
    return HermitianOp.identity(subsystems, scale)


def tensor(a: HermitianOp, b: HermitianOp, *more: HermitianOp) -> HermitianOp:
    """Kronecker product; the subsystem lists are concatenated."""
    out = HermitianOp(np.kron(a.matrix, b.matrix), a.subsystems + b.subsystems)
    for c in more:
        out = HermitianOp(np.kron(out.matrix, c.matrix), out.subsystems + c.subsystems)
    return out


def partial_trace(op: HermitianOp, labels: Iterable[str]) -> HermitianOp:
    positions = op._positions(labels)
    keep = [s for i, s in enumerate(op.subsystems) if i not in set(positions)]
    return HermitianOp(ptrace_array(op.matrix, op.dims, positions), keep)


def partial_transpose(op: HermitianOp, labels: Iterable[str]) -> HermitianOp:
    positions = op._positions(labels)
    return HermitianOp(ptranspose_array(op.matrix, op.dims, positions), op.subsystems)


def spectral(op: HermitianOp) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and the matching eigenvector columns."""
    vals, vecs = np.linalg.eigh(op.matrix)
    return vals[::-1], vecs[:, ::-1]


# -- Pauli basis --------------------------------------------------------------

@dataclass(frozen=True)
class PauliString:
    """A coefficient times a tensor product of Pauli matrices, e.g. ``IZZI``."""

    letters: str
    coefficient: float = 1.0

    def __post_init__(self) -> None:
        if not self.letters or any(c not in PAULI_LETTERS for c in self.letters):
            raise OperatorError(f"invalid Pauli string {self.letters!r}")

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(PAULI_LETTERS.index(c) for c in self.letters)

    def matrix(self) -> np.ndarray:
        m = np.ones((1, 1), dtype=complex)
        for i in self.indices:
            m = np.kron(m, _PAULI[i])
        return self.coefficient * m


def _require_qubits(subsystems: Sequence[Subsystem]) -> int:
    bad = [s.label for s in subsystems if s.dim != 2]
    if bad:
        raise OperatorError(f"Pauli decomposition needs qubit subsystems; {bad} are not qubits")
    return len(subsystems)


def pauli_coefficients(op: HermitianOp) -> np.ndarray:
    """Array ``alpha[i1, ..., in] = tr[op · P_i1 ⊗ ... ⊗ P_in] / 2^n`` (index 0..3 = I, X, Y, Z)."""
    n = _require_qubits(op.subsystems)
    t = op.matrix.reshape((2,) * (2 * n))
    rows = list(range(n))
    cols = list(range(n, 2 * n))
    ps = list(range(2 * n, 3 * n))
    operands: list = [t, rows + cols]
    for k in range(n):
        operands += [_PAULI, [ps[k], cols[k], rows[k]]]
    operands.append(ps)
    return np.real(np.einsum(*operands, optimize=True)) / 2 ** n


def _compose_array(alpha: np.ndarray) -> np.ndarray:
    n = alpha.ndim
    rows = list(range(n))
    cols = list(range(n, 2 * n))
    ps = list(range(2 * n, 3 * n))
    operands: list = [alpha.astype(complex), ps]
    for k in range(n):
        operands += [_PAULI, [ps[k], rows[k], cols[k]]]
    operands.append(rows + cols)
    return np.einsum(*operands, optimize=True).reshape(2 ** n, 2 ** n)


def pauli_decompose(op: HermitianOp, cutoff: float = 1e-15) -> List[PauliString]:
    alpha = pauli_coefficients(op)
    out = []
    for idx in np.ndindex(*alpha.shape):
        c = float(alpha[idx])
        if abs(c) > cutoff:
            out.append(PauliString("".join(PAULI_LETTERS[i] for i in idx), c))
    return out


def pauli_compose(
    terms: Union[Iterable[PauliString], Mapping[str, float]],
    subsystems: Sequence[Subsystem],
) -> HermitianOp:
    n = _require_qubits(subsystems)
    alpha = np.zeros((4,) * n)
    items = terms.items() if isinstance(terms, Mapping) else ((t.letters, t.coefficient) for t in terms)
    for letters, coeff in items:
        p = PauliString(letters)
        if len(letters) != n:
            raise OperatorError(f"Pauli term {letters!r} has {len(letters)} letters, expected {n}")
        alpha[p.indices] += float(coeff)
    return HermitianOp(_compose_array(alpha), subsystems)


# -- CJ and states ------------------------------------------------------------

def cj_from_kraus(
    kraus: Sequence[np.ndarray],
    in_space: Subsystem,
    out_space: Subsystem,
) -> HermitianOp:
    """CJ operator ``[(I ⊗ M)(|I>><<I|)]^T`` on ``in ⊗ out`` of the map with these Kraus operators."""
    if in_space.label == out_space.label:
        raise OperatorError("input and output spaces need distinct labels")
    din, dout = in_space.dim, out_space.dim
    m = np.zeros((din * dout, din * dout), dtype=complex)
    for k in kraus:
        k = np.asarray(k, dtype=complex)
        if k.shape != (dout, din):
            raise OperatorError(f"Kraus operator of shape {k.shape}, expected {(dout, din)}")
        # |K^dagger>> in the (in, out) ordering, i.e. the conjugate of Σ_j |j> ⊗ K|j>
        w = k.conj().T.reshape(-1)
        m += np.outer(w, w.conj())
    return HermitianOp(m, (in_space, out_space))


def max_entangled(dim: int, labels: Tuple[str, str]) -> HermitianOp:
    if dim < 2:
        raise OperatorError(f"maximally entangled state needs dim >= 2, got {dim}")
    v = np.eye(dim).reshape(-1) / np.sqrt(dim)
    return HermitianOp(np.outer(v, v), (Subsystem(labels[0], dim), Subsystem(labels[1], dim)))


def random_hermitian(
    subsystems: Sequence[Subsystem],
    rng: Optional[np.random.Generator] = None,
) -> HermitianOp:
    rng = rng if rng is not None else np.random.default_rng()
    d = _side(subsystems)
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return HermitianOp((g + g.conj().T) / 2, subsystems)


def random_density(
    subsystems: Sequence[Subsystem],
    rng: Optional[np.random.Generator] = None,
) -> HermitianOp:
    rng = rng if rng is not None else np.random.default_rng()
    d = _side(subsystems)
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return HermitianOp(rho / np.real(np.trace(rho)), subsystems)
