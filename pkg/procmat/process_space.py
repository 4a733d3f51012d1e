"""The bipartite process-matrix space: validity, allowed terms, causal order."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .operators import (
    HermitianOp,
    OperatorError,
    PauliString,
    Subsystem,
    identity_op,
    partial_trace,
    partial_transpose,
    tensor,
)

logger = logging.getLogger(__name__)

VALIDITY_TOL = 1e-9
CORE_LABELS: Tuple[str, ...] = ("AI", "AO", "BI", "BO")
ANCILLA_LABELS: Dict[str, str] = {"AIp": "A", "BIp": "B"}

Direction = Literal["A<B", "B<A"]


class InvalidProcessError(ValueError):
    """A process matrix failed validation, or named-process parameters are out of range."""


# ---------------------------------------------------------------------------
# Party structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartyStructure:
    """Core spaces A_I, A_O, B_I, B_O plus optional input ancillas per party."""

    a_in: Subsystem
    a_out: Subsystem
    b_in: Subsystem
    b_out: Subsystem
    a_anc: Tuple[Subsystem, ...] = ()
    b_anc: Tuple[Subsystem, ...] = ()

    def __post_init__(self) -> None:
        labels = [s.label for s in self.canonical]
        if len(set(labels)) != len(labels):
            raise InvalidProcessError(f"ancilla labels collide with core labels: {labels}")

    @classmethod
    def qubits(cls) -> "PartyStructure":
        return cls(*(Subsystem(label, 2) for label in CORE_LABELS))

    @classmethod
    def from_subsystems(cls, subsystems: Sequence[Subsystem]) -> "PartyStructure":
        by_label = {s.label: s for s in subsystems}
        missing = [label for label in CORE_LABELS if label not in by_label]
        if missing:
            raise InvalidProcessError(f"process is missing core subsystems {missing}")
        extra = [label for label in by_label if label not in CORE_LABELS]
        unknown = [label for label in extra if label not in ANCILLA_LABELS]
        if unknown:
            raise InvalidProcessError(
                f"unknown subsystem labels {unknown}; ancillas must be one of {list(ANCILLA_LABELS)}")
        a_anc = tuple(by_label[lb] for lb in extra if ANCILLA_LABELS[lb] == "A")
        b_anc = tuple(by_label[lb] for lb in extra if ANCILLA_LABELS[lb] == "B")
        return cls(by_label["AI"], by_label["AO"], by_label["BI"], by_label["BO"], a_anc, b_anc)

    @property
    def canonical(self) -> Tuple[Subsystem, ...]:
        return (self.a_in, *self.a_anc, self.a_out, self.b_in, *self.b_anc, self.b_out)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(s.label for s in self.canonical)

    @property
    def alice(self) -> Tuple[Subsystem, ...]:
        return (self.a_in, *self.a_anc, self.a_out)

    @property
    def bob(self) -> Tuple[Subsystem, ...]:
        return (self.b_in, *self.b_anc, self.b_out)

    @property
    def alice_inputs(self) -> Tuple[Subsystem, ...]:
        return (self.a_in, *self.a_anc)

    @property
    def bob_inputs(self) -> Tuple[Subsystem, ...]:
        return (self.b_in, *self.b_anc)

    @property
    def d_in(self) -> int:
        return int(np.prod([s.dim for s in self.alice_inputs + self.bob_inputs]))

    @property
    def side(self) -> int:
        return int(np.prod([s.dim for s in self.canonical]))

    @property
    def normalization(self) -> int:
        """Required trace d_AO · d_BO."""
        return self.a_out.dim * self.b_out.dim

    @property
    def is_extended(self) -> bool:
        return bool(self.a_anc or self.b_anc)

    @property
    def is_qubit_core(self) -> bool:
        return all(s.dim == 2 for s in (self.a_in, self.a_out, self.b_in, self.b_out))


def white_noise(structure: PartyStructure) -> HermitianOp:
    """1° = identity / (product of input dimensions)."""
    return identity_op(structure.canonical, 1.0 / structure.d_in)


def trace_replace(op: HermitianOp, labels: Sequence[str]) -> HermitianOp:
    """``tr_X[op] ⊗ 1_X / d_X`` re-embedded in the original subsystem order."""
    labels = list(labels)
    if not labels:
        return op
    subs = [op.subsystems[i] for i in op._positions(labels)]
    d = int(np.prod([s.dim for s in subs]))
    return tensor(partial_trace(op, labels), identity_op(subs, 1.0 / d)).permute(op.labels)


def subspace_projection(op: HermitianOp, structure: PartyStructure) -> HermitianOp:
    """Projection onto span{1} ⊕ allowed terms; the identity component passes through unchanged."""
    ai = [s.label for s in structure.alice_inputs]
    bi = [s.label for s in structure.bob_inputs]
    ao = [structure.a_out.label]
    bo = [structure.b_out.label]
    # signed sum of trace-and-replace maps; a Pauli term survives iff it has no causal loop
    groups = (
        (+1, bo),
        (+1, ao),
        (-1, ao + bo),
        (-1, bi + bo),
        (+1, ao + bi + bo),
        (-1, ai + ao),
        (+1, ai + ao + bo),
    )
    m = np.zeros_like(op.matrix)
    for sign, labels in groups:
        m = m + sign * trace_replace(op, labels).matrix
    return HermitianOp(m, op.subsystems)


def project_valid(op: HermitianOp, structure: Optional[PartyStructure] = None) -> HermitianOp:
    """Orthogonal projection onto span{1} ⊕ allowed terms, with tr fixed to d_AO·d_BO."""
    structure = structure or PartyStructure.from_subsystems(op.subsystems)
    op = op.permute(structure.labels)
    projected = subspace_projection(op, structure)
    shift = (structure.normalization - projected.trace()) / structure.side
    return projected + identity_op(structure.canonical, shift)


# ---------------------------------------------------------------------------
# Allowed-term basis
# ---------------------------------------------------------------------------

def _is_allowed(i: int, j: int, k: int, l: int) -> bool:
    if (i, j, k, l) == (0, 0, 0, 0):
        return False
    if j and not k and not l:
        return False
    if l and not i and not j:
        return False
    return not (j and l)


@dataclass(frozen=True)
class AllowedTermBasis:
    """Traceless Pauli strings spanning the valid subspace (qubit core)."""

    terms: Tuple[PauliString, ...]
    census: Dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.terms)

    def ordered(self, direction: Direction = "A<B") -> Tuple[PauliString, ...]:
        """Terms compatible with one causal order: trivial on B_O (A<B) or on A_O (B<A)."""
        slot = 3 if direction == "A<B" else 1
        return tuple(t for t in self.terms if t.letters[slot] == "I")

    def matrices(self, normalized: bool = True) -> np.ndarray:
        """Stack of term matrices, Hilbert-Schmidt orthonormal when ``normalized``."""
        scale = 1.0 / 4.0 if normalized else 1.0
        return np.stack([t.matrix() for t in self.terms]) * scale


def allowed_basis(structure: Optional[PartyStructure] = None) -> AllowedTermBasis:
    structure = structure or PartyStructure.qubits()
    if not structure.is_qubit_core or structure.is_extended:
        raise InvalidProcessError("the allowed Pauli basis is defined for the four-qubit core only")
    terms: List[PauliString] = []
    census: Dict[str, int] = {}
    for idx in itertools.product(range(4), repeat=4):
        if not _is_allowed(*idx):
            continue
        terms.append(PauliString("".join("IXYZ"[i] for i in idx)))
        key = ",".join(label for label, i in zip(CORE_LABELS, idx) if i)
        census[key] = census.get(key, 0) + 1
    return AllowedTermBasis(tuple(terms), census)


def dim_valid(d_ai: int, d_ao: int, d_bi: int, d_bo: int) -> int:
    return (1 + d_ai ** 2 * (d_ao ** 2 - 1)) * (d_bi ** 2 - 1) + (d_ai ** 2 - 1) * d_bi ** 2 * d_bo ** 2


def dim_ordered(d_ai: int, d_ao: int, d_bi: int, d_bo: int = 0) -> int:
    """Dimension of the A≺B ordered subspace (independent of d_BO)."""
    return d_ai ** 2 * (1 + (d_bi ** 2 - 1) * d_ao ** 2) - 1


# ---------------------------------------------------------------------------
# Process matrices
# ---------------------------------------------------------------------------

class FamilyParams(BaseModel):
    """Parameters of the named process families."""

    q: float = Field(default=math.sqrt(3) - 1, ge=0.0, le=1.0,
                     description="Weight of the A<B part in W(q, eps).")
    eps: float = Field(default=4 / math.sqrt(3) - 2, ge=0.0,
                       description="White-noise subtraction in W(q, eps).")
    alpha: float = Field(default=0.5, ge=0.0, le=1.0,
                         description="Weight of W_opt in W_mix(alpha).")
    gamma: float = Field(default=0.0, ge=0.0, le=1.0,
                         description="White-noise weight in W_Wer(gamma, alpha).")
    kappa: float = Field(default=0.0, ge=0.0, le=1.0,
                         description="White-noise weight for the ancilla-extended process.")


class ProcessMatrix:
    """Process matrix W on A_I ⊗ A_O ⊗ B_I ⊗ B_O (+ ancillas) with cached validity flags."""

    def __init__(
        self,
        op: HermitianOp,
        structure: Optional[PartyStructure] = None,
        *,
        check: bool = True,
        tol: float = VALIDITY_TOL,
    ) -> None:
        self.structure = structure or PartyStructure.from_subsystems(op.subsystems)
        try:
            self.op = op.permute(self.structure.labels)
        except OperatorError as exc:
            raise InvalidProcessError(str(exc)) from exc
        if self.op.dims != tuple(s.dim for s in self.structure.canonical):
            raise InvalidProcessError(
                f"operator dims {self.op.dims} do not match the party structure")
        self.tol = tol
        if check:
            self.validate()

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix

    @cached_property
    def min_eigenvalue(self) -> float:
        return self.op.min_eigenvalue()

    @cached_property
    def trace(self) -> float:
        return self.op.trace()

    @cached_property
    def subspace_defect(self) -> float:
        return self.op.frobenius_distance(subspace_projection(self.op, self.structure))

    @property
    def is_psd(self) -> bool:
        return self.min_eigenvalue >= -self.tol

    @property
    def is_normalized(self) -> bool:
        return abs(self.trace - self.structure.normalization) <= self.tol

    @property
    def in_valid_subspace(self) -> bool:
        return self.subspace_defect <= self.tol

    @property
    def is_valid(self) -> bool:
        return self.is_psd and self.is_normalized and self.in_valid_subspace

    def validity(self) -> Dict[str, object]:
        return {
            "psd": self.is_psd,
            "normalized": self.is_normalized,
            "in_valid_subspace": self.in_valid_subspace,
            "min_eigenvalue": self.min_eigenvalue,
            "trace": self.trace,
            "subspace_defect": self.subspace_defect,
        }

    def validate(self) -> "ProcessMatrix":
        failures = []
        if not self.is_psd:
            failures.append(f"min eigenvalue {self.min_eigenvalue:.3e} < -{self.tol:g}")
        if not self.is_normalized:
            failures.append(f"trace {self.trace:.12g} != {self.structure.normalization}")
        if not self.in_valid_subspace:
            failures.append(f"forbidden terms present (defect {self.subspace_defect:.3e})")
        if failures:
            raise InvalidProcessError("process matrix is not valid: " + "; ".join(failures))
        return self

    # -- derived processes -------------------------------------------------------
    def transpose_b(self, check: bool = False) -> "ProcessMatrix":
        """Partial transpose on Bob's whole side (inputs, ancillas, output)."""
        labels = [s.label for s in self.structure.bob]
        return ProcessMatrix(partial_transpose(self.op, labels), self.structure, check=check)

    def mix(self, other: "ProcessMatrix", weight: float, check: bool = False) -> "ProcessMatrix":
        """(1 − weight)·self + weight·other."""
        op = (1.0 - weight) * self.op + weight * other.op
        return ProcessMatrix(op, self.structure, check=check)

    def with_noise(self, gamma: float, check: bool = False) -> "ProcessMatrix":
        op = (1.0 - gamma) * self.op + gamma * white_noise(self.structure)
        return ProcessMatrix(op, self.structure, check=check)

    def __repr__(self) -> str:
        return f"ProcessMatrix({list(self.structure.labels)}, min_eig={self.min_eigenvalue:.3e})"


def is_causally_ordered(w: ProcessMatrix, direction: Direction = "A<B", tol: float = VALIDITY_TOL) -> bool:
    label = w.structure.b_out.label if direction == "A<B" else w.structure.a_out.label
    return w.op.frobenius_distance(trace_replace(w.op, [label])) <= tol


def eps_validity(q: float) -> float:
    return q - 1.0 + math.sqrt(max(0.0, (1.0 - q) * (q + 3.0) / 3.0))


def eps_causal(q: float) -> float:
    return 2.0 * q / 3.0


def extend_with_state(w: ProcessMatrix, state: HermitianOp, tol: float = VALIDITY_TOL) -> ProcessMatrix:
    """W ⊗ state with the state's first factor on Alice's input side and the second on Bob's."""
    if w.structure.is_extended:
        raise InvalidProcessError("process is already ancilla-extended")
    if len(state.subsystems) != 2:
        raise InvalidProcessError("ancilla state must act on exactly two subsystems")
    if abs(state.trace() - 1.0) > tol or state.min_eigenvalue() < -tol:
        raise InvalidProcessError("ancilla state must be a unit-trace PSD operator")
    a_anc, b_anc = state.subsystems
    try:
        structure = PartyStructure(
            w.structure.a_in, w.structure.a_out, w.structure.b_in, w.structure.b_out,
            (a_anc,), (b_anc,))
        op = tensor(w.op, state)
    except OperatorError as exc:
        raise InvalidProcessError(f"label collision while extending: {exc}") from exc
    return ProcessMatrix(op, structure)


def born_probability(w: ProcessMatrix, a_op: HermitianOp, b_op: HermitianOp) -> float:
    """tr[W · (ξ ⊗ η)] with the operands aligned to W's canonical order."""
    want_a = sorted(s.label for s in w.structure.alice)
    want_b = sorted(s.label for s in w.structure.bob)
    if sorted(a_op.labels) != want_a or sorted(b_op.labels) != want_b:
        raise OperatorError(
            f"operand spaces {list(a_op.labels)} / {list(b_op.labels)} do not match "
            f"Alice {want_a} / Bob {want_b}")
    return w.op.inner(tensor(a_op, b_op))
