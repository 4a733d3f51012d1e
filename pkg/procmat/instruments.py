"""Quantum instruments in CJ form, probability tables and game functionals."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Sequence, Tuple, Union

import numpy as np

from .causality import ProbabilityTable, causal_bound
from .operators import HermitianOp, OperatorError, Subsystem, ptrace_array
from .process_space import ProcessMatrix

logger = logging.getLogger(__name__)

Party = Literal["A", "B"]
SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

INSTRUMENT_TOL = 1e-8


class InvalidInstrumentError(ValueError):
    """Instrument operators that are not CP or not complete."""


@dataclass(frozen=True, eq=False)
class Instrument:
    """CJ operators ``ops[x, a]`` on ``in_spaces ⊗ out_space`` for setting x and outcome a."""

    party: Party
    in_spaces: Tuple[Subsystem, ...]
    out_space: Subsystem
    ops: np.ndarray

    def __post_init__(self) -> None:
        if self.party not in ("A", "B"):
            raise InvalidInstrumentError(f"party must be 'A' or 'B', got {self.party!r}")
        ops = np.array(self.ops, dtype=complex)
        side = self.d_in * self.out_space.dim
        if ops.ndim != 4 or ops.shape[2:] != (side, side):
            raise InvalidInstrumentError(
                f"ops must have shape (settings, outcomes, {side}, {side}), got {ops.shape}")
        ops.setflags(write=False)
        object.__setattr__(self, "in_spaces", tuple(self.in_spaces))
        object.__setattr__(self, "ops", ops)

    @property
    def settings(self) -> int:
        return self.ops.shape[0]

    @property
    def outcomes(self) -> int:
        return self.ops.shape[1]

    @property
    def d_in(self) -> int:
        return int(np.prod([s.dim for s in self.in_spaces]))

    @property
    def subsystems(self) -> Tuple[Subsystem, ...]:
        return (*self.in_spaces, self.out_space)

    def op(self, x: int, a: int) -> HermitianOp:
        return HermitianOp(self.ops[x, a], self.subsystems)

    def completeness_defect(self) -> float:
        """max over settings of ‖tr_out Σ_a ops[x, a] − 1_in‖."""
        total = self.ops.sum(axis=1)
        reduced = ptrace_array(total, (self.d_in, self.out_space.dim), [1])
        return float(np.max(np.abs(reduced - np.eye(self.d_in))))

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.ops)))

    def is_valid(self, tol: float = INSTRUMENT_TOL) -> bool:
        return self.min_eigenvalue() >= -tol and self.completeness_defect() <= tol

    def validate(self, tol: float = INSTRUMENT_TOL) -> "Instrument":
        if self.min_eigenvalue() < -tol:
            raise InvalidInstrumentError(f"instrument is not CP (min eigenvalue {self.min_eigenvalue():.3e})")
        if self.completeness_defect() > tol:
            raise InvalidInstrumentError(
                f"instrument is not complete (defect {self.completeness_defect():.3e})")
        return self

    def transpose(self) -> "Instrument":
        return Instrument(self.party, self.in_spaces, self.out_space, np.swapaxes(self.ops, -1, -2))

    def renormalized(self) -> "Instrument":
        """Clip each operator to PSD and conjugate by (S_x^{-1/2} ⊗ 1) so completeness holds exactly."""
        vals, vecs = np.linalg.eigh(self.ops)
        ops = (vecs * np.clip(vals, 0.0, None)[..., None, :]) @ np.conj(np.swapaxes(vecs, -1, -2))
        d_out = self.out_space.dim
        fixed = np.empty_like(ops)
        for x in range(self.settings):
            s = ptrace_array(ops[x].sum(axis=0), (self.d_in, d_out), [1])
            s_vals, s_vecs = np.linalg.eigh((s + s.conj().T) / 2)
            inv_sqrt = (s_vecs / np.sqrt(np.clip(s_vals, 1e-15, None))) @ s_vecs.conj().T
            t = np.kron(inv_sqrt, np.eye(d_out))
            fixed[x] = t @ ops[x] @ t.conj().T
        fixed = (fixed + np.conj(np.swapaxes(fixed, -1, -2))) / 2
        return Instrument(self.party, self.in_spaces, self.out_space, fixed)


def _haar_isometry(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    g = rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))
    q, r = np.linalg.qr(g)
    phases = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * phases


def random_instrument(
    party: Party,
    settings: int,
    outcomes: int,
    in_spaces: Sequence[Subsystem],
    out_space: Subsystem,
    seed: SeedLike = None,
) -> Instrument:
    """Per setting: a Haar-random isometry into out ⊗ environment, then a random projective
    measurement of the environment split into ``outcomes`` groups."""
    if settings < 1 or outcomes < 1:
        raise InvalidInstrumentError("an instrument needs at least one setting and one outcome")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d_in = int(np.prod([s.dim for s in in_spaces]))
    d_out = out_space.dim
    k = max(d_in * d_out, outcomes)
    side = d_in * d_out
    ops = np.zeros((settings, outcomes, side, side), dtype=complex)
    for x in range(settings):
        v = _haar_isometry(rng, d_out * k, d_in).reshape(d_out, k, d_in)
        u = _haar_isometry(rng, k, k)
        # rotate the environment into a random basis, then group basis vectors per outcome
        v = np.einsum("jk,okd->ojd", u.conj().T, v)
        groups = np.array_split(rng.permutation(k), outcomes)
        for a, group in enumerate(groups):
            for j in group:
                kraus = v[:, j, :]
                vec = kraus.conj().T.reshape(-1)
                ops[x, a] += np.outer(vec, vec.conj())
    return Instrument(party, tuple(in_spaces), out_space, ops)


def instrument_for(w: ProcessMatrix, party: Party, settings: int, outcomes: int, seed: SeedLike = None) -> Instrument:
    """Random instrument on the spaces ``party`` holds in ``w``."""
    st = w.structure
    if party == "A":
        return random_instrument("A", settings, outcomes, st.alice_inputs, st.a_out, seed)
    return random_instrument("B", settings, outcomes, st.bob_inputs, st.b_out, seed)


def _check_spaces(w: ProcessMatrix, inst: Instrument) -> None:
    expected = w.structure.alice if inst.party == "A" else w.structure.bob
    if inst.subsystems != expected:
        raise OperatorError(
            f"instrument of party {inst.party} acts on {[s.label for s in inst.subsystems]}, "
            f"process expects {[s.label for s in expected]}")


def _split(w: ProcessMatrix) -> np.ndarray:
    da = int(np.prod([s.dim for s in w.structure.alice]))
    db = int(np.prod([s.dim for s in w.structure.bob]))
    return w.matrix.reshape(da, db, da, db)


def prob_table(w: ProcessMatrix, a: Instrument, b: Instrument, tol: float = INSTRUMENT_TOL) -> ProbabilityTable:
    """p(a, b | x, y) = tr[W · (ξ_x^a ⊗ η_y^b)]."""
    if a.party != "A" or b.party != "B":
        raise OperatorError("prob_table expects Alice's instrument first, then Bob's")
    _check_spaces(w, a)
    _check_spaces(w, b)
    p = np.einsum("ikjl,xaji,yblk->abxy", _split(w), a.ops, b.ops, optimize=True)
    return ProbabilityTable(np.real(p), tol=tol)


def contract_party(w: ProcessMatrix, fixed: Instrument) -> np.ndarray:
    """Operators F on the other party's spaces with tr[ξ · F[s, o]] = p for the fixed (setting s, outcome o)."""
    _check_spaces(w, fixed)
    w4 = _split(w)
    if fixed.party == "B":
        f = np.einsum("ikjl,yblk->ybij", w4, fixed.ops, optimize=True)
    else:
        f = np.einsum("ikjl,xaji->xakl", w4, fixed.ops, optimize=True)
    return (f + np.conj(np.swapaxes(f, -1, -2))) / 2


@dataclass(eq=False)
class GameFunctional:
    """Linear score Σ c(a, b, x, y)·p(a, b | x, y) with its causal bound."""

    coeffs: np.ndarray
    bound: Optional[float] = None
    name: str = "custom"

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 4:
            raise ValueError(f"game coefficients need axes (a, b, x, y), got shape {self.coeffs.shape}")
        if self.bound is None:
            self.bound = causal_bound(self.coeffs)

    @property
    def outcomes(self) -> Tuple[int, int]:
        return self.coeffs.shape[0], self.coeffs.shape[1]

    @property
    def settings(self) -> Tuple[int, int]:
        return self.coeffs.shape[2], self.coeffs.shape[3]

    def score(self, table: ProbabilityTable) -> float:
        if table.entries.shape != self.coeffs.shape:
            raise ValueError(f"table shape {table.entries.shape} does not match game {self.coeffs.shape}")
        return table.value(self.coeffs)


def gyni_game() -> GameFunctional:
    c = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for y in range(2):
            c[y, x, x, y] = 0.25
    return GameFunctional(c, bound=0.5, name="gyni")
