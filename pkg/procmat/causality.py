"""Causal separability: random robustness, witnesses, causal correlations.

The robustness program decomposes ``W + λ·1°`` into an A≺B part ``X1 ⊗ 1_BO/d_BO``
and a B≺A part ``X2 ⊗ 1_AO/d_AO`` with X1, X2 ⪰ 0, minimizing λ.  Its dual
multipliers give the optimal witness S, normalized so that tr[S·1°] = 1 and
therefore tr[S·W] = −λ at the optimum.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .builder import I_AB, W_BA, WHITE_NOISE, NamedProcessBuilder
from .conic_solver import ConeProgram, SolverError, SolverSettings, basis_rows, smat, solve, svec
from .operators import (
    HermitianOp,
    Subsystem,
    identity_op,
    max_entangled,
    partial_trace,
    pauli_coefficients,
    pauli_compose,
    ptrace_array,
    tensor,
)
from .process_space import (
    FamilyParams,
    PartyStructure,
    ProcessMatrix,
    subspace_projection,
    trace_replace,
    white_noise,
)

if TYPE_CHECKING:
    from .instruments import GameFunctional

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
DECOMPOSITION_TOL = 1e-7
DENSE_PROGRAM_LIMIT = 2 * 2**30  # bytes of constraint data


class InvalidTableError(ValueError):
    """Probability table with negative entries, bad normalization or wrong alphabets."""


# ---------------------------------------------------------------------------
# Random robustness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    """Causal witness S on the process space, normalized to tr[S·1°] = 1."""

    s: HermitianOp

    @property
    def structure(self) -> PartyStructure:
        return PartyStructure.from_subsystems(self.s.subsystems)

    @property
    def normalization(self) -> float:
        return self.s.inner(white_noise(self.structure))

    def value(self, w: ProcessMatrix) -> float:
        """tr[S·W]; negative values certify that W is not causally separable."""
        return self.s.inner(w.op)


@dataclass
class RobustnessReport:
    lambda_opt: float
    decomposition: Optional[Tuple[HermitianOp, HermitianOp]]
    witness: Optional[Witness]
    solver: Dict[str, Any] = field(default_factory=dict)

    @property
    def separable(self) -> bool:
        return self.lambda_opt <= 0.0


def _without(structure: PartyStructure, label: str) -> Tuple[Subsystem, ...]:
    return tuple(s for s in structure.canonical if s.label != label)


def _marginal_rows(structure: PartyStructure, label: str) -> np.ndarray:
    """Rows of ``X ↦ X ⊗ 1_label / d_label`` over the svec coordinates of the full space."""
    dims = [s.dim for s in structure.canonical]
    pos = structure.labels.index(label)
    return basis_rows(lambda e: ptrace_array(e, dims, [pos]) / dims[pos], structure.side)


def _dense_program_bytes(structure: PartyStructure) -> int:
    side = structure.side
    side1 = side // structure.b_out.dim
    side2 = side // structure.a_out.dim
    return 16 * side * side * (side1 * side1 + side2 * side2)


@lru_cache(maxsize=8)
def _robustness_template(structure: PartyStructure, noise_weights: Tuple[float, ...]) -> ConeProgram:
    """One copy of the ordering equations per block, all sharing λ.

    Block ``k`` reads ``X1_k ⊗ 1_BO/d_BO + X2_k ⊗ 1_AO/d_AO − λ·ν_k·1 = W_k``.
    """
    ao, bo = structure.a_out, structure.b_out
    side = structure.side
    c1 = _marginal_rows(structure, bo.label)
    c2 = _marginal_rows(structure, ao.label)
    eye = svec(np.eye(side))

    program = ConeProgram()
    program.add_free("lam", 1)
    for k in range(len(noise_weights)):
        program.add_psd(f"X1_{k}", side // bo.dim)
        program.add_psd(f"X2_{k}", side // ao.dim)
    program.set_objective({"lam": [1.0]})
    for k, weight in enumerate(noise_weights):
        program.add_constraints(
            {f"X1_{k}": c1, f"X2_{k}": c2, "lam": -weight * eye[:, None]}, np.zeros(side * side))
    logger.debug("robustness program built for %s (%d blocks, %d rows)",
                 structure.labels, len(noise_weights), program.n_constraints)
    return program


@dataclass(frozen=True)
class _BlockForm:
    """W = Σ_k parts[k] ⊗ frames[k] with Hilbert–Schmidt orthonormal frames on the ancilla pair."""

    core: PartyStructure
    parts: Tuple[HermitianOp, ...]
    frames: Tuple[Optional[HermitianOp], ...]
    noise_weights: Tuple[float, ...]


def _block_form(w: ProcessMatrix, tol: float = 1e-9) -> Optional[_BlockForm]:
    """Split W over span{Φ⁺, 1 − Φ⁺} on the ancilla pair, if W lies there.

    Such W commute with every U ⊗ Ū on the ancillas.  Those are local unitaries on
    the parties' inputs and leave the causal cones and 1° invariant, so the
    program may average its variables over them and keep the optimum.
    """
    st = w.structure
    if not st.is_extended:
        return _BlockForm(st, (w.op.permute(st.labels),), (None,), (1.0 / st.d_in,))
    if len(st.a_anc) != 1 or len(st.b_anc) != 1 or st.a_anc[0].dim != st.b_anc[0].dim:
        return None
    a, b = st.a_anc[0], st.b_anc[0]
    d = a.dim
    core = PartyStructure(st.a_in, st.a_out, st.b_in, st.b_out)
    phi = max_entangled(d, (a.label, b.label))
    rest = (identity_op([a, b]) - phi) / math.sqrt(d * d - 1)
    frames = (phi, rest)

    m = w.op.permute(core.labels + (a.label, b.label)).matrix
    m4 = m.reshape(core.side, d * d, core.side, d * d)
    parts = tuple(np.einsum("iajb,ba->ij", m4, f.matrix) for f in frames)
    rebuilt = sum(np.kron(p, f.matrix) for p, f in zip(parts, frames))
    if np.max(np.abs(rebuilt - m)) > tol * max(1.0, float(np.max(np.abs(m)))):
        return None
    weights = tuple(f.trace() / st.d_in for f in frames)
    return _BlockForm(core, tuple(HermitianOp(p, core.canonical) for p in parts), frames, weights)


def random_robustness(w: ProcessMatrix, settings: Optional[SolverSettings] = None) -> RobustnessReport:
    """R_r(W) = min λ such that W + λ·1° is a mixture of the two causal orders.

    Ancilla-extended W that are invariant under U ⊗ Ū on the ancilla pair (for
    instance W ⊗ Φ⁺) are solved blockwise on the core spaces.
    """
    settings = settings or SolverSettings()
    w.validate()
    structure = w.structure
    form = _block_form(w)
    if form is None:
        need = _dense_program_bytes(structure)
        if need > DENSE_PROGRAM_LIMIT:
            raise SolverError(
                f"robustness program for a {structure.side}-dimensional process needs "
                f"{need / 2**30:.1f} GiB; only ancilla pairs in span{{Φ+, 1 − Φ+}} are reduced")
        form = _BlockForm(structure, (w.op.permute(structure.labels),), (None,), (1.0 / structure.d_in,))

    core = form.core
    rhs = np.concatenate([svec(p.matrix) for p in form.parts])
    program = _robustness_template(core, form.noise_weights).with_rhs(rhs)
    sol = solve(program, settings=settings).ensure_usable(settings.accept_tol, "random robustness")
    lam = sol.primal_objective

    ao, bo = core.a_out, core.b_out
    rows = core.side * core.side

    def lift(mat: np.ndarray, subsystems: Tuple[Subsystem, ...], frame: Optional[HermitianOp]) -> HermitianOp:
        op = HermitianOp(mat, subsystems)
        return op if frame is None else tensor(op, frame)

    x1 = [lift(sol.primal[f"X1_{k}"], _without(core, bo.label), f) for k, f in enumerate(form.frames)]
    x2 = [lift(sol.primal[f"X2_{k}"], _without(core, ao.label), f) for k, f in enumerate(form.frames)]
    w1 = tensor(sum(x1[1:], x1[0]), identity_op([bo], 1.0 / bo.dim)).permute(structure.labels)
    w2 = tensor(sum(x2[1:], x2[0]), identity_op([ao], 1.0 / ao.dim)).permute(structure.labels)
    witness = None
    if lam > 0:
        parts = [lift(-smat(sol.dual[k * rows:(k + 1) * rows], core.side), core.canonical, f)
                 for k, f in enumerate(form.frames)]
        witness = Witness(sum(parts[1:], parts[0]).permute(structure.labels))
    logger.debug("R_r = %.9f (%s, %d iterations)", lam, sol.status, sol.iterations)
    return RobustnessReport(lam, (w1, w2), witness, sol.summary())


# ---------------------------------------------------------------------------
# Witnesses
# ---------------------------------------------------------------------------

S_W_TERMS: Dict[str, float] = {
    "IIII": 0.25, "IZZI": -0.25, "IXXI": -0.25, "IYYI": -0.25, "ZIXZ": -0.25,
}


def witness_sw() -> Witness:
    return Witness(pauli_compose(S_W_TERMS, PartyStructure.qubits().canonical))


def witness_check(witness: Witness, tol: float = 1e-12) -> bool:
    """Sufficient condition tr_AO S ⪰ 0 and tr_BO S ⪰ 0; False is not a proof of anything."""
    structure = witness.structure
    for label in (structure.a_out.label, structure.b_out.label):
        if partial_trace(witness.s, [label]).min_eigenvalue() < -tol:
            return False
    return True


@dataclass
class WitnessCertificate:
    value: float
    certified: bool
    solver: Dict[str, Any] = field(default_factory=dict)


def _ordering_rows(space: Sequence[Subsystem], out_label: str) -> np.ndarray:
    """Coefficients of ``tr_rest(X) = [out] tr_rest(X)`` for every Hermitian basis element of ``space``."""
    d = int(np.prod([s.dim for s in space]))

    def rows(batch: np.ndarray) -> np.ndarray:
        out = []
        for e in batch:
            op = HermitianOp(e, space)
            out.append((op - trace_replace(op, [out_label])).matrix)
        return np.stack(out)

    return basis_rows(rows, d)


def certify_witness(
    witness: Witness,
    settings: Optional[SolverSettings] = None,
    tol: float = DECOMPOSITION_TOL,
) -> WitnessCertificate:
    """min tr[S(W1 + W2)] over valid ordered PSD pairs with tr(W1 + W2) = d_AO·d_BO."""
    settings = settings or SolverSettings()
    structure = witness.structure
    s = witness.s.permute(structure.labels)
    ao, bo = structure.a_out, structure.b_out
    d_alice_in = int(np.prod([x.dim for x in structure.alice_inputs]))
    d_bob_in = int(np.prod([x.dim for x in structure.bob_inputs]))

    alice_rows = _ordering_rows(structure.alice, ao.label)
    bob_rows = _ordering_rows(structure.bob, bo.label)
    side1 = structure.side // bo.dim
    side2 = structure.side // ao.dim

    program = ConeProgram()
    program.add_psd("X1", side1)
    program.add_psd("X2", side2)
    program.set_objective({
        "X1": partial_trace(s, [bo.label]).matrix / bo.dim,
        "X2": partial_trace(s, [ao.label]).matrix / ao.dim,
    })
    # 1) Alice's part of the A≺B component is a channel's CJ operator
    program.add_constraints(
        {"X1": np.stack([np.kron(r, np.eye(d_bob_in)) for r in alice_rows])},
        np.zeros(len(alice_rows)))
    # 2) Bob's part of the B≺A component likewise
    program.add_constraints(
        {"X2": np.stack([np.kron(np.eye(d_alice_in), r) for r in bob_rows])},
        np.zeros(len(bob_rows)))
    # 3) joint normalization
    program.add_constraint({"X1": np.eye(side1), "X2": np.eye(side2)}, structure.normalization)

    sol = solve(program, settings=settings).ensure_usable(settings.accept_tol, "witness certification")
    value = sol.primal_objective
    return WitnessCertificate(value, value >= -tol, sol.summary())


# ---------------------------------------------------------------------------
# Separable decompositions
# ---------------------------------------------------------------------------

def explicit_tb_decomposition(q: float, eps: float) -> Tuple[HermitianOp, HermitianOp, HermitianOp]:
    """(q/3)·I^{A≺B}, (1 − q + ε)·W^{B≺A} and (2q/3 − ε)·1°, summing to W(q, ε)^{T_B}."""
    subs = PartyStructure.qubits().canonical
    return (
        pauli_compose(I_AB, subs) * (q / 3.0),
        pauli_compose(W_BA, subs) * (1.0 - q + eps),
        pauli_compose(WHITE_NOISE, subs) * (2.0 * q / 3.0 - eps),
    )


def _ordered_component_ok(op: HermitianOp, structure: PartyStructure, out_label: str, tol: float) -> bool:
    if op.min_eigenvalue() < -tol:
        return False
    if op.frobenius_distance(trace_replace(op, [out_label])) > tol:
        return False
    return op.frobenius_distance(subspace_projection(op, structure)) <= tol


def separable_decomposition_check(
    w: ProcessMatrix,
    report: RobustnessReport,
    family: Optional[Tuple[float, float]] = None,
    tol: float = DECOMPOSITION_TOL,
) -> bool:
    """Verify the decomposition carried by ``report``; with ``family=(q, eps)`` also
    the explicit three-part decomposition of W(q, eps)^{T_B} against ``w``."""
    structure = w.structure
    if report.lambda_opt > tol or report.decomposition is None:
        return False
    w1, w2 = report.decomposition
    if not _ordered_component_ok(w1, structure, structure.b_out.label, tol):
        return False
    if not _ordered_component_ok(w2, structure, structure.a_out.label, tol):
        return False
    target = w.op + white_noise(structure) * report.lambda_opt
    if target.frobenius_distance(w1 + w2) > tol:
        return False
    if family is None:
        return True

    q, eps = family
    parts = explicit_tb_decomposition(q, eps)
    total = parts[0] + parts[1] + parts[2]
    if np.max(np.abs(pauli_coefficients(total) - pauli_coefficients(w.op))) > 1e-12:
        return False
    # weights must be nonnegative and each part ordered
    labels = (structure.b_out.label, structure.a_out.label, structure.b_out.label)
    return all(_ordered_component_ok(p, structure, lb, tol) for p, lb in zip(parts, labels))


# ---------------------------------------------------------------------------
# Probability tables and causal correlations
# ---------------------------------------------------------------------------

class ProbabilityTable:
    """p(a, b | x, y) stored as ``entries[a, b, x, y]``."""

    def __init__(self, entries: Any, tol: float = 1e-10) -> None:
        arr = np.array(entries, dtype=float)
        if arr.ndim != 4:
            raise InvalidTableError(f"table needs axes (a, b, x, y), got shape {arr.shape}")
        if arr.size == 0:
            raise InvalidTableError("table is empty")
        if np.min(arr) < -tol:
            raise InvalidTableError(f"negative probability {np.min(arr):.3e}")
        sums = arr.sum(axis=(0, 1))
        worst = float(np.max(np.abs(sums - 1.0)))
        if worst > tol:
            raise InvalidTableError(f"probabilities do not sum to 1 per setting (max deviation {worst:.3e})")
        arr.setflags(write=False)
        self.entries = arr

    @classmethod
    def uniform(cls, nx: int = 2, ny: int = 2, na: int = 2, nb: int = 2) -> "ProbabilityTable":
        return cls(np.full((na, nb, nx, ny), 1.0 / (na * nb)))

    @property
    def outcomes(self) -> Tuple[int, int]:
        return self.entries.shape[0], self.entries.shape[1]

    @property
    def settings(self) -> Tuple[int, int]:
        return self.entries.shape[2], self.entries.shape[3]

    @property
    def is_binary(self) -> bool:
        return self.entries.shape == (2, 2, 2, 2)

    def value(self, coeffs: np.ndarray) -> float:
        return float(np.sum(np.asarray(coeffs) * self.entries))

    def __repr__(self) -> str:
        return f"ProbabilityTable(outcomes={self.outcomes}, settings={self.settings})"


def gyni_score(p: ProbabilityTable) -> float:
    """Guess-your-neighbour's-input success probability (1/4)·Σ p(a=y, b=x | x, y)."""
    if not p.is_binary:
        raise InvalidTableError("GYNI needs binary inputs and outputs")
    return 0.25 * sum(p.entries[y, x, x, y] for x in range(2) for y in range(2))


def deterministic_causal_strategies(nx: int = 2, ny: int = 2, na: int = 2, nb: int = 2) -> np.ndarray:
    """Stack of deterministic one-way strategies (a = f(x), b = g(x, y)) and (b = g(y), a = f(x, y))."""
    out: List[np.ndarray] = []
    for f in itertools.product(range(na), repeat=nx):
        for g in itertools.product(range(nb), repeat=nx * ny):
            t = np.zeros((na, nb, nx, ny))
            for x, y in itertools.product(range(nx), range(ny)):
                t[f[x], g[x * ny + y], x, y] = 1.0
            out.append(t)
    for g in itertools.product(range(nb), repeat=ny):
        for f in itertools.product(range(na), repeat=nx * ny):
            t = np.zeros((na, nb, nx, ny))
            for x, y in itertools.product(range(nx), range(ny)):
                t[f[x * ny + y], g[y], x, y] = 1.0
            out.append(t)
    return np.stack(out)


def causal_bound(game: Union["GameFunctional", np.ndarray]) -> float:
    """Maximum of the game functional over causal tables (attained at a deterministic strategy)."""
    coeffs = np.asarray(getattr(game, "coeffs", game), dtype=float)
    na, nb, nx, ny = coeffs.shape
    strategies = deterministic_causal_strategies(nx, ny, na, nb)
    return float(np.max(np.tensordot(strategies, coeffs, axes=4)))


@dataclass
class CausalLPResult:
    causal: bool
    decomposition: Optional[Tuple[float, Optional[np.ndarray], Optional[np.ndarray]]] = None
    certificate: Optional[Tuple[np.ndarray, float]] = None
    certificate_value: Optional[float] = None
    solver: Dict[str, Any] = field(default_factory=dict)


def _causal_program(p: ProbabilityTable) -> ConeProgram:
    na, nb = p.outcomes
    nx, ny = p.settings
    shape = (na, nb, nx, ny)
    n = int(np.prod(shape))

    def unit(a, b, x, y) -> np.ndarray:
        e = np.zeros(shape)
        e[a, b, x, y] = 1.0
        return e

    mass = []
    for x, y in itertools.product(range(nx), range(ny)):
        if (x, y) == (0, 0):
            continue
        row = np.zeros(shape)
        row[:, :, x, y] += 1.0
        row[:, :, 0, 0] -= 1.0
        mass.append(row.reshape(n))
    no_b_to_a = []
    for a, x, y in itertools.product(range(na), range(nx), range(1, ny)):
        row = sum(unit(a, b, x, y) - unit(a, b, x, 0) for b in range(nb))
        no_b_to_a.append(row.reshape(n))
    no_a_to_b = []
    for b, y, x in itertools.product(range(nb), range(ny), range(1, nx)):
        row = sum(unit(a, b, x, y) - unit(a, b, 0, y) for a in range(na))
        no_a_to_b.append(row.reshape(n))

    program = ConeProgram()
    program.add_nonneg("P1", n)
    program.add_nonneg("P2", n)
    program.add_constraints({"P1": np.eye(n), "P2": np.eye(n)}, p.entries.reshape(n))
    for name, rows in (("P1", mass + no_b_to_a), ("P2", mass + no_a_to_b)):
        if rows:
            program.add_constraints({name: np.stack(rows)}, np.zeros(len(rows)))
    return program


def causal_lp(p: ProbabilityTable, settings: Optional[SolverSettings] = None) -> CausalLPResult:
    """Decide whether p splits into an A≺B and a B≺A part; otherwise return a separating inequality."""
    settings = settings or SolverSettings()
    shape = p.entries.shape
    n = int(np.prod(shape))
    program = _causal_program(p)
    sol = solve(program, settings=settings)
    if sol.status == "optimal":
        p1 = sol.primal["P1"].reshape(shape)
        p2 = sol.primal["P2"].reshape(shape)
        q = float(p1[:, :, 0, 0].sum())
        p_ab = p1 / q if q > 1e-12 else None
        p_ba = p2 / (1.0 - q) if q < 1.0 - 1e-12 else None
        return CausalLPResult(True, (q, p_ab, p_ba), solver=sol.summary())
    if sol.status != "unbounded_or_infeasible":
        sol.ensure_usable(settings.accept_tol, "causal LP")

    # Farkas alternative: A^T y >= 0, b.y = -1
    a, _ = program.assemble()
    b = program.rhs()
    m = a.shape[0]
    farkas = ConeProgram()
    farkas.add_free("y", m)
    farkas.add_nonneg("s", a.shape[1])
    farkas.add_constraints({"y": a.T, "s": -np.eye(a.shape[1])}, np.zeros(a.shape[1]))
    farkas.add_constraint({"y": b}, -1.0)
    cert = solve(farkas, settings=settings).ensure_usable(settings.accept_tol, "causal LP certificate")
    g = -cert.primal["y"][:n].reshape(shape)
    value = p.value(g)
    logger.info("table is not causal; certificate value %.6g > 0", value)
    return CausalLPResult(False, certificate=(g, 0.0), certificate_value=value, solver=cert.summary())


# ---------------------------------------------------------------------------
# Werner-like family
# ---------------------------------------------------------------------------

def robustness_closed_forms(alpha: float) -> Dict[str, float]:
    """Closed-form robustness of W_mix(α) and W_mix(α)^{T_B}, the resulting γ window
    and the mixing weight α* above which W_mix^{T_B} becomes separable."""
    eps_opt = 4.0 / SQRT3 - 2.0
    r = alpha * eps_opt + (1.0 - alpha) * (SQRT2 - 1.0)
    r_tb = alpha * (2.0 * SQRT3 - 4.0) / 3.0 + (1.0 - alpha) * (SQRT2 - 1.0)
    return {
        "r_mix": r,
        "r_mix_tb": r_tb,
        "r_mix_alt": 1.0 + alpha * (4.0 / SQRT3 - 3.0),
        "gamma_low": r_tb / (1.0 + r_tb),
        "gamma_high": r / (1.0 + r),
        "alpha_star": 3.0 * (SQRT2 - 1.0) / (1.0 + 3.0 * SQRT2 - 2.0 * SQRT3),
    }


@dataclass
class WernerWindow:
    alpha: float
    r_mix: float
    r_mix_tb: float
    gamma_low: float
    gamma_high: float
    closed_forms: Dict[str, float]
    gamma_check: Optional[float] = None
    r_wer: Optional[float] = None
    r_wer_tb: Optional[float] = None

    @property
    def check_passed(self) -> Optional[bool]:
        """At γ inside the window W_Wer must be nonseparable while its T_B is separable."""
        if self.gamma_check is None:
            return None
        return self.r_wer > 0.0 and self.r_wer_tb < 0.0


def werner_window(
    alpha: float,
    gamma_check: Optional[float] = 0.2,
    settings: Optional[SolverSettings] = None,
) -> WernerWindow:
    builder = NamedProcessBuilder()
    closed = robustness_closed_forms(alpha)
    logger.warning(
        "R_mix(0): sqrt(2)-1 = %.6f is used; the alternative reading 1 + alpha(4/sqrt(3) - 3) "
        "gives %.6f at alpha=0", SQRT2 - 1.0, robustness_closed_forms(0.0)["r_mix_alt"])

    w_mix = builder.build("wmix", FamilyParams(alpha=alpha))
    r = random_robustness(w_mix, settings).lambda_opt
    r_tb = random_robustness(w_mix.transpose_b(check=True), settings).lambda_opt
    window = WernerWindow(alpha, r, r_tb, r_tb / (1.0 + r_tb), r / (1.0 + r), closed)
    logger.info("W_mix(%.3f): R=%.6f (closed %.6f), R'=%.6f (closed %.6f)",
                alpha, r, closed["r_mix"], r_tb, closed["r_mix_tb"])

    if gamma_check is not None:
        w_wer = builder.build("wwer", FamilyParams(alpha=alpha, gamma=gamma_check))
        window.gamma_check = gamma_check
        window.r_wer = random_robustness(w_wer, settings).lambda_opt
        window.r_wer_tb = random_robustness(w_wer.transpose_b(check=True), settings).lambda_opt
    return window

