"""Hit-and-run sampling of valid qubit processes and the partial-transpose pipeline.

The valid set is the slice {1° + Σ c_i Q_i ⪰ 0} spanned by the allowed Pauli
terms; chains move along basis directions and never leave it.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field

from .causality import random_robustness
from .conic_solver import ConeProgram, SolverSettings, hermitian_units, solve, svec
from .operators import HermitianOp, pauli_coefficients, pauli_compose, pauli_decompose
from .process_space import PartyStructure, ProcessMatrix, allowed_basis, white_noise

logger = logging.getLogger(__name__)

BOUNDARY_EIG = 1e-12
CHORD_SHRINK = 1e-10
TB_INVALID_EIG = -1e-9
_MAX_RESAMPLE = 100

Variant = Literal["chord", "reject", "reject-literal"]


class BoundaryError(RuntimeError):
    """The current point is (numerically) on the boundary of the PSD cone."""


class ChainConfigError(ValueError):
    """Unusable chain configuration or a runaway rejection loop."""


class ChainConfig(BaseModel):
    """Hit-and-run chain parameters."""

    seed: int = Field(default=0, ge=0)
    warmup_steps: int = Field(default=10_000, ge=0, description="Steps discarded before the first sample.")
    thinning: int = Field(default=100, ge=1, description="Steps between recorded samples.")
    variant: Variant = Field(default="chord", description="chord: full-chord hit-and-run; reject: anchor move.")
    reject_overshoot: float = Field(default=1e-2, gt=0, description="Anchor min eigenvalue is -overshoot.")
    max_rejections: int = Field(default=10_000, ge=1, description="Consecutive rejections tolerated.")
    boundary_method: Literal["eigen", "bisection"] = "eigen"


@dataclass
class ChainState:
    current: ProcessMatrix
    step_count: int = 0
    rejection_count: int = 0


@dataclass
class PipelineRow:
    sample_index: int
    r_r: Optional[float]
    valid: bool
    separable: bool


@dataclass
class PipelineStats:
    n_drawn: int
    n_separable_input: int
    n_valid_after_map: int
    n_nonseparable_among_valid: int
    rows: List[PipelineRow] = field(default_factory=list)

    @property
    def separable_fraction_drawn(self) -> float:
        return self.n_separable_input / self.n_drawn if self.n_drawn else math.nan

    @property
    def valid_fraction(self) -> float:
        return self.n_valid_after_map / self.n_separable_input if self.n_separable_input else math.nan

    @property
    def nonseparable_fraction(self) -> float:
        return self.n_nonseparable_among_valid / self.n_valid_after_map if self.n_valid_after_map else math.nan


class ChainCheckpoint(BaseModel):
    """Resumable chain position: the process in Pauli form plus the bit-generator state."""

    step_count: int
    rejection_count: int
    pauli_coeffs: Dict[str, float]
    bit_generator_state: Dict[str, Any]


# ---------------------------------------------------------------------------
# Chord search
# ---------------------------------------------------------------------------

def _as_matrix(x: Union[ProcessMatrix, HermitianOp, np.ndarray]) -> np.ndarray:
    if isinstance(x, ProcessMatrix):
        return x.matrix
    if isinstance(x, HermitianOp):
        return x.matrix
    return np.asarray(x)


def _bisect_edge(wm: np.ndarray, qm: np.ndarray, tol: float) -> float:
    def feasible(mu: float) -> bool:
        return np.linalg.eigvalsh(wm + mu * qm)[0] >= 0.0

    hi = 1.0
    while feasible(hi):
        hi *= 2.0
        if hi > 1e12:
            raise BoundaryError("direction does not leave the PSD cone")
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def chord_bounds(
    w: Union[ProcessMatrix, HermitianOp, np.ndarray],
    q: Union[HermitianOp, np.ndarray],
    method: Literal["eigen", "bisection"] = "eigen",
    tol: float = 1e-10,
) -> Tuple[float, float]:
    """(mu_minus, mu_plus) with {μ : W + μQ ⪰ 0} = [−mu_minus, mu_plus]."""
    wm, qm = _as_matrix(w), _as_matrix(q)
    if np.linalg.eigvalsh(wm)[0] < BOUNDARY_EIG:
        raise BoundaryError("state is on the boundary of the PSD cone")
    if method == "bisection":
        return _bisect_edge(wm, -qm, tol), _bisect_edge(wm, qm, tol)
    try:
        nu = scipy.linalg.eigh(qm, wm, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise BoundaryError(f"Cholesky of the state failed: {exc}") from exc
    if nu[0] >= 0.0 or nu[-1] <= 0.0:
        raise BoundaryError("direction is not traceless within the allowed span")
    return 1.0 / nu[-1], -1.0 / nu[0]


def chord_bounds_sdp(
    w: Union[ProcessMatrix, HermitianOp, np.ndarray],
    q: Union[HermitianOp, np.ndarray],
    settings: Optional[SolverSettings] = None,
) -> Tuple[float, float]:
    """Chord ends from max μ s.t. W + μQ ⪰ 0 (and the same for −Q), solved as SDPs."""
    settings = settings or SolverSettings()
    wm, qm = _as_matrix(w), _as_matrix(q)
    side = wm.shape[0]
    basis = hermitian_units(np.arange(side * side), side)

    def edge(direction: np.ndarray) -> float:
        program = ConeProgram()
        program.add_psd("Z", side)
        program.add_free("mu", 1)
        program.set_objective({"mu": [-1.0]})
        program.add_constraints({"Z": basis, "mu": -svec(direction)[:, None]}, svec(wm))
        sol = solve(program, settings=settings).ensure_usable(settings.accept_tol, "boundary SDP")
        return float(sol.primal["mu"][0])

    return edge(-qm), edge(qm)


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------

@lru_cache(maxsize=4)
def direction_matrices(structure: PartyStructure) -> np.ndarray:
    """Hilbert–Schmidt orthonormal allowed-term directions."""
    mats = allowed_basis(structure).matrices(normalized=True)
    mats.setflags(write=False)
    return mats


def _advance(state: ChainState, matrix: np.ndarray, rejections: int = 0) -> ChainState:
    structure = state.current.structure
    op = HermitianOp(matrix, structure.canonical)
    return ChainState(ProcessMatrix(op, structure, check=False),
                      state.step_count + 1, state.rejection_count + rejections)


def hit_and_run_step(state: ChainState, config: ChainConfig, rng: np.random.Generator) -> ChainState:
    """Random basis direction with random sign, θ uniform on the full chord."""
    mats = direction_matrices(state.current.structure)
    wm = state.current.matrix
    for _ in range(_MAX_RESAMPLE):
        q = mats[rng.integers(len(mats))] * rng.choice((-1.0, 1.0))
        try:
            lo, hi = chord_bounds(wm, q, config.boundary_method)
        except BoundaryError as exc:
            logger.warning("boundary degeneracy at step %d (%s); resampling direction", state.step_count, exc)
            continue
        theta = rng.uniform(-lo, hi) * (1.0 - CHORD_SHRINK)
        return _advance(state, wm + theta * q)
    raise BoundaryError(f"no usable direction after {_MAX_RESAMPLE} attempts")


def rejection_anchor(structure: PartyStructure, q: np.ndarray, overshoot: float) -> np.ndarray:
    """1° + c·Q with c chosen so that its minimum eigenvalue is exactly −overshoot."""
    lam_min = float(np.linalg.eigvalsh(q)[0])
    if lam_min >= 0.0:
        raise ChainConfigError("direction has no negative eigenvalue")
    c = (1.0 / structure.d_in + overshoot) / (-lam_min)
    return white_noise(structure).matrix + c * q


def hit_and_run_reject_step(state: ChainState, config: ChainConfig, rng: np.random.Generator) -> ChainState:
    """Convex move toward a slightly external anchor, retried until the result is PSD.

    ``variant="reject-literal"`` adds θ·anchor instead, which inflates the trace;
    it exists for comparison and is never used for statistics.
    """
    structure = state.current.structure
    mats = direction_matrices(structure)
    wm = state.current.matrix
    for rejections in range(config.max_rejections + 1):
        q = mats[rng.integers(len(mats))] * rng.choice((-1.0, 1.0))
        anchor = rejection_anchor(structure, q, config.reject_overshoot)
        theta = rng.uniform(0.0, 1.0)
        if config.variant == "reject-literal":
            candidate = wm + theta * anchor
        else:
            candidate = (1.0 - theta) * wm + theta * anchor
        if np.linalg.eigvalsh(candidate)[0] >= 0.0:
            return _advance(state, candidate, rejections)
    raise ChainConfigError(
        f"{config.max_rejections} consecutive rejections; lower reject_overshoot")


def _stepper(config: ChainConfig) -> Callable[[ChainState, ChainConfig, np.random.Generator], ChainState]:
    return hit_and_run_step if config.variant == "chord" else hit_and_run_reject_step


def start_state(structure: Optional[PartyStructure] = None) -> ChainState:
    structure = structure or PartyStructure.qubits()
    return ChainState(ProcessMatrix(white_noise(structure), structure))


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------

def checkpoint(state: ChainState, rng: np.random.Generator) -> ChainCheckpoint:
    coeffs = {p.letters: p.coefficient for p in pauli_decompose(state.current.op, cutoff=0.0)}
    return ChainCheckpoint(
        step_count=state.step_count,
        rejection_count=state.rejection_count,
        pauli_coeffs=coeffs,
        bit_generator_state=rng.bit_generator.state,
    )


def restore(cp: ChainCheckpoint, structure: Optional[PartyStructure] = None) -> Tuple[ChainState, np.random.Generator]:
    structure = structure or PartyStructure.qubits()
    op = pauli_compose(cp.pauli_coeffs, structure.canonical)
    rng = np.random.default_rng()
    rng.bit_generator.state = cp.bit_generator_state
    return ChainState(ProcessMatrix(op, structure), cp.step_count, cp.rejection_count), rng


def run_chain(
    config: ChainConfig,
    n_samples: int,
    rng: Optional[np.random.Generator] = None,
    state: Optional[ChainState] = None,
    on_sample: Optional[Callable[[ChainState, np.random.Generator], None]] = None,
) -> List[ProcessMatrix]:
    """Discard the warmup, then record every ``thinning``-th state; every sample is validated."""
    if n_samples < 1:
        raise ChainConfigError("n_samples must be >= 1")
    if config.variant == "reject-literal":
        raise ChainConfigError("the literal rejection move does not preserve the trace; not usable for chains")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    resumed = state is not None
    state = state if state is not None else start_state()
    step = _stepper(config)
    if not resumed:
        for _ in range(config.warmup_steps):
            state = step(state, config, rng)
    samples: List[ProcessMatrix] = []
    while len(samples) < n_samples:
        for _ in range(config.thinning):
            state = step(state, config, rng)
        samples.append(state.current.validate())
        if on_sample is not None:
            on_sample(state, rng)
    logger.debug("chain: %d samples after %d steps (%d rejections)",
                 len(samples), state.step_count, state.rejection_count)
    return samples


def run_chains(config: ChainConfig, n_samples: int, n_chains: int, threads: int = 1) -> List[List[ProcessMatrix]]:
    """Independent chains seeded from children of ``config.seed``."""
    children = np.random.SeedSequence(config.seed).spawn(n_chains)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(run_chain, config, n_samples, np.random.default_rng(c)) for c in children]
        return [f.result() for f in futures]


def _robustness_values(samples: List[ProcessMatrix], settings: Optional[SolverSettings], threads: int) -> List[float]:
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda w: random_robustness(w, settings).lambda_opt, samples))


def separable_fraction(
    samples: List[ProcessMatrix],
    settings: Optional[SolverSettings] = None,
    threads: int = 1,
) -> Tuple[float, List[float]]:
    values = _robustness_values(samples, settings, threads)
    return sum(1 for r in values if r <= 0.0) / len(values), values


def tb_permutes_basis(structure: Optional[PartyStructure] = None) -> bool:
    """T_B maps every allowed direction to ± itself."""
    structure = structure or PartyStructure.qubits()
    for t in allowed_basis(structure).terms:
        op = pauli_compose({t.letters: 1.0}, structure.canonical)
        image = ProcessMatrix(op, structure, check=False).transpose_b().op
        alpha = pauli_coefficients(image)
        if abs(abs(alpha[t.indices]) - 1.0) > 1e-12 or np.sum(np.abs(alpha)) - 1.0 > 1e-12:
            return False
    return True


def ptb_pipeline(
    n_separable: int,
    config: ChainConfig,
    settings: Optional[SolverSettings] = None,
    threads: int = 1,
) -> PipelineStats:
    """Collect separable samples, apply T_B and classify each image."""
    if config.variant == "reject-literal":
        raise ChainConfigError("the literal rejection move does not preserve the trace; not usable for chains")
    rng = np.random.default_rng(config.seed)
    state = start_state()
    step = _stepper(config)
    for _ in range(config.warmup_steps):
        state = step(state, config, rng)

    separable: List[ProcessMatrix] = []
    drawn = 0
    while len(separable) < n_separable:
        batch: List[ProcessMatrix] = []
        for _ in range(max(threads, n_separable - len(separable))):
            for _ in range(config.thinning):
                state = step(state, config, rng)
            batch.append(state.current.validate())
        for w, r in zip(batch, _robustness_values(batch, settings, threads)):
            if len(separable) == n_separable:
                break
            drawn += 1
            if r <= 0.0:
                separable.append(w)
        logger.info("pipeline: %d/%d separable after %d draws", len(separable), n_separable, drawn)

    images = [w.transpose_b() for w in separable]
    valid_images = [(i, t) for i, t in enumerate(images) if t.min_eigenvalue >= TB_INVALID_EIG]
    values = _robustness_values([t for _, t in valid_images], settings, threads)
    r_by_index = {i: r for (i, _), r in zip(valid_images, values)}

    rows = []
    for i in range(len(images)):
        r = r_by_index.get(i)
        rows.append(PipelineRow(i, r, r is not None, r is not None and r <= 0.0))
    n_valid = len(valid_images)
    n_nonsep = sum(1 for r in values if r > 0.0)
    return PipelineStats(drawn, len(separable), n_valid, n_nonsep, rows)
