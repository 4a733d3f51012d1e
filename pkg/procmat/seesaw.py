"""See-saw maximization of a game functional over both parties' instruments.

Each half-step fixes one party's instrument, contracts it into the process and
solves the resulting SDP for the other party exactly: maximize a linear
functional of the CJ operators subject to positivity and, per setting,
tr_out Σ_a ξ[x, a] = 1_in.  Only improving half-steps are accepted, so every
restart's score history is nondecreasing.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .causality import InvalidTableError
from .conic_solver import ConeProgram, SolverError, basis_rows, solve, svec
from .instruments import GameFunctional, Instrument, contract_party, instrument_for, prob_table
from .process_space import InvalidProcessError, ProcessMatrix

logger = logging.getLogger(__name__)

EVIDENCE_FOUND = "violation found"
EVIDENCE_NONE = "no violation found (evidence, not proof)"


class SeesawSettings(BaseModel):
    """Knobs of the alternating optimization."""

    restarts: int = Field(default=20, ge=1, description="Independent random starts.")
    seed: int = Field(default=0, ge=0, description="Root seed; restarts use spawned children.")
    inner_tol: float = Field(default=1e-9, gt=0, description="Tolerance of each inner SDP.")
    outer_tol: float = Field(default=1e-10, ge=0, description="Stop when an alternation gains less.")
    max_alternations: int = Field(default=200, ge=1)
    max_iter: int = Field(default=200, ge=1, description="Interior-point iterations per inner SDP.")
    accept_tol: float = Field(default=1e-6, gt=0)
    threads: int = Field(default=1, ge=1)
    violation_tol: float = Field(default=1e-7, ge=0, description="Margin above the causal bound that counts as a violation.")


@dataclass
class RestartRecord:
    restart: int
    seed: int
    best_score: Optional[float]
    alternations: int
    status: str


@dataclass
class SeesawResult:
    best_score: float
    strategy: Tuple[Instrument, Instrument]
    history: List[float]
    restarts_used: int
    bound: float
    runs: List[RestartRecord] = field(default_factory=list)
    kappa: Optional[float] = None

    @property
    def violation(self) -> float:
        return self.best_score - self.bound

    def evidence(self, violation_tol: float = 1e-7) -> str:
        return EVIDENCE_FOUND if self.violation > violation_tol else EVIDENCE_NONE


@lru_cache(maxsize=16)
def _completeness_rows(d_in: int, d_out: int) -> Tuple[np.ndarray, np.ndarray]:
    eye_out = np.eye(d_out)

    def kron_out(batch: np.ndarray) -> np.ndarray:
        m = batch.shape[0]
        return np.einsum("nij,kl->nikjl", batch, eye_out).reshape(m, d_in * d_out, d_in * d_out)

    return basis_rows(kron_out, d_in), svec(np.eye(d_in))


def _inner_program(h: np.ndarray, d_in: int, d_out: int) -> ConeProgram:
    settings, outcomes = h.shape[:2]
    rows, rhs = _completeness_rows(d_in, d_out)
    program = ConeProgram()
    names = [[f"x{x}a{a}" for a in range(outcomes)] for x in range(settings)]
    for x in range(settings):
        for a in range(outcomes):
            program.add_psd(names[x][a], d_in * d_out)
    program.set_objective({names[x][a]: -h[x, a] for x in range(settings) for a in range(outcomes)})
    for x in range(settings):
        program.add_constraints({name: rows for name in names[x]}, rhs)
    return program


def best_response(
    w: ProcessMatrix,
    game: GameFunctional,
    fixed: Instrument,
    settings: Optional[SeesawSettings] = None,
) -> Tuple[Instrument, float]:
    """Optimal instrument of the other party against ``fixed``, and the resulting score."""
    settings = settings or SeesawSettings()
    st = w.structure
    f = contract_party(w, fixed)
    if fixed.party == "B":
        h = np.einsum("abxy,ybij->xaij", game.coeffs, f)
        in_spaces, out_space, party = st.alice_inputs, st.a_out, "A"
    else:
        h = np.einsum("abxy,xakl->ybkl", game.coeffs, f)
        in_spaces, out_space, party = st.bob_inputs, st.b_out, "B"
    d_in = int(np.prod([s.dim for s in in_spaces]))
    program = _inner_program(h, d_in, out_space.dim)
    sol = solve(program, tol=settings.inner_tol, max_iter=settings.max_iter)
    sol.ensure_usable(settings.accept_tol, "see-saw inner step")

    settings_n, outcomes_n = h.shape[:2]
    ops = np.stack([
        np.stack([sol.primal[f"x{x}a{a}"] for a in range(outcomes_n)]) for x in range(settings_n)
    ])
    inst = Instrument(party, in_spaces, out_space, ops).renormalized()
    table = prob_table(w, inst, fixed) if party == "A" else prob_table(w, fixed, inst)
    return inst, game.score(table)


def _seed_of(child: np.random.SeedSequence) -> int:
    return int(child.generate_state(1)[0])


def _run_restart(
    w: ProcessMatrix,
    game: GameFunctional,
    settings: SeesawSettings,
    index: int,
    child: np.random.SeedSequence,
) -> Tuple[RestartRecord, Tuple[Instrument, Instrument], List[float]]:
    rng = np.random.default_rng(child)
    na, nb = game.outcomes
    nx, ny = game.settings
    a = instrument_for(w, "A", nx, na, rng)
    b = instrument_for(w, "B", ny, nb, rng)
    score = game.score(prob_table(w, a, b))
    history = [score]
    alternations = 0
    for alternations in range(1, settings.max_alternations + 1):
        previous = score
        a_new, s = best_response(w, game, b, settings)
        if s > score:
            a, score = a_new, s
        b_new, s = best_response(w, game, a, settings)
        if s > score:
            b, score = b_new, s
        history.append(score)
        if score - previous < settings.outer_tol:
            break
    logger.debug("restart %d: score %.10f after %d alternations", index, score, alternations)
    record = RestartRecord(index, _seed_of(child), score, alternations, "ok")
    return record, (a, b), history


def seesaw(
    w: ProcessMatrix,
    game: GameFunctional,
    restarts: Optional[int] = None,
    inner_tol: Optional[float] = None,
    outer_tol: Optional[float] = None,
    settings: Optional[SeesawSettings] = None,
) -> SeesawResult:
    settings = settings or SeesawSettings()
    overrides = {k: v for k, v in
                 (("restarts", restarts), ("inner_tol", inner_tol), ("outer_tol", outer_tol)) if v is not None}
    if overrides:
        settings = settings.model_copy(update=overrides)
    w.validate()

    children = np.random.SeedSequence(settings.seed).spawn(settings.restarts)
    records: List[RestartRecord] = []
    best: Optional[Tuple[float, int, Tuple[Instrument, Instrument], List[float]]] = None
    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        futures = [pool.submit(_run_restart, w, game, settings, i, child) for i, child in enumerate(children)]
        for i, fut in enumerate(futures):
            try:
                record, strategy, history = fut.result()
            except (SolverError, InvalidTableError, np.linalg.LinAlgError) as exc:
                logger.warning("see-saw restart %d skipped: %s", i, exc)
                records.append(RestartRecord(i, _seed_of(children[i]), None, 0, f"failed: {exc}"))
                continue
            records.append(record)
            if best is None or record.best_score > best[0]:
                best = (record.best_score, i, strategy, history)
    if best is None:
        raise SolverError(f"all {settings.restarts} see-saw restarts failed")

    used = sum(1 for r in records if r.status == "ok")
    result = SeesawResult(best[0], best[2], best[3], used, float(game.bound), records)
    logger.info("see-saw best %.10f (bound %.4f, %d/%d restarts): %s",
                result.best_score, result.bound, used, settings.restarts,
                result.evidence(settings.violation_tol))
    return result


def seesaw_extended(
    w_ext: ProcessMatrix,
    game: GameFunctional,
    kappa: float = 0.0,
    restarts: Optional[int] = None,
    settings: Optional[SeesawSettings] = None,
) -> SeesawResult:
    """See-saw on (1 − κ)·W_ext + κ·1°, instruments acting on the enlarged input spaces."""
    if not 0.0 <= kappa <= 1.0:
        raise InvalidProcessError(f"kappa must lie in [0, 1], got {kappa}")
    w = w_ext.with_noise(kappa, check=True) if kappa else w_ext
    result = seesaw(w, game, restarts=restarts, settings=settings)
    result.kappa = kappa
    return result


def noise_sweep(
    w_ext: ProcessMatrix,
    game: GameFunctional,
    kappas: Sequence[float],
    restarts: Optional[int] = None,
    settings: Optional[SeesawSettings] = None,
) -> List[Dict[str, object]]:
    """One CSV-ready row per κ; the trend in κ is recorded, not enforced."""
    settings = settings or SeesawSettings()
    rows: List[Dict[str, object]] = []
    for kappa in kappas:
        result = seesaw_extended(w_ext, game, kappa, restarts=restarts, settings=settings)
        rows.append({
            "kappa": kappa,
            "best_score": result.best_score,
            "violation": result.violation,
            "restarts_used": result.restarts_used,
            "evidence": result.evidence(settings.violation_tol),
        })
    return rows
