from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import os
import time
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from . import __version__
from .builder import NamedProcessBuilder
from .causality import causal_lp, certify_witness, random_robustness, werner_window, witness_check, witness_sw
from .conic_solver import SolverSettings
from .contract_adapter import ContractAdapter
from .instruments import GameFunctional, gyni_game, instrument_for, prob_table
from .models import (
    CausalLPResponse,
    ProcessFile,
    RegionRow,
    RobustnessResponse,
    RunManifest,
    TableFile,
    ValidityResponse,
    WernerWindowResponse,
    WitnessResponse,
)
from .persistence_proxy import PersistenceProxy
from .process_space import FamilyParams, InvalidProcessError, ProcessMatrix, eps_causal, eps_validity
from .sampler import (
    ChainCheckpoint,
    ChainConfig,
    ChainState,
    checkpoint,
    ptb_pipeline,
    restore,
    run_chain,
    separable_fraction,
)
from .seesaw import SeesawSettings, noise_sweep, seesaw_extended
from .store_json import write_json_atomic

logger = logging.getLogger(__name__)

# Colunas fixas de cada CSV produzido (fonte única de verdade para CLI e --help).
CSV_COLUMNS: Dict[str, Tuple[str, ...]] = {
    "region": ("q", "eps_v", "eps_c"),
    "ptb-pipeline": ("sample_index", "r_r", "valid", "separable"),
    "seesaw": ("restart", "seed", "best_score", "alternations", "status"),
    "noise-sweep": ("kappa", "best_score", "violation", "restarts_used", "evidence"),
    "sample": ("sample_index", "min_eig", "r_r", "separable"),
}

DEFAULT_KAPPAS: Tuple[float, ...] = (0.0, 1e-4, 2e-4, 3.3e-4, 5e-4, 1e-3)


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


class AnalysisFacade:
    """Facade (Structural Pattern) for every process-matrix use case."""

    def __init__(
        self,
        adapter: ContractAdapter,
        proxy: PersistenceProxy,
        builder: NamedProcessBuilder,
        threads: int = 1,
    ) -> None:
        self.adapter = adapter
        self.proxy = proxy
        self.builder = builder
        self.threads = max(1, int(threads))

    @staticmethod
    def _settings(tol: Optional[float]) -> SolverSettings:
        return SolverSettings() if tol is None else SolverSettings(tol=tol)

    # ------------------------------------------------------------------
    # construção e leitura
    # ------------------------------------------------------------------
    def named(self, name: str, params: Optional[FamilyParams] = None) -> ProcessFile:
        """
        Processo nomeado em formato Pauli, com os coeficientes exatos do Builder.
        """
        terms = self.builder.terms(name, params)
        # valida a matriz antes de a exportar
        self.builder.build(name, params)
        return self.adapter.terms_to_file(terms, self.builder.structure)

    def load_process(self, text: str, allow_invalid: bool = False) -> ProcessMatrix:
        return self.adapter.adapt_process(self.adapter.parse_process_text(text), allow_invalid)

    def load_game(self, text: Optional[str]) -> GameFunctional:
        if text is None:
            return gyni_game()
        return self.adapter.adapt_game(self.adapter.parse_game_text(text))

    # ------------------------------------------------------------------
    # análise
    # ------------------------------------------------------------------
    def validate(self, w: ProcessMatrix) -> ValidityResponse:
        report = w.validity()
        return ValidityResponse(
            psd=report["psd"],
            normalized=report["normalized"],
            in_valid_subspace=report["in_valid_subspace"],
            min_eigenvalue=report["min_eigenvalue"],
            trace=report["trace"],
            subspace_defect=report["subspace_defect"],
            valid=w.is_valid,
        )

    def robustness(self, w: ProcessMatrix, tol: Optional[float] = None) -> RobustnessResponse:
        report = random_robustness(w, self._settings(tol))
        witness = None
        if report.witness is not None and w.structure.is_qubit_core and not w.structure.is_extended:
            witness = self.adapter.op_to_terms(report.witness.s)
        return RobustnessResponse(
            lambda_opt=report.lambda_opt,
            separable=report.separable,
            witness=witness,
            solver=report.solver,
        )

    def witness(self, certify: bool = False, tol: Optional[float] = None) -> WitnessResponse:
        s = witness_sw()
        response = WitnessResponse(terms=self.adapter.op_to_terms(s.s), check_passed=witness_check(s))
        if certify:
            cert = certify_witness(s, self._settings(tol))
            response.certified = cert.certified
            response.certificate_value = cert.value
        return response

    def born(self, w: ProcessMatrix, seed: int = 0, settings: int = 2, outcomes: int = 2) -> TableFile:
        """
        Tabela p(a, b | x, y) para instrumentos aleatórios (CPTP) das duas partes.
        """
        rng = np.random.default_rng(seed)
        a = instrument_for(w, "A", settings, outcomes, rng)
        b = instrument_for(w, "B", settings, outcomes, rng)
        return self.adapter.table_to_file(prob_table(w, a, b))

    def causal_lp(self, table: TableFile, tol: Optional[float] = None) -> CausalLPResponse:
        p = self.adapter.adapt_table(table)
        result = causal_lp(p, self._settings(tol))
        if result.causal:
            return CausalLPResponse(causal=True, q=result.decomposition[0])
        g, beta = result.certificate
        return CausalLPResponse(
            causal=False,
            certificate=self.adapter.sparse_entries(g, cutoff=1e-12),
            certificate_bound=beta,
            certificate_value=result.certificate_value,
        )

    def region(self, grid: int = 1001) -> List[RegionRow]:
        if grid < 2:
            raise ValueError("grid must be at least 2")
        return [RegionRow(q=q, eps_v=eps_validity(q), eps_c=eps_causal(q))
                for q in (i / (grid - 1) for i in range(grid))]

    def werner_window(
        self,
        alpha: float,
        gamma_check: Optional[float] = 0.2,
        tol: Optional[float] = None,
    ) -> WernerWindowResponse:
        if not 0.0 <= alpha <= 1.0:
            raise InvalidProcessError(f"alpha must lie in [0, 1], got {alpha}")
        window = werner_window(alpha, gamma_check, self._settings(tol))
        return WernerWindowResponse(
            alpha=window.alpha,
            r_mix=window.r_mix,
            r_mix_tb=window.r_mix_tb,
            gamma_low=window.gamma_low,
            gamma_high=window.gamma_high,
            closed_forms=window.closed_forms,
            gamma_check=window.gamma_check,
            r_wer=window.r_wer,
            r_wer_tb=window.r_wer_tb,
            check_passed=window.check_passed,
        )

    # ------------------------------------------------------------------
    # otimização e amostragem (saídas CSV)
    # ------------------------------------------------------------------
    def seesaw(
        self,
        w: ProcessMatrix,
        game: GameFunctional,
        restarts: int = 20,
        seed: int = 0,
        tol: Optional[float] = None,
        kappa: float = 0.0,
    ) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
        settings = SeesawSettings(restarts=restarts, seed=seed, threads=self.threads)
        if tol is not None:
            settings = settings.model_copy(update={"inner_tol": tol})
        result = seesaw_extended(w, game, kappa, settings=settings)
        rows = [{"restart": r.restart, "seed": r.seed, "best_score": r.best_score,
                 "alternations": r.alternations, "status": r.status} for r in result.runs]
        summary = {
            "game": game.name,
            "best_score": result.best_score,
            "bound": result.bound,
            "violation": result.violation,
            "restarts_used": result.restarts_used,
            "evidence": result.evidence(settings.violation_tol),
        }
        return summary, rows

    def noise_sweep(
        self,
        w_ext: Optional[ProcessMatrix],
        game: GameFunctional,
        kappas: Sequence[float] = DEFAULT_KAPPAS,
        restarts: int = 20,
        seed: int = 0,
        tol: Optional[float] = None,
    ) -> List[Dict[str, Any]]:
        w_ext = w_ext if w_ext is not None else self.builder.build_extended()
        settings = SeesawSettings(restarts=restarts, seed=seed, threads=self.threads)
        if tol is not None:
            settings = settings.model_copy(update={"inner_tol": tol})
        return noise_sweep(w_ext, game, kappas, settings=settings)

    def sample(
        self,
        config: ChainConfig,
        n_samples: int,
        tol: Optional[float] = None,
        classify: bool = True,
        checkpoint_name: Optional[str] = None,
    ) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
        """
        Amostras uniformes por hit-and-run; com checkpoint_name o estado da cadeia
        é guardado após cada amostra e retomado na próxima execução.
        """
        state: Optional[ChainState] = None
        rng = None
        if checkpoint_name:
            saved = self.proxy.get_checkpoint(checkpoint_name)
            if saved is not None:
                state, rng = restore(ChainCheckpoint.model_validate(saved))
                logger.info("resuming chain %r at step %d", checkpoint_name, state.step_count)

        def on_sample(st: ChainState, generator: np.random.Generator) -> None:
            if checkpoint_name:
                self.proxy.save_checkpoint(checkpoint_name, checkpoint(st, generator).model_dump())

        samples = run_chain(config, n_samples, rng=rng, state=state, on_sample=on_sample)
        values: List[Optional[float]] = [None] * len(samples)
        fraction = None
        if classify:
            fraction, values = separable_fraction(samples, self._settings(tol), self.threads)
        rows = [{"sample_index": i, "min_eig": w.min_eigenvalue, "r_r": r,
                 "separable": None if r is None else r <= 0.0}
                for i, (w, r) in enumerate(zip(samples, values))]
        return {"n_samples": len(samples), "separable_fraction": fraction}, rows

    def ptb_pipeline(
        self,
        n_separable: int,
        config: ChainConfig,
        tol: Optional[float] = None,
    ) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
        stats = ptb_pipeline(n_separable, config, self._settings(tol), self.threads)
        rows = [{"sample_index": r.sample_index, "r_r": r.r_r, "valid": r.valid, "separable": r.separable}
                for r in stats.rows]
        summary = {
            "n_drawn": stats.n_drawn,
            "n_separable_input": stats.n_separable_input,
            "n_valid_after_map": stats.n_valid_after_map,
            "n_nonseparable_among_valid": stats.n_nonseparable_among_valid,
            "separable_fraction_drawn": stats.separable_fraction_drawn,
            "valid_fraction": stats.valid_fraction,
            "nonseparable_fraction": stats.nonseparable_fraction,
        }
        return summary, rows

    # ------------------------------------------------------------------
    # CSV + manifest + registo de execuções
    # ------------------------------------------------------------------
    @staticmethod
    def render_csv(command: str, rows: Iterable[Dict[str, Any]]) -> str:
        columns = CSV_COLUMNS[command]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])
        return buf.getvalue()

    def emit_csv(
        self,
        command: str,
        rows: List[Dict[str, Any]],
        out: Optional[str],
        config: Dict[str, Any],
        seeds: Sequence[int],
        started: float,
        stream: Optional[TextIO] = None,
    ) -> RunManifest:
        """
        Escreve o CSV (ficheiro ou stream), o manifest ao lado do ficheiro
        e acrescenta o manifest ao registo de execuções.
        """
        text = self.render_csv(command, rows)
        if out:
            directory = os.path.dirname(out)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(out, "w", encoding="utf-8", newline="") as f:
                f.write(text)
        elif stream is not None:
            stream.write(text)

        manifest = RunManifest(
            command=command,
            config=config,
            seeds=list(seeds),
            tool_version=__version__,
            wall_time=time.perf_counter() - started,
            created_at=dt.datetime.now(dt.timezone.utc).isoformat(),
            output=out,
            rows=len(rows),
        )
        if out:
            write_json_atomic(out + ".manifest.json", manifest.model_dump())
        self.proxy.append_run(manifest.model_dump())
        return manifest

    def list_runs(self, command: Optional[str] = None) -> List[Dict[str, Any]]:
        return self.proxy.list_runs(command)
