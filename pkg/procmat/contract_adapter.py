from __future__ import annotations

from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from .builder import Terms
from .causality import ProbabilityTable
from .instruments import GameFunctional
from .models import GameFile, PauliCoeff, ProcessFile, TableFile
from .operators import HermitianOp, Subsystem, pauli_compose, pauli_decompose
from .process_space import ANCILLA_LABELS, CORE_LABELS, PartyStructure, ProcessMatrix


class ContractAdapter:
    """Adapter (Structural Pattern) between the JSON file contracts and the domain objects."""

    # ------------------------------------------------------------------
    # raw text -> DTO
    # ------------------------------------------------------------------
    @staticmethod
    def parse_process_text(text: str) -> ProcessFile:
        return ContractAdapter._parse(ProcessFile, text, "process file")

    @staticmethod
    def parse_game_text(text: str) -> GameFile:
        return ContractAdapter._parse(GameFile, text, "game file")

    @staticmethod
    def parse_table_text(text: str) -> TableFile:
        return ContractAdapter._parse(TableFile, text, "table file")

    @staticmethod
    def _parse(model, text: str, what: str):
        """
        Converte o texto JSON no DTO, transformando erros de sintaxe e de schema
        em ValueError com a localização do problema (caminho do campo).
        """
        try:
            return model.model_validate_json(text)
        except ValidationError as exc:
            err = exc.errors()[0]
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            raise ValueError(f"{what}: {loc}: {err['msg']}") from None

    # ------------------------------------------------------------------
    # processes
    # ------------------------------------------------------------------
    @staticmethod
    def adapt_dims(dims: Mapping[str, int]) -> PartyStructure:
        for label in CORE_LABELS:
            if label not in dims:
                raise ValueError(f"dims.{label} is required")
        for label, dim in dims.items():
            if label not in CORE_LABELS and label not in ANCILLA_LABELS:
                raise ValueError(f"dims.{label} is not a known subsystem")
            if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
                raise ValueError(f"dims.{label} must be a positive integer")
        return PartyStructure.from_subsystems([Subsystem(label, dim) for label, dim in dims.items()])

    @staticmethod
    def adapt_process(pf: ProcessFile, allow_invalid: bool = False) -> ProcessMatrix:
        """
        Converte o ProcessFile numa ProcessMatrix na ordem canónica
        (AI, AIp, AO, BI, BIp, BO). Valida a matriz, salvo com allow_invalid.
        """
        structure = ContractAdapter.adapt_dims(pf.dims)
        subsystems = structure.canonical
        if pf.format == "pauli":
            bad = [s.label for s in subsystems if s.dim != 2]
            if bad:
                raise ValueError(f"format 'pauli' needs qubit subsystems; dims {bad} are not 2")
            n = len(subsystems)
            terms: Dict[str, float] = {}
            for i, entry in enumerate(pf.pauli_coeffs or []):
                if len(entry.term) != n:
                    raise ValueError(
                        f"pauli_coeffs.{i}: pauli term {entry.term!r} has {len(entry.term)} letters, expected {n}")
                if any(c not in "IXYZ" for c in entry.term):
                    raise ValueError(f"pauli_coeffs.{i}: pauli term {entry.term!r} has letters outside IXYZ")
                terms[entry.term] = terms.get(entry.term, 0.0) + entry.coeff
            op = pauli_compose(terms, subsystems)
        else:
            side = structure.side
            entries = pf.dense or []
            if len(entries) != side * side:
                raise ValueError(f"dense has {len(entries)} entries, expected {side * side} (side {side})")
            arr = np.array(entries, dtype=float)
            matrix = (arr[:, 0] + 1j * arr[:, 1]).reshape(side, side)
            op = HermitianOp(matrix, subsystems)
        return ProcessMatrix(op, structure, check=not allow_invalid)

    @staticmethod
    def process_to_file(w: ProcessMatrix, fmt: Optional[str] = None) -> ProcessFile:
        structure = w.structure
        dims = {s.label: s.dim for s in structure.canonical}
        if fmt is None:
            fmt = "pauli" if structure.is_qubit_core and not structure.is_extended else "dense"
        if fmt == "pauli":
            terms = [PauliCoeff(term=p.letters, coeff=p.coefficient) for p in pauli_decompose(w.op)]
            return ProcessFile(dims=dims, format="pauli", pauli_coeffs=terms)
        flat = w.matrix.reshape(-1)
        return ProcessFile(dims=dims, format="dense",
                           dense=[(float(z.real), float(z.imag)) for z in flat])

    @staticmethod
    def terms_to_file(terms: Terms, structure: Optional[PartyStructure] = None) -> ProcessFile:
        """Pauli file straight from exact term coefficients (no matrix round trip)."""
        structure = structure or PartyStructure.qubits()
        dims = {s.label: s.dim for s in structure.canonical}
        coeffs = [PauliCoeff(term=k, coeff=v) for k, v in sorted(terms.items())]
        return ProcessFile(dims=dims, format="pauli", pauli_coeffs=coeffs)

    @staticmethod
    def op_to_terms(op: HermitianOp) -> List[PauliCoeff]:
        return [PauliCoeff(term=p.letters, coeff=p.coefficient) for p in pauli_decompose(op, cutoff=1e-14)]

    # ------------------------------------------------------------------
    # tables and games
    # ------------------------------------------------------------------
    @staticmethod
    def _dense_table(
        settings: Tuple[int, int],
        outcomes: Tuple[int, int],
        entries: Iterable[Tuple[int, int, int, int, float]],
        field: str,
    ) -> np.ndarray:
        nx, ny = settings
        na, nb = outcomes
        if min(nx, ny, na, nb) < 1:
            raise ValueError("settings and outcomes must be positive integers")
        arr = np.zeros((na, nb, nx, ny))
        for i, (a, b, x, y, value) in enumerate(entries):
            if not (0 <= a < na and 0 <= b < nb and 0 <= x < nx and 0 <= y < ny):
                raise ValueError(f"{field}.{i}: index ({a}, {b}, {x}, {y}) out of range")
            arr[a, b, x, y] += value
        return arr

    @staticmethod
    def adapt_table(tf: TableFile) -> ProbabilityTable:
        return ProbabilityTable(ContractAdapter._dense_table(tf.settings, tf.outcomes, tf.entries, "entries"))

    @staticmethod
    def adapt_game(gf: GameFile) -> GameFunctional:
        coeffs = ContractAdapter._dense_table(gf.settings, gf.outcomes, gf.coeffs, "coeffs")
        return GameFunctional(coeffs, bound=gf.bound, name=gf.name)

    @staticmethod
    def sparse_entries(arr: np.ndarray, cutoff: float = 0.0) -> List[Tuple[int, int, int, int, float]]:
        return [(*map(int, idx), float(arr[idx])) for idx in np.ndindex(*arr.shape) if abs(arr[idx]) > cutoff]

    @staticmethod
    def table_to_file(p: ProbabilityTable) -> TableFile:
        return TableFile(settings=p.settings, outcomes=p.outcomes,
                         entries=ContractAdapter.sparse_entries(p.entries))

    @staticmethod
    def game_to_file(game: GameFunctional) -> GameFile:
        return GameFile(settings=game.settings, outcomes=game.outcomes,
                        coeffs=ContractAdapter.sparse_entries(game.coeffs),
                        bound=game.bound, name=game.name)
