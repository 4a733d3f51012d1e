from __future__ import annotations

import logging
import math
from typing import Dict, Optional

from scipy.optimize import brentq

from .operators import HermitianOp, max_entangled, pauli_compose
from .process_space import (
    FamilyParams,
    InvalidProcessError,
    PartyStructure,
    ProcessMatrix,
    eps_validity,
    extend_with_state,
)

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
Q_OPT = SQRT3 - 1.0
EPS_OPT = 4.0 / SQRT3 - 2.0

NAMED_PROCESSES = (
    "white-noise", "wab", "wba", "wqe", "d23", "iab", "wopt", "wocb", "wmix", "wwer",
)

Terms = Dict[str, float]


def _combine(*weighted: tuple) -> Terms:
    out: Terms = {}
    for weight, terms in weighted:
        for key, value in terms.items():
            out[key] = out.get(key, 0.0) + weight * value
    return {k: v for k, v in out.items() if v != 0.0}


WHITE_NOISE: Terms = {"IIII": 0.25}
W_AB: Terms = {"IIII": 0.25, "IZZI": 1 / 12, "IXXI": 1 / 12, "IYYI": 1 / 12}
W_BA: Terms = {"IIII": 0.25, "ZIXZ": 0.25}
D23: Terms = {"IIII": 0.25, "IZZI": 1 / 12, "IXXI": 1 / 12, "IYYI": -1 / 12}
I_AB: Terms = {"IIII": 0.25, "IZZI": 0.25, "IXXI": 0.25, "IYYI": -0.25}
W_OCB: Terms = {"IIII": 0.25, "IZZI": 1 / (4 * SQRT2), "ZIXZ": 1 / (4 * SQRT2)}


def family_terms(q: float, eps: float) -> Terms:
    """W(q, eps) = q·W^{A<B} + (1 − q + eps)·W^{B<A} − eps·1°."""
    return _combine((q, W_AB), (1.0 - q + eps, W_BA), (-eps, WHITE_NOISE))


def mix_terms(alpha: float) -> Terms:
    return _combine((alpha, family_terms(Q_OPT, EPS_OPT)), (1.0 - alpha, W_OCB))


def werner_terms(gamma: float, alpha: float) -> Terms:
    return _combine((1.0 - gamma, mix_terms(alpha)), (gamma, WHITE_NOISE))


class NamedProcessBuilder:
    """Builder (creational pattern) for the named qubit processes."""

    def __init__(self, structure: Optional[PartyStructure] = None) -> None:
        self.structure = structure or PartyStructure.qubits()

    def terms(self, name: str, params: Optional[FamilyParams] = None) -> Terms:
        params = params or FamilyParams()
        if name == "white-noise":
            return dict(WHITE_NOISE)
        if name == "wab":
            return dict(W_AB)
        if name == "wba":
            return dict(W_BA)
        if name == "wqe":
            bound = eps_validity(params.q)
            if params.eps > bound + 1e-12:
                raise InvalidProcessError(
                    f"W(q, eps) is not positive for eps={params.eps:.6g}: "
                    f"eps_validity(q={params.q:.6g}) = {bound:.6g}")
            return family_terms(params.q, params.eps)
        if name == "d23":
            return dict(D23)
        if name == "iab":
            return dict(I_AB)
        if name == "wopt":
            return family_terms(Q_OPT, EPS_OPT)
        if name == "wocb":
            return dict(W_OCB)
        if name == "wmix":
            return mix_terms(params.alpha)
        if name == "wwer":
            return werner_terms(params.gamma, params.alpha)
        raise InvalidProcessError(f"unknown process name {name!r}; expected one of {list(NAMED_PROCESSES)}")

    def build(self, name: str, params: Optional[FamilyParams] = None) -> ProcessMatrix:
        op = pauli_compose(self.terms(name, params), self.structure.canonical)
        return ProcessMatrix(op, self.structure)

    def build_extended(self, state: Optional[HermitianOp] = None, kappa: float = 0.0) -> ProcessMatrix:
        """(1 − κ)·(W_opt ⊗ state) + κ·1°, the state defaulting to a maximally entangled ququart pair."""
        state = state if state is not None else max_entangled(4, ("AIp", "BIp"))
        w_ext = extend_with_state(self.build("wopt"), state)
        if kappa:
            w_ext = w_ext.with_noise(kappa, check=True)
        return w_ext


def make_named(name: str, params: Optional[FamilyParams] = None) -> ProcessMatrix:
    return NamedProcessBuilder().build(name, params)


def eps_validity_spectral(q: float, xtol: float = 1e-14) -> float:
    """Largest eps keeping W(q, eps) positive, located as a root of its minimum eigenvalue."""
    structure = PartyStructure.qubits()

    def min_eig(eps: float) -> float:
        return pauli_compose(family_terms(q, eps), structure.canonical).min_eigenvalue()

    if min_eig(0.0) <= 0.0:
        return 0.0
    return brentq(min_eig, 0.0, 1.0, xtol=xtol)
