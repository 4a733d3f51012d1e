"""Small dense conic solver.

Programs are posed in equality standard form::

    primal:  min <c, x>   s.t.  A x = b,  x in K
    dual:    max <b, y>   s.t.  c - A^T y = z,  z in K*

K is a product of complex Hermitian PSD cones, nonnegative orthants and free
blocks (dual cone {0}).  Programs without PSD blocks go to HiGHS through
``scipy.optimize.linprog``; everything else runs through a primal-dual
interior-point method (Mehrotra predictor-corrector, HKM direction) that works
natively on Hermitian blocks.  Free variables are eliminated through the
nullspace of their dual equations and redundant equality rows are removed by
SVD before iterating; all reported quantities refer to the original program.
"""
from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field
from scipy.optimize import linprog

from .operators import HermitianOp
from .store_json import write_json_atomic

logger = logging.getLogger(__name__)

BlockKind = Literal["psd", "nonneg", "free"]
Status = Literal["optimal", "max_iterations", "unbounded_or_infeasible"]

SQRT2 = math.sqrt(2.0)
_RANK_RTOL = 1e-10
_DIVERGENCE = 1e14


class SolverError(RuntimeError):
    """A solve ended without a usable answer."""

    def __init__(self, message: str, solution: Optional["Solution"] = None) -> None:
        super().__init__(message)
        self.solution = solution


class SolverSettings(BaseModel):
    """Tolerances shared by every program the package builds."""

    tol: float = Field(default=1e-9, gt=0, description="Residual and relative-gap target.")
    max_iter: int = Field(default=200, ge=1, description="Interior-point iteration cap.")
    accept_tol: float = Field(
        default=1e-6, gt=0,
        description="Callers accept non-optimal solves whose residuals stay below this, with a warning.")


# ---------------------------------------------------------------------------
# Hermitian vectorization (isometric: <A, X> = Re tr[A X] = svec(A) . svec(X))
# ---------------------------------------------------------------------------

def svec(mats: np.ndarray) -> np.ndarray:
    mats = np.asarray(mats)
    n = mats.shape[-1]
    iu = np.triu_indices(n, 1)
    diag = np.real(np.diagonal(mats, axis1=-2, axis2=-1))
    off = mats[..., iu[0], iu[1]]
    return np.concatenate([diag, SQRT2 * np.real(off), SQRT2 * np.imag(off)], axis=-1)


def smat(vecs: np.ndarray, n: int) -> np.ndarray:
    vecs = np.asarray(vecs, dtype=float)
    k = n * (n - 1) // 2
    lead = vecs.shape[:-1]
    iu = np.triu_indices(n, 1)
    out = np.zeros(lead + (n, n), dtype=complex)
    idx = np.arange(n)
    out[..., idx, idx] = vecs[..., :n]
    off = (vecs[..., n:n + k] + 1j * vecs[..., n + k:]) / SQRT2
    out[..., iu[0], iu[1]] = off
    out[..., iu[1], iu[0]] = np.conj(off)
    return out


def hermitian_units(indices: Sequence[int], n: int) -> np.ndarray:
    """``smat`` of the svec unit vectors at ``indices``, built without the n²×n² identity."""
    idx = np.asarray(indices, dtype=np.int64)
    k = n * (n - 1) // 2
    iu = np.triu_indices(n, 1)
    rows = np.arange(idx.shape[0])
    out = np.zeros((idx.shape[0], n, n), dtype=complex)
    diag = idx < n
    out[rows[diag], idx[diag], idx[diag]] = 1.0
    real = (idx >= n) & (idx < n + k)
    j = idx[real] - n
    out[rows[real], iu[0][j], iu[1][j]] = 1.0 / SQRT2
    out[rows[real], iu[1][j], iu[0][j]] = 1.0 / SQRT2
    imag = idx >= n + k
    j = idx[imag] - n - k
    out[rows[imag], iu[0][j], iu[1][j]] = 1j / SQRT2
    out[rows[imag], iu[1][j], iu[0][j]] = -1j / SQRT2
    return out


def basis_rows(fn: Callable[[np.ndarray], np.ndarray], n: int, chunk: int = 256) -> np.ndarray:
    """Stack ``fn`` over the n² Hermitian unit matrices, ``chunk`` at a time.

    ``fn`` maps a batch ``(m, n, n)`` to ``(m, ...)``.  With ``fn`` the adjoint of a
    linear map this gives the constraint rows of ``map(X) = rhs`` in svec coordinates.
    """
    total = n * n
    parts = [fn(hermitian_units(np.arange(start, min(start + chunk, total)), n))
             for start in range(0, total, chunk)]
    return np.concatenate(parts)


def _herm(m: np.ndarray) -> np.ndarray:
    return (m + np.conj(np.swapaxes(m, -1, -2))) / 2


# ---------------------------------------------------------------------------
# Programs and solutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    name: str
    kind: BlockKind
    size: int

    @property
    def dim(self) -> int:
        """Real dimension of the block."""
        return self.size ** 2 if self.kind == "psd" else self.size


class ConeProgram:
    """Linear objective and equality constraints over named PSD / nonnegative / free blocks."""

    def __init__(self) -> None:
        self.blocks: List[Block] = []
        self._objective: Dict[str, np.ndarray] = {}
        self._batches: List[Tuple[Dict[str, np.ndarray], np.ndarray]] = []
        self._rhs_override: Optional[np.ndarray] = None
        self._shared: Dict[str, Any] = {}

    # -- building -----------------------------------------------------------
    def _add_block(self, name: str, kind: BlockKind, size: int) -> str:
        if size < 1:
            raise ValueError(f"block {name!r} needs size >= 1")
        if any(b.name == name for b in self.blocks):
            raise ValueError(f"duplicate block name {name!r}")
        self.blocks.append(Block(name, kind, int(size)))
        self._shared = {}
        return name

    def add_psd(self, name: str, size: int) -> str:
        return self._add_block(name, "psd", size)

    def add_nonneg(self, name: str, size: int) -> str:
        return self._add_block(name, "nonneg", size)

    def add_free(self, name: str, size: int) -> str:
        return self._add_block(name, "free", size)

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise ValueError(f"unknown block {name!r}")

    def _checked(self, name: str, arr: Any, lead: Tuple[int, ...]) -> np.ndarray:
        blk = self.block(name)
        shape = lead + ((blk.size, blk.size) if blk.kind == "psd" else (blk.size,))
        arr = np.asarray(arr, dtype=complex if blk.kind == "psd" else float)
        if arr.shape != shape:
            raise ValueError(f"coefficients for block {name!r} have shape {arr.shape}, expected {shape}")
        return arr

    def set_objective(self, coeffs: Mapping[str, Any]) -> None:
        self._objective = {name: self._checked(name, arr, ()) for name, arr in coeffs.items()}
        self._shared = {}

    def add_constraints(self, coeffs: Mapping[str, Any], rhs: Any) -> None:
        """Add ``len(rhs)`` equality rows; each coefficient array has a leading row axis."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        m = rhs.shape[0]
        batch = {name: self._checked(name, arr, (m,)) for name, arr in coeffs.items()}
        self._batches.append((batch, rhs))
        self._rhs_override = None
        self._shared = {}

    def add_constraint(self, coeffs: Mapping[str, Any], rhs: float) -> None:
        self.add_constraints({k: np.asarray(v)[None] for k, v in coeffs.items()}, [rhs])

    def with_rhs(self, rhs: Any) -> "ConeProgram":
        """Copy with a new right-hand side, sharing the assembled constraint data."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.n_constraints,):
            raise ValueError(f"rhs has shape {rhs.shape}, expected ({self.n_constraints},)")
        new = copy.copy(self)
        new._rhs_override = rhs.copy()
        return new

    # -- assembled views ----------------------------------------------------------
    @property
    def n_constraints(self) -> int:
        return sum(rhs.shape[0] for _, rhs in self._batches)

    def offsets(self) -> Dict[str, slice]:
        out, pos = {}, 0
        for b in self.blocks:
            out[b.name] = slice(pos, pos + b.dim)
            pos += b.dim
        return out

    def rhs(self) -> np.ndarray:
        if self._rhs_override is not None:
            return self._rhs_override
        if not self._batches:
            return np.zeros(0)
        return np.concatenate([rhs for _, rhs in self._batches])

    def _vectorize(self, name: str, arr: np.ndarray) -> np.ndarray:
        if self.block(name).kind == "psd":
            return svec(_herm(arr))
        return np.real(arr)

    def assemble(self) -> Tuple[np.ndarray, np.ndarray]:
        """Real constraint matrix A (rows x vectorized columns) and objective vector c."""
        if "assembled" not in self._shared:
            offs = self.offsets()
            n_cols = sum(b.dim for b in self.blocks)
            a = np.zeros((self.n_constraints, n_cols))
            row = 0
            for batch, rhs in self._batches:
                for name, arr in batch.items():
                    a[row:row + rhs.shape[0], offs[name]] = self._vectorize(name, arr)
                row += rhs.shape[0]
            c = np.zeros(n_cols)
            for name, arr in self._objective.items():
                c[offs[name]] = self._vectorize(name, arr)
            self._shared["assembled"] = (a, c)
        return self._shared["assembled"]

    def to_dict(self) -> Dict[str, Any]:
        def encode(arr: np.ndarray) -> Any:
            arr = np.asarray(arr)
            if np.iscomplexobj(arr):
                return {"re": np.real(arr).tolist(), "im": np.imag(arr).tolist()}
            return arr.tolist()

        return {
            "form": "min <c,x> s.t. A x = b, x in K; <C,X> = Re tr[C X] on psd blocks",
            "blocks": [{"name": b.name, "kind": b.kind, "size": b.size} for b in self.blocks],
            "objective": {name: encode(arr) for name, arr in self._objective.items()},
            "constraints": [
                {"coeffs": {name: encode(arr) for name, arr in batch.items()}, "rhs": rhs.tolist()}
                for batch, rhs in self._batches
            ],
            "rhs": self.rhs().tolist(),
        }


def dump_program(program: ConeProgram, path: str) -> None:
    """Write the program as JSON for cross-checking against external solvers."""
    write_json_atomic(path, program.to_dict())


@dataclass(eq=False)
class Solution:
    status: Status
    primal: Dict[str, np.ndarray]
    dual: np.ndarray
    slack: Dict[str, np.ndarray]
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    solve_time: float = 0.0
    history: List[Dict[str, float]] = field(default_factory=list)

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def max_residual(self) -> float:
        return max(self.primal_residual, self.dual_residual, abs(self.gap))

    def summary(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "primal_objective": self.primal_objective,
            "dual_objective": self.dual_objective,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "gap": self.gap,
            "iterations": self.iterations,
            "solve_time": self.solve_time,
        }

    def ensure_usable(self, accept_tol: float = 1e-6, context: str = "solve") -> "Solution":
        """Return self if optimal or nearly so; otherwise raise ``SolverError`` with diagnostics."""
        if self.status == "optimal":
            return self
        if self.status == "max_iterations" and self.max_residual <= accept_tol:
            logger.warning("%s stopped at %s with residuals %.2e (accepted)",
                           context, self.status, self.max_residual)
            return self
        raise SolverError(
            f"{context} did not converge: status={self.status} "
            f"primal_residual={self.primal_residual:.3e} dual_residual={self.dual_residual:.3e} "
            f"gap={self.gap:.3e}", self)


def project_psd(m: HermitianOp) -> HermitianOp:
    """Nearest PSD operator in Frobenius norm."""
    vals, vecs = np.linalg.eigh(m.matrix)
    clipped = (vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T
    return HermitianOp(clipped, m.subsystems)


# ---------------------------------------------------------------------------
# Shared bookkeeping
# ---------------------------------------------------------------------------

def _metrics(a: np.ndarray, b: np.ndarray, c: np.ndarray,
             x: np.ndarray, y: np.ndarray, z: np.ndarray) -> Dict[str, float]:
    pobj = float(c @ x)
    dobj = float(b @ y)
    pres = float(np.linalg.norm(a @ x - b)) / (1.0 + float(np.linalg.norm(b)))
    dres = float(np.linalg.norm(c - a.T @ y - z)) / (1.0 + float(np.linalg.norm(c)))
    gap = (pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    return {"pobj": pobj, "dobj": dobj, "pres": pres, "dres": dres, "gap": gap}


def _unpack(program: ConeProgram, vec: np.ndarray) -> Dict[str, np.ndarray]:
    out = {}
    for name, sl in program.offsets().items():
        blk = program.block(name)
        out[name] = smat(vec[sl], blk.size) if blk.kind == "psd" else vec[sl].copy()
    return out


def _make_solution(program, status, x, y, z, m, iterations, history) -> Solution:
    return Solution(
        status=status,
        primal=_unpack(program, x),
        dual=y,
        slack=_unpack(program, z),
        primal_objective=m["pobj"],
        dual_objective=m["dobj"],
        primal_residual=m["pres"],
        dual_residual=m["dres"],
        gap=m["gap"],
        iterations=iterations,
        history=history,
    )


# ---------------------------------------------------------------------------
# LP route
# ---------------------------------------------------------------------------

_LP_STATUS: Dict[int, Status] = {
    0: "optimal",
    1: "max_iterations",
    2: "unbounded_or_infeasible",
    3: "unbounded_or_infeasible",
    4: "max_iterations",
}


def _solve_lp(program: ConeProgram, a, b, c, tol: float) -> Solution:
    bounds: List[Tuple[Optional[float], Optional[float]]] = []
    for blk in program.blocks:
        bounds += [(0.0, None) if blk.kind == "nonneg" else (None, None)] * blk.size
    m = a.shape[0]
    feas_tol = max(min(tol, 1e-7), 1e-10)
    res = linprog(
        c,
        A_eq=a if m else None,
        b_eq=b if m else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": feas_tol, "dual_feasibility_tolerance": feas_tol},
    )
    status = _LP_STATUS.get(res.status, "max_iterations")
    x = np.asarray(res.x, dtype=float) if res.x is not None else np.zeros(c.shape[0])
    if m and res.status == 0:
        y = np.asarray(res.eqlin.marginals, dtype=float)
    else:
        y = np.zeros(m)
    z = c - a.T @ y
    offs = program.offsets()
    for blk in program.blocks:
        if blk.kind == "free":
            z[offs[blk.name]] = 0.0
    metrics = _metrics(a, b, c, x, y, z)
    logger.debug("highs: status=%s (%s) obj=%.12g", res.status, res.message, metrics["pobj"])
    return _make_solution(program, status, x, y, z, metrics, int(getattr(res, "nit", 0) or 0), [])


# ---------------------------------------------------------------------------
# SDP route
# ---------------------------------------------------------------------------

@dataclass
class _Reduction:
    kcols: np.ndarray
    fcols: np.ndarray
    psd: List[Tuple[int, slice]]
    lp: slice
    u1: np.ndarray
    y0: np.ndarray
    free_defect: float
    f_pinv: np.ndarray
    u2: np.ndarray
    s2: np.ndarray
    a_r: np.ndarray
    c_t: np.ndarray


def _reduce(program: ConeProgram, a: np.ndarray, c: np.ndarray) -> _Reduction:
    offs = program.offsets()
    psd_cols, lp_cols, free_cols = [], [], []
    psd: List[Tuple[int, slice]] = []
    pos = 0
    for blk in program.blocks:
        idx = np.arange(offs[blk.name].start, offs[blk.name].stop)
        if blk.kind == "psd":
            psd_cols.append(idx)
            psd.append((blk.size, slice(pos, pos + blk.dim)))
            pos += blk.dim
        elif blk.kind == "nonneg":
            lp_cols.append(idx)
        else:
            free_cols.append(idx)
    n_lp = sum(len(i) for i in lp_cols)
    kcols = np.concatenate(psd_cols + lp_cols)
    fcols = np.concatenate(free_cols) if free_cols else np.zeros(0, dtype=int)
    a_k, c_k = a[:, kcols], c[kcols]
    m = a.shape[0]

    # 1) eliminate free columns: y = y0 + (component orthogonal to range(A_F))
    if fcols.size and m:
        a_f, c_f = a[:, fcols], c[fcols]
        u, s, vt = np.linalg.svd(a_f, full_matrices=False)
        rank = int(np.sum(s > _RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
        u1, s1, v1t = u[:, :rank], s[:rank], vt[:rank]
        y0 = u1 @ ((v1t @ c_f) / s1)
        free_defect = float(np.linalg.norm(a_f.T @ y0 - c_f)) / (1.0 + float(np.linalg.norm(c_f)))
        f_pinv = v1t.T @ (u1.T / s1[:, None])
    else:
        u1 = np.zeros((m, 0))
        y0 = np.zeros(m)
        free_defect = 0.0 if not fcols.size else float(np.linalg.norm(c[fcols]))
        f_pinv = np.zeros((fcols.size, m))
    a_perp = a_k - u1 @ (u1.T @ a_k)
    c_t = c_k - a_k.T @ y0

    # 2) drop redundant rows; keep an orthonormal row basis
    if a_perp.size:
        u2, s2, v2t = np.linalg.svd(a_perp, full_matrices=False)
        r = int(np.sum(s2 > _RANK_RTOL * s2[0])) if s2.size and s2[0] > 0 else 0
    else:
        u2, s2, v2t, r = np.zeros((m, 0)), np.zeros(0), np.zeros((0, kcols.size)), 0
    n_psd = sum(n * n for n, _ in psd)
    logger.debug("reduced program: %d rows -> %d, %d free columns eliminated", m, r, fcols.size)
    return _Reduction(
        kcols=kcols, fcols=fcols, psd=psd, lp=slice(n_psd, n_psd + n_lp),
        u1=u1, y0=y0, free_defect=free_defect, f_pinv=f_pinv,
        u2=u2[:, :r], s2=s2[:r], a_r=v2t[:r], c_t=c_t,
    )


def _max_step_psd(x: np.ndarray, dx: np.ndarray) -> float:
    try:
        lower = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return 0.0
    linv = scipy.linalg.solve_triangular(lower, np.eye(x.shape[0]), lower=True)
    lam = float(np.linalg.eigvalsh(_herm(linv @ dx @ linv.conj().T))[0])
    return math.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-x[neg] / dx[neg]))


def _inv_pd(z: np.ndarray) -> np.ndarray:
    lower = np.linalg.cholesky(z)
    linv = scipy.linalg.solve_triangular(lower, np.eye(z.shape[0]), lower=True)
    return linv.conj().T @ linv


class _InteriorPoint:
    """HKM predictor-corrector iterations on the reduced program."""

    def __init__(self, red: _Reduction, b_r: np.ndarray) -> None:
        self.r = red.a_r.shape[0]
        self.b = b_r
        self.blocks = []
        for n, sl in red.psd:
            a_sv = red.a_r[:, sl]
            self.blocks.append((n, a_sv, smat(a_sv, n), smat(red.c_t[sl], n)))
        self.a_lp = red.a_r[:, red.lp]
        self.c_lp = red.c_t[red.lp]
        self.nu = sum(n for n, *_ in self.blocks) + self.c_lp.size

    # linear maps
    def a_op(self, xs: List[np.ndarray], xl: np.ndarray) -> np.ndarray:
        out = self.a_lp @ xl
        for (n, a_sv, _, _), x in zip(self.blocks, xs):
            out = out + a_sv @ svec(_herm(x))
        return out

    def at_op(self, y: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        return [np.tensordot(y, amat, axes=1) for _, _, amat, _ in self.blocks], self.a_lp.T @ y

    def start(self) -> Tuple[List[np.ndarray], np.ndarray, np.ndarray, List[np.ndarray], np.ndarray]:
        bmax = 1.0 + (float(np.max(np.abs(self.b))) if self.b.size else 0.0)
        xs, zs = [], []
        for n, a_sv, _, cmat in self.blocks:
            row_norms = np.linalg.norm(a_sv, axis=1) if self.r else np.zeros(0)
            ratio = float(np.max((1.0 + np.abs(self.b)) / (1.0 + row_norms))) if self.r else 1.0
            xi = max(10.0, math.sqrt(n), math.sqrt(n) * ratio)
            eta = max(10.0, math.sqrt(n), float(np.linalg.norm(cmat)),
                      float(np.max(row_norms)) if self.r else 0.0)
            xs.append(xi * np.eye(n, dtype=complex))
            zs.append(eta * np.eye(n, dtype=complex))
        nl = self.c_lp.size
        xl = max(10.0, bmax) * np.ones(nl)
        zl = max(10.0, 1.0 + (float(np.max(np.abs(self.c_lp))) if nl else 0.0)) * np.ones(nl)
        return xs, xl, np.zeros(self.r), zs, zl

    def run(self, tol: float, max_iter: int, metrics_fn: Callable) -> Tuple[Status, tuple, Dict, int, List]:
        xs, xl, y, zs, zl = self.start()
        history: List[Dict[str, float]] = []
        best: Optional[Tuple[float, tuple, Dict, int]] = None
        status: Status = "max_iterations"
        it = 0
        for it in range(max_iter + 1):
            m = metrics_fn(xs, xl, y, zs, zl)
            mu = (sum(float(np.real(np.vdot(x, z))) for x, z in zip(xs, zs)) + float(xl @ zl)) / self.nu
            m = dict(m, mu=mu, iteration=it)
            history.append(m)
            score = max(m["pres"], m["dres"], abs(m["gap"]))
            if best is None or score < best[0]:
                best = (score, (xs, xl, y, zs, zl), m, it)
            if score <= tol:
                status = "optimal"
                break
            if it == max_iter:
                break
            size = max([float(np.linalg.norm(x)) for x in xs + zs] + [float(np.linalg.norm(xl)), float(np.linalg.norm(zl))])
            if not math.isfinite(size) or size > _DIVERGENCE:
                status = "unbounded_or_infeasible"
                break
            try:
                step = self._step(xs, xl, y, zs, zl, mu)
            except np.linalg.LinAlgError as exc:
                logger.debug("interior point stopped at iteration %d: %s", it, exc)
                break
            if step is None:
                logger.debug("interior point stalled at iteration %d", it)
                break
            xs, xl, y, zs, zl = step
        if status != "optimal" and best is not None and status != "unbounded_or_infeasible":
            _, point, m, it = best
            return status, point, m, it, history
        return status, (xs, xl, y, zs, zl), m, it, history

    def _step(self, xs, xl, y, zs, zl, mu):
        rp = self.b - self.a_op(xs, xl)
        aty, aty_l = self.at_op(y)
        rd = [cmat - z - at for (_, _, _, cmat), z, at in zip(self.blocks, zs, aty)]
        rd_l = self.c_lp - zl - aty_l
        zinv = [_inv_pd(z) for z in zs]

        schur = np.zeros((self.r, self.r))
        for (n, _, amat, _), x, zi in zip(self.blocks, xs, zinv):
            t = x[None] @ amat @ zi[None]
            schur += np.real(amat.reshape(self.r, -1) @ np.swapaxes(t, 1, 2).reshape(self.r, -1).T)
        if self.c_lp.size:
            schur += (self.a_lp * (xl / zl)) @ self.a_lp.T
        schur = (schur + schur.T) / 2
        solve_m = self._factor(schur)

        def direction(sigma: float, corr=None):
            rc = [sigma * mu * zi - x for x, zi in zip(xs, zinv)]
            rc_l = sigma * mu / zl - xl
            if corr is not None:
                dxa, dxla, dza, dzla = corr
                rc = [r - _herm(dx @ dz @ zi) for r, dx, dz, zi in zip(rc, dxa, dza, zinv)]
                rc_l = rc_l - dxla * dzla / zl
            h = rp - self.a_op(rc, rc_l) + self.a_op(
                [_herm(x @ r @ zi) for x, r, zi in zip(xs, rd, zinv)], xl * rd_l / zl)
            dy = solve_m(h)
            atdy, atdy_l = self.at_op(dy)
            dzs = [r - at for r, at in zip(rd, atdy)]
            dzl = rd_l - atdy_l
            dxs = [r - _herm(x @ dz @ zi) for r, x, dz, zi in zip(rc, xs, dzs, zinv)]
            dxl = rc_l - xl * dzl / zl
            return dxs, dxl, dy, dzs, dzl

        def max_steps(dxs, dxl, dzs, dzl):
            ap = min([_max_step_psd(x, d) for x, d in zip(xs, dxs)] + [_max_step_lp(xl, dxl)])
            ad = min([_max_step_psd(z, d) for z, d in zip(zs, dzs)] + [_max_step_lp(zl, dzl)])
            return ap, ad

        # predictor
        dxs, dxl, dy, dzs, dzl = direction(0.0)
        ap, ad = max_steps(dxs, dxl, dzs, dzl)
        ap1, ad1 = min(1.0, ap), min(1.0, ad)
        mu_aff = (sum(float(np.real(np.vdot(x + ap1 * dx, z + ad1 * dz)))
                      for x, dx, z, dz in zip(xs, dxs, zs, dzs))
                  + float((xl + ap1 * dxl) @ (zl + ad1 * dzl))) / self.nu
        expon = max(1.0, 3.0 * min(ap1, ad1) ** 2)
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** expon if mu > 0 else 0.0

        # corrector
        dxs, dxl, dy, dzs, dzl = direction(sigma, (dxs, dxl, dzs, dzl))
        ap, ad = max_steps(dxs, dxl, dzs, dzl)
        gamma = 0.9 + 0.09 * min(ap1, ad1)
        ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)
        if max(ap, ad) < 1e-12:
            return None
        xs = [_herm(x + ap * d) for x, d in zip(xs, dxs)]
        xl = xl + ap * dxl
        y = y + ad * dy
        zs = [_herm(z + ad * d) for z, d in zip(zs, dzs)]
        zl = zl + ad * dzl
        return xs, xl, y, zs, zl

    def _factor(self, schur: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        if self.r == 0:
            return lambda h: np.zeros(0)
        try:
            cho = scipy.linalg.cho_factor(schur)
            return lambda h: scipy.linalg.cho_solve(cho, h)
        except np.linalg.LinAlgError:
            pass
        reg = 1e-13 * max(1.0, float(np.max(np.abs(np.diag(schur)))))
        try:
            cho = scipy.linalg.cho_factor(schur + reg * np.eye(self.r))
            return lambda h: scipy.linalg.cho_solve(cho, h)
        except np.linalg.LinAlgError:
            lu = scipy.linalg.lu_factor(schur)
            return lambda h: scipy.linalg.lu_solve(lu, h)


def _solve_sdp(program: ConeProgram, a, b, c, tol: float, max_iter: int) -> Solution:
    if "reduction" not in program._shared:
        program._shared["reduction"] = _reduce(program, a, c)
    red: _Reduction = program._shared["reduction"]
    a_k = a[:, red.kcols]
    n_cols = a.shape[1]

    def recover(xs, xl, y_r, zs, zl):
        x_k = np.concatenate([svec(x) for x in xs] + [xl])
        x = np.zeros(n_cols)
        x[red.kcols] = x_k
        if red.fcols.size:
            x[red.fcols] = red.f_pinv @ (b - a_k @ x_k)
        y = red.y0 + red.u2 @ (y_r / red.s2) if red.s2.size else red.y0.copy()
        z = np.zeros(n_cols)
        z[red.kcols] = np.concatenate([svec(z_) for z_ in zs] + [zl])
        return x, y, z

    b_perp = b - red.u1 @ (red.u1.T @ b)
    proj = red.u2.T @ b_perp
    b_r = proj / red.s2 if red.s2.size else np.zeros(0)
    inconsistency = float(np.linalg.norm(b_perp - red.u2 @ proj)) / (1.0 + float(np.linalg.norm(b)))
    infeasible_tol = max(100.0 * tol, 1e-8)
    if inconsistency > infeasible_tol or red.free_defect > infeasible_tol:
        logger.debug("equality system inconsistent (primal %.2e, dual %.2e)", inconsistency, red.free_defect)
        x = np.zeros(n_cols)
        y = np.zeros(a.shape[0])
        return _make_solution(program, "unbounded_or_infeasible", x, y, np.zeros(n_cols),
                              _metrics(a, b, c, x, y, np.zeros(n_cols)), 0, [])

    def metrics_fn(xs, xl, y_r, zs, zl):
        return _metrics(a, b, c, *recover(xs, xl, y_r, zs, zl))

    ipm = _InteriorPoint(red, b_r)
    status, point, m, iterations, history = ipm.run(tol, max_iter, metrics_fn)
    x, y, z = recover(*point)
    logger.debug("interior point: status=%s iterations=%d pobj=%.12g gap=%.2e",
                 status, iterations, m["pobj"], m["gap"])
    return _make_solution(program, status, x, y, z, m, iterations, history)


def solve(
    program: ConeProgram,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    settings: Optional[SolverSettings] = None,
) -> Solution:
    settings = settings or SolverSettings()
    tol = settings.tol if tol is None else float(tol)
    max_iter = settings.max_iter if max_iter is None else int(max_iter)
    if tol <= 0:
        raise ValueError("tol must be positive")
    started = time.perf_counter()
    a, c = program.assemble()
    b = program.rhs()
    if any(blk.kind == "psd" for blk in program.blocks):
        solution = _solve_sdp(program, a, b, c, tol, max_iter)
    else:
        solution = _solve_lp(program, a, b, c, tol)
    solution.solve_time = time.perf_counter() - started
    return solution
