import json

import numpy as np
import pytest

from procmat.conic_solver import (
    ConeProgram,
    SolverError,
    SolverSettings,
    basis_rows,
    dump_program,
    hermitian_units,
    project_psd,
    smat,
    solve,
    svec,
)
from procmat.operators import Subsystem, random_hermitian


def random_herm(rng, n):
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (g + g.conj().T) / 2


def test_svec_is_an_isometry(rng):
    a, b = random_herm(rng, 5), random_herm(rng, 5)
    assert svec(a) @ svec(b) == pytest.approx(np.real(np.trace(a @ b)), abs=1e-10)
    assert np.allclose(smat(svec(a), 5), a, atol=1e-12)


def test_svec_length_matches_real_dimension():
    assert svec(np.eye(4)).shape == (16,)


@pytest.mark.parametrize("n", [1, 3, 5])
def test_hermitian_units_match_smat(n):
    assert np.allclose(hermitian_units(np.arange(n * n), n), smat(np.eye(n * n), n))
    assert np.allclose(hermitian_units([n * n - 1], n)[0], smat(np.eye(n * n)[-1], n))


def test_basis_rows_are_chunk_independent(rng):
    a = random_herm(rng, 4)

    def inner(batch):
        return np.real(np.einsum("mij,ji->m", batch, a))

    rows = basis_rows(inner, 4, chunk=3)
    assert rows.shape == (16,)
    assert np.allclose(rows, basis_rows(inner, 4))
    assert np.allclose(rows, svec(a), atol=1e-12)


def test_lp_minimum_over_simplex():
    program = ConeProgram()
    program.add_nonneg("x", 3)
    program.set_objective({"x": [3.0, 1.0, 2.0]})
    program.add_constraint({"x": [1.0, 1.0, 1.0]}, 1.0)
    sol = solve(program)
    assert sol.is_optimal
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(sol.primal["x"], [0.0, 1.0, 0.0], atol=1e-9)


def test_infeasible_lp_is_reported():
    program = ConeProgram()
    program.add_nonneg("x", 2)
    program.set_objective({"x": [1.0, 1.0]})
    program.add_constraint({"x": [1.0, 1.0]}, -1.0)
    sol = solve(program)
    assert sol.status == "unbounded_or_infeasible"
    with pytest.raises(SolverError):
        sol.ensure_usable(context="test")


@pytest.mark.parametrize("n", [2, 4, 6])
def test_sdp_min_eigenvalue(rng, n):
    c = random_herm(rng, n)
    program = ConeProgram()
    program.add_psd("X", n)
    program.set_objective({"X": c})
    program.add_constraint({"X": np.eye(n)}, 1.0)
    sol = solve(program, tol=1e-9)
    assert sol.is_optimal
    assert sol.primal_objective == pytest.approx(np.linalg.eigvalsh(c)[0], abs=1e-7)
    assert sol.dual_objective == pytest.approx(sol.primal_objective, abs=1e-7)
    assert np.linalg.eigvalsh(sol.primal["X"])[0] > -1e-8


def test_sdp_with_free_variable(rng):
    # max mu s.t. I - mu*Q >= 0, i.e. mu = 1 / lambda_max(Q)
    q = random_herm(rng, 3)
    q = q - np.trace(q) / 3 * np.eye(3)
    basis = smat(np.eye(9), 3)
    program = ConeProgram()
    program.add_psd("Z", 3)
    program.add_free("mu", 1)
    program.set_objective({"mu": [-1.0]})
    program.add_constraints({"Z": basis, "mu": svec(q)[:, None]}, svec(np.eye(3)))
    sol = solve(program)
    assert sol.is_optimal
    assert sol.primal["mu"][0] == pytest.approx(1.0 / np.linalg.eigvalsh(q)[-1], abs=1e-6)


def test_with_rhs_shares_constraint_data():
    program = ConeProgram()
    program.add_psd("X", 2)
    program.set_objective({"X": np.diag([1.0, 2.0])})
    program.add_constraint({"X": np.eye(2)}, 1.0)
    a1, _ = program.assemble()
    scaled = program.with_rhs([3.0])
    a2, _ = scaled.assemble()
    assert a1 is a2
    assert solve(scaled).primal_objective == pytest.approx(3.0, abs=1e-7)
    with pytest.raises(ValueError):
        program.with_rhs([1.0, 2.0])


def test_inconsistent_equalities_are_infeasible():
    program = ConeProgram()
    program.add_psd("X", 2)
    program.set_objective({"X": np.eye(2)})
    program.add_constraint({"X": np.eye(2)}, 1.0)
    program.add_constraint({"X": np.eye(2)}, 2.0)
    assert solve(program).status == "unbounded_or_infeasible"


def test_coefficient_shape_is_checked():
    program = ConeProgram()
    program.add_psd("X", 2)
    with pytest.raises(ValueError):
        program.set_objective({"X": np.eye(3)})
    with pytest.raises(ValueError):
        program.set_objective({"Y": np.eye(2)})


def test_non_positive_tolerance_is_rejected():
    program = ConeProgram()
    program.add_nonneg("x", 1)
    with pytest.raises(ValueError):
        solve(program, tol=0.0)


def test_settings_validate_ranges():
    with pytest.raises(ValueError):
        SolverSettings(tol=-1.0)


def test_summary_fields():
    program = ConeProgram()
    program.add_nonneg("x", 1)
    program.set_objective({"x": [1.0]})
    program.add_constraint({"x": [1.0]}, 2.0)
    summary = solve(program).summary()
    assert summary["status"] == "optimal"
    assert summary["primal_objective"] == pytest.approx(2.0)
    assert set(summary) >= {"primal_residual", "dual_residual", "gap", "iterations", "solve_time"}


def test_dump_program_writes_json(tmp_path):
    program = ConeProgram()
    program.add_psd("X", 2)
    program.add_free("t", 1)
    program.set_objective({"t": [1.0]})
    program.add_constraint({"X": np.array([[1, 1j], [-1j, 1]]), "t": [1.0]}, 1.0)
    path = tmp_path / "prog.json"
    dump_program(program, str(path))
    data = json.loads(path.read_text(encoding="utf-8"))
    assert [b["name"] for b in data["blocks"]] == ["X", "t"]
    assert data["rhs"] == [1.0]
    assert data["constraints"][0]["coeffs"]["X"]["im"][0][0][1] == 1.0


def test_project_psd(rng):
    op = random_hermitian([Subsystem("a", 2), Subsystem("b", 2)], rng)
    clipped = project_psd(op)
    assert clipped.min_eigenvalue() > -1e-12
    assert np.allclose(project_psd(clipped).matrix, clipped.matrix, atol=1e-12)
