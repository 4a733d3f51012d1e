import json

import numpy as np
import pytest

from procmat.builder import make_named
from procmat.causality import InvalidTableError, ProbabilityTable
from procmat.contract_adapter import ContractAdapter
from procmat.instruments import gyni_game
from procmat.process_space import InvalidProcessError

QUBIT_DIMS = {"AI": 2, "AO": 2, "BI": 2, "BO": 2}


def process_json(**fields):
    body = {"dims": QUBIT_DIMS, "format": "pauli", "pauli_coeffs": [{"term": "IIII", "coeff": 0.25}]}
    body.update(fields)
    return json.dumps(body)


def test_white_noise_file_round_trip():
    w = ContractAdapter.adapt_process(ContractAdapter.parse_process_text(process_json()))
    assert w.is_valid
    assert w.structure.labels == ("AI", "AO", "BI", "BO")


def test_named_process_survives_pauli_file():
    w = make_named("wopt")
    back = ContractAdapter.adapt_process(ContractAdapter.process_to_file(w))
    assert back.op.allclose(w.op, atol=1e-12)


def test_dense_format_round_trip():
    w = make_named("wocb")
    pf = ContractAdapter.process_to_file(w, fmt="dense")
    assert pf.format == "dense"
    assert len(pf.dense) == 256
    assert ContractAdapter.adapt_process(pf).op.allclose(w.op, atol=1e-12)


def test_extended_process_defaults_to_dense(builder):
    pf = ContractAdapter.process_to_file(builder.build_extended())
    assert pf.format == "dense"
    assert pf.dims == {"AI": 2, "AIp": 4, "AO": 2, "BI": 2, "BIp": 4, "BO": 2}


def test_invalid_json_is_a_value_error():
    with pytest.raises(ValueError, match="process file"):
        ContractAdapter.parse_process_text("{not json")


def test_missing_payload_is_reported():
    with pytest.raises(ValueError, match="pauli_coeffs"):
        ContractAdapter.parse_process_text(json.dumps({"dims": QUBIT_DIMS, "format": "pauli"}))


def test_missing_dim_is_reported():
    pf = ContractAdapter.parse_process_text(process_json(dims={"AI": 2, "AO": 2, "BI": 2}))
    with pytest.raises(ValueError, match="dims.BO is required"):
        ContractAdapter.adapt_process(pf)


def test_unknown_subsystem_is_reported():
    pf = ContractAdapter.parse_process_text(process_json(dims={**QUBIT_DIMS, "CI": 2}))
    with pytest.raises(ValueError, match="dims.CI"):
        ContractAdapter.adapt_process(pf)


def test_wrong_term_length_names_the_entry():
    pf = ContractAdapter.parse_process_text(process_json(
        pauli_coeffs=[{"term": "IIII", "coeff": 0.25}, {"term": "IZX", "coeff": 0.1}]))
    with pytest.raises(ValueError, match=r"pauli_coeffs\.1: pauli term 'IZX' has 3 letters, expected 4"):
        ContractAdapter.adapt_process(pf)


def test_dense_size_is_checked():
    pf = ContractAdapter.parse_process_text(json.dumps(
        {"dims": QUBIT_DIMS, "format": "dense", "dense": [[1.0, 0.0]] * 4}))
    with pytest.raises(ValueError, match="expected 256"):
        ContractAdapter.adapt_process(pf)


def test_invalid_process_is_rejected_unless_allowed():
    text = process_json(pauli_coeffs=[{"term": "IIII", "coeff": 0.25}, {"term": "IZII", "coeff": 0.1}])
    pf = ContractAdapter.parse_process_text(text)
    with pytest.raises(InvalidProcessError, match="forbidden"):
        ContractAdapter.adapt_process(pf)
    w = ContractAdapter.adapt_process(pf, allow_invalid=True)
    assert not w.in_valid_subspace


def test_repeated_terms_are_summed():
    pf = ContractAdapter.parse_process_text(process_json(
        pauli_coeffs=[{"term": "IIII", "coeff": 0.125}, {"term": "IIII", "coeff": 0.125}]))
    assert ContractAdapter.adapt_process(pf).is_valid


def test_table_file_is_densified():
    text = json.dumps({"settings": [2, 2], "outcomes": [2, 2],
                       "entries": [[0, 0, x, y, 1.0] for x in range(2) for y in range(2)]})
    table = ContractAdapter.adapt_table(ContractAdapter.parse_table_text(text))
    assert table.entries[0, 0].tolist() == [[1.0, 1.0], [1.0, 1.0]]
    assert table.entries[1].sum() == 0.0


def test_table_index_out_of_range():
    text = json.dumps({"settings": [2, 2], "outcomes": [2, 2], "entries": [[2, 0, 0, 0, 1.0]]})
    with pytest.raises(ValueError, match=r"entries\.0"):
        ContractAdapter.adapt_table(ContractAdapter.parse_table_text(text))


def test_table_normalization_is_checked():
    text = json.dumps({"settings": [2, 2], "outcomes": [2, 2], "entries": [[0, 0, 0, 0, 1.0]]})
    with pytest.raises(InvalidTableError):
        ContractAdapter.adapt_table(ContractAdapter.parse_table_text(text))


def test_table_file_round_trip():
    table = ProbabilityTable.uniform()
    again = ContractAdapter.adapt_table(ContractAdapter.table_to_file(table))
    assert np.array_equal(again.entries, table.entries)


def test_game_file_round_trip_and_bound():
    gf = ContractAdapter.game_to_file(gyni_game())
    assert len(gf.coeffs) == 4
    game = ContractAdapter.adapt_game(gf)
    assert game.bound == pytest.approx(0.5)
    assert game.name == "gyni"


def test_game_bound_is_computed_when_missing():
    text = json.dumps({"settings": [2, 2], "outcomes": [2, 2],
                       "coeffs": [[y, x, x, y, 0.25] for x in range(2) for y in range(2)]})
    game = ContractAdapter.adapt_game(ContractAdapter.parse_game_text(text))
    assert game.bound == pytest.approx(0.5)
