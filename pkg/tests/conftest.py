import numpy as np
import pytest

from procmat.builder import NamedProcessBuilder
from procmat.process_space import PartyStructure


@pytest.fixture
def qubits():
    return PartyStructure.qubits()


@pytest.fixture
def builder():
    return NamedProcessBuilder()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def store_path(tmp_path, monkeypatch):
    path = tmp_path / "data" / "store.json"
    monkeypatch.setenv("PROCMAT_DATA_PATH", str(path))
    return path
