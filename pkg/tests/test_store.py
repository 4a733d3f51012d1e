import json

from procmat.persistence_proxy import PersistenceProxy
from procmat.store_json import JsonFileDatabase, read_json, write_json_atomic


def test_database_is_created_with_empty_sections(tmp_path):
    path = tmp_path / "nested" / "store.json"
    db = JsonFileDatabase(str(path))
    assert path.exists()
    assert db.read_all() == {"runs": [], "checkpoints": {}}


def test_existing_document_is_kept(tmp_path):
    path = tmp_path / "store.json"
    path.write_text(json.dumps({"runs": [{"command": "region"}], "checkpoints": {}}), encoding="utf-8")
    db = JsonFileDatabase(str(path))
    assert db.read_all()["runs"] == [{"command": "region"}]


def test_atomic_write_leaves_no_temp_file(tmp_path):
    path = tmp_path / "doc.json"
    write_json_atomic(str(path), {"a": [1, 2]})
    assert read_json(str(path)) == {"a": [1, 2]}
    assert not (tmp_path / "doc.json.tmp").exists()


def test_proxy_appends_and_filters_runs(tmp_path):
    proxy = PersistenceProxy(JsonFileDatabase(str(tmp_path / "store.json")))
    proxy.append_run({"command": "region", "rows": 3})
    proxy.append_run({"command": "sample", "rows": 5})
    assert len(proxy.list_runs()) == 2
    assert proxy.list_runs("sample") == [{"command": "sample", "rows": 5}]
    assert proxy.list_runs("seesaw") == []


def test_proxy_writes_through(tmp_path):
    path = tmp_path / "store.json"
    proxy = PersistenceProxy(JsonFileDatabase(str(path)))
    proxy.save_checkpoint("chain-0", {"step_count": 10})
    on_disk = read_json(str(path))
    assert on_disk["checkpoints"]["chain-0"] == {"step_count": 10}
    fresh = PersistenceProxy(JsonFileDatabase(str(path)), ttl=0.0)
    assert fresh.get_checkpoint("chain-0") == {"step_count": 10}
    assert fresh.get_checkpoint("missing") is None
