import json

import numpy as np
import pytest

from sparsebip.dataset import DataError, Dataset, load_dataset, read_raw_table, save_dataset
from sparsebip.model import InvalidInteraction

from conftest import make_interaction


def tiny_dataset():
    rng = np.random.default_rng(0)
    demos = [make_interaction(rng.standard_normal((6, 3))) for _ in range(3)]
    return Dataset(demos[0].layout, demos, meta={"seed": 1, "config_hash": "abc"})


def test_round_trip_is_bit_exact(tmp_path):
    ds = tiny_dataset()
    save_dataset(tmp_path / "d", ds)
    back = load_dataset(tmp_path / "d")
    assert back.layout == ds.layout
    assert back.meta == ds.meta
    for a, b in zip(ds.demos, back.demos):
        assert np.array_equal(a.samples, b.samples)


def test_tables_carry_provenance_comment(tmp_path):
    save_dataset(tmp_path / "d", tiny_dataset())
    first = (tmp_path / "d" / "demo_000.csv").read_text().splitlines()[0]
    assert first == "# seed=1 config_hash=abc"


def test_refuses_to_overwrite(tmp_path):
    (tmp_path / "d").mkdir()
    (tmp_path / "d" / "keep.txt").write_text("x")
    with pytest.raises(DataError, match="not an empty directory"):
        save_dataset(tmp_path / "d", tiny_dataset())
    assert (tmp_path / "d" / "keep.txt").read_text() == "x"


def test_missing_manifest(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_dataset(tmp_path)


def test_malformed_manifest_names_the_line(tmp_path):
    (tmp_path / "manifest.json").write_text('{\n "format": \n}')
    with pytest.raises(DataError, match=r"manifest.json:3"):
        load_dataset(tmp_path)


def test_wrong_format_tag(tmp_path):
    save_dataset(tmp_path / "d", tiny_dataset())
    m = tmp_path / "d" / "manifest.json"
    doc = json.loads(m.read_text())
    doc["format"] = "other/9"
    m.write_text(json.dumps(doc))
    with pytest.raises(DataError, match="unsupported format"):
        load_dataset(tmp_path / "d")


def test_ragged_row_is_reported_with_line_number(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1,2\n3\n")
    with pytest.raises(DataError, match=r"t.csv:3: expected 2 values"):
        read_raw_table(p)


def test_empty_cells_are_missing_values(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# note\na,b\n1,\n,4\n")
    names, X = read_raw_table(p)
    assert names == ["a", "b"]
    assert np.isnan(X[0, 1]) and np.isnan(X[1, 0])


def test_non_finite_demo_is_rejected_on_load(tmp_path):
    save_dataset(tmp_path / "d", tiny_dataset())
    p = tmp_path / "d" / "demo_001.csv"
    lines = p.read_text().splitlines()
    lines[3] = ",".join(["nan"] + lines[3].split(",")[1:])
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(InvalidInteraction, match="non-finite"):
        load_dataset(tmp_path / "d")


def test_header_must_match_manifest(tmp_path):
    save_dataset(tmp_path / "d", tiny_dataset())
    p = tmp_path / "d" / "demo_000.csv"
    p.write_text(p.read_text().replace("o0,o1,c0", "o1,o0,c0"))
    with pytest.raises(DataError, match="channel order"):
        load_dataset(tmp_path / "d")
