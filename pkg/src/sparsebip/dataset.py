"""On-disk datasets: a JSON manifest plus one CSV table per demonstration.

Tables have a header row of channel names in layout order and one row per
step.  Lines starting with ``#`` are comments (used for provenance).  Values
are written with 17 significant digits, so a round trip is bit-exact.
"""
from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import Interaction, SensorLayout, validate_interaction
from .sparsity import GroupMap

FORMAT = "sparsebip-dataset/1"


class DataError(ValueError):
    pass


def dumps_json(obj) -> str:
    """Canonical JSON used for every file we write (stable key order)."""
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def format_table(names: Sequence[str], data: np.ndarray, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines += [f"# {line}" for line in comment.splitlines()]
    lines.append(",".join(names))
    for row in np.atleast_2d(data):
        lines.append(",".join("" if not np.isfinite(v) else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_table(path, i: Interaction, comment: str | None = None) -> None:
    validate_interaction(i)
    Path(path).write_text(format_table(i.layout.names, i.samples, comment))


def read_raw_table(path) -> tuple[list[str], np.ndarray]:
    """Header names and values; empty cells become NaN."""
    names = None
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if names is None:
                names = [c.strip() for c in cells]
                continue
            if len(cells) != len(names):
                raise DataError(f"{path}:{lineno}: expected {len(names)} values, got {len(cells)}")
            try:
                rows.append([float(c) if c.strip() else np.nan for c in cells])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if names is None:
        raise DataError(f"{path}: missing header row")
    return names, np.array(rows, dtype=float).reshape(len(rows), len(names))


def read_table(path, layout: SensorLayout, timestep: float) -> Interaction:
    names, data = read_raw_table(path)
    if tuple(names) != layout.names:
        raise DataError(f"{path}: header does not match the manifest channel order")
    return validate_interaction(Interaction(layout, data, timestep, tuple(names)))


@dataclass
class Dataset:
    layout: SensorLayout
    demos: list
    groups: GroupMap | None = None
    meta: dict = field(default_factory=dict)
    ground_truth: dict | None = None


def save_dataset(out_dir, ds: Dataset) -> Path:
    """Write ``ds`` atomically: everything lands in a temp dir that is renamed at the end."""
    out = Path(out_dir)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise DataError(f"{out} exists and is not an empty directory")
    parent = out.parent if str(out.parent) else Path(".")
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=parent))
    try:
        files = []
        comment = "seed={seed} config_hash={config_hash}".format(
            seed=ds.meta.get("seed"), config_hash=ds.meta.get("config_hash"))
        for k, demo in enumerate(ds.demos):
            fname = f"demo_{k:03d}.csv"
            write_table(tmp / fname, demo, comment)
            files.append(fname)
        manifest = {"format": FORMAT, "layout": ds.layout.to_list(), "demos": files,
                    "timestep": ds.demos[0].timestep if ds.demos else None,
                    "groups": ds.groups.to_dict() if ds.groups else None, "meta": ds.meta}
        (tmp / "manifest.json").write_text(dumps_json(manifest))
        if ds.ground_truth is not None:
            (tmp / "ground_truth.json").write_text(dumps_json(ds.ground_truth))
        if out.exists():
            out.rmdir()
        os.rename(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out


def load_dataset(path) -> Dataset:
    root = Path(path)
    mpath = root / "manifest.json"
    try:
        manifest = json.loads(mpath.read_text())
    except FileNotFoundError:
        raise DataError(f"{mpath}: not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{mpath}:{exc.lineno}: {exc.msg}") from None
    if manifest.get("format") != FORMAT:
        raise DataError(f"{mpath}: unsupported format {manifest.get('format')!r}")
    layout = SensorLayout.from_list(manifest["layout"])
    dt = manifest.get("timestep") or 1.0 / 30.0
    demos = [read_table(root / f, layout, dt) for f in manifest["demos"]]
    groups = GroupMap.from_dict(manifest["groups"]) if manifest.get("groups") else None
    gt_path = root / "ground_truth.json"
    gt = json.loads(gt_path.read_text()) if gt_path.exists() else None
    return Dataset(layout, demos, groups, manifest.get("meta", {}), gt)
