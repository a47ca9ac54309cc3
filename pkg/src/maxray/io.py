"""Artifact files: binary tensors, CSV tables, run manifests and the fixture cache.

A ``.mxt`` tensor is one line of JSON (dtype, shape, axes, endian) followed by
the little-endian row-major payload.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DTYPES = {"float64": "<f8", "complex128": "<c16", "int64": "<i8", "bool": "|b1"}


def _dtype_name(array: np.ndarray) -> str:
    if np.iscomplexobj(array):
        return "complex128"
    if array.dtype == bool:
        return "bool"
    if np.issubdtype(array.dtype, np.integer):
        return "int64"
    return "float64"


def write_tensor(path: str | Path, array, axes: Sequence[str] | None = None) -> Path:
    array = np.asarray(array)
    name = _dtype_name(array)
    if axes is not None and len(axes) != array.ndim:
        raise ValueError(f"{len(axes)} axis names for a {array.ndim}-d tensor")

    header = {
        "dtype": name,
        "shape": list(array.shape),
        "axes": list(axes) if axes is not None else None,
        "endian": "little",
    }
    payload = np.ascontiguousarray(array, dtype=np.dtype(DTYPES[name])).tobytes(order="C")
    path = Path(path)
    with path.open("wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(payload)
    return path


def read_tensor(path: str | Path) -> tuple[np.ndarray, list[str] | None]:
    with Path(path).open("rb") as f:
        header = json.loads(f.readline())
        payload = f.read()
    if header.get("endian") != "little" or header.get("dtype") not in DTYPES:
        raise ValueError(f"{path}: unsupported tensor header {header}")
    array = np.frombuffer(payload, dtype=np.dtype(DTYPES[header["dtype"]]))
    return array.reshape(header["shape"]).copy(), header["axes"]


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(x) for x in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


def _cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"{type(x).__name__} is not JSON serializable")


def write_json(path: str | Path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, sort_keys=True, indent=2, default=_jsonable) + "\n")
    return path


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_json(data) -> str:
    return sha256_bytes(canonical_json(data).encode())


@dataclass
class RunManifest:
    """Everything a run wrote, with content hashes."""

    subcommand: str
    config_sha256: str
    version: str
    inputs: list[str] = field(default_factory=list)
    outputs: dict[str, str] = field(default_factory=dict)
    gates: dict[str, bool] = field(default_factory=dict)
    started: float = field(default_factory=time.time)
    wall_clock: float = 0.0

    def add(self, path: str | Path) -> Path:
        path = Path(path)
        self.outputs[path.name] = sha256_file(path)
        return path

    def write(self, directory: str | Path) -> Path:
        self.wall_clock = time.time() - self.started
        data = {
            "subcommand": self.subcommand,
            "config_sha256": self.config_sha256,
            "version": self.version,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "gates": self.gates,
            "wall_clock": self.wall_clock,
        }
        return write_json(Path(directory) / "manifest.json", data)

    @staticmethod
    def verify(directory: str | Path) -> list[str]:
        """Names of listed outputs whose hash no longer matches."""
        directory = Path(directory)
        data = json.loads((directory / "manifest.json").read_text())
        return [
            name
            for name, digest in data["outputs"].items()
            if not (directory / name).exists() or sha256_file(directory / name) != digest
        ]


class FixtureCache:
    """On-disk cache of solved band data keyed by the hash of a fixture description."""

    def __init__(self, root: str | Path | None = None):
        root = root if root is not None else os.environ.get("MAXRAY_CACHE")
        self.root = Path(root) if root else None

    @property
    def enabled(self) -> bool:
        return self.root is not None

    def _dir(self, key: str) -> Path:
        return self.root / key

    def load(self, key: str, required: Iterable[str] = ()) -> dict[str, np.ndarray] | None:
        """Arrays of a cached entry, or None on a miss or when a required array is absent."""
        if not self.enabled or not self._dir(key).is_dir():
            return None
        arrays = {p.stem: read_tensor(p)[0] for p in sorted(self._dir(key).glob("*.mxt"))}
        missing = sorted(set(required) - set(arrays))
        if missing:
            logger.warning("fixture cache entry %s lacks %s; recomputing", key[:12], ", ".join(missing))
            return None
        logger.debug("fixture cache hit %s (%d arrays)", key[:12], len(arrays))
        return arrays or None

    def store(self, key: str, arrays: dict[str, np.ndarray]) -> None:
        """Write into ``<key>.tmp`` and rename, so readers never see a partial entry."""
        if not self.enabled:
            return
        target = self._dir(key)
        staging = target.with_name(f"{key}.tmp")
        shutil.rmtree(staging, ignore_errors=True)
        staging.mkdir(parents=True)
        for name, array in arrays.items():
            write_tensor(staging / f"{name}.mxt", array)
        shutil.rmtree(target, ignore_errors=True)
        os.replace(staging, target)
        logger.debug("stored fixture %s", key[:12])
