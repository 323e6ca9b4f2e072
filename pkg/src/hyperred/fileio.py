"""On-disk formats: HRMX matrices, JSON configs, manifests, rules and reports.

HRMX layout (all little-endian)::

    bytes 0-3    b"HRMX"
    bytes 4-7    uint32 version (= 1)
    bytes 8-15   uint64 rows
    bytes 16-23  uint64 cols
    bytes 24-    rows*cols float64, row-major

Every writer goes through a temporary file in the target directory followed
by ``os.replace``, so readers never observe a half-written file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, SchemaMismatch
from .training import SparseRule

__all__ = [
    "HRMX_MAGIC",
    "HRMX_VERSION",
    "SCHEMA_VERSION",
    "TIMING_COLUMNS",
    "REPORT_COLUMNS",
    "BenchmarkConfig",
    "write_hrmx",
    "read_hrmx",
    "read_hrmx_shape",
    "atomic_write_bytes",
    "write_json",
    "read_json",
    "load_config",
    "validate_manifest",
    "save_rule",
    "load_rule",
    "report_row",
    "write_report",
]

HRMX_MAGIC = b"HRMX"
HRMX_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
SCHEMA_VERSION = 1


# --------------------------------------------------------------------------- #
# atomic writes
# --------------------------------------------------------------------------- #


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            if isinstance(data, (bytes, bytearray, memoryview)):
                fh.write(data)
            else:
                for chunk in data:
                    fh.write(chunk)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------- #
# HRMX
# --------------------------------------------------------------------------- #


def write_hrmx(path, A):
    """Write a 2-D float64 matrix (1-D input is stored as one row)."""
    A = np.asarray(A, dtype="<f8")
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2:
        raise ValueError("HRMX stores 2-D matrices only")
    A = np.ascontiguousarray(A)
    header = _HEADER.pack(HRMX_MAGIC, HRMX_VERSION, A.shape[0], A.shape[1])
    atomic_write_bytes(path, [header, A.tobytes(order="C")])


def _read_header(fh, path):
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise SchemaMismatch(f"{path}: truncated HRMX header")
    magic, version, rows, cols = _HEADER.unpack(raw)
    if magic != HRMX_MAGIC:
        raise SchemaMismatch(f"{path}: bad magic {magic!r}")
    if version != HRMX_VERSION:
        raise SchemaMismatch(f"{path}: unsupported HRMX version {version}")
    return rows, cols


def read_hrmx_shape(path):
    with open(path, "rb") as fh:
        rows, cols = _read_header(fh, path)
    expected = _HEADER.size + 8 * rows * cols
    actual = os.path.getsize(path)
    if actual != expected:
        raise SchemaMismatch(f"{path}: size {actual} bytes, header implies {expected}")
    return int(rows), int(cols)


def read_hrmx(path):
    rows, cols = read_hrmx_shape(path)
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        A = np.fromfile(fh, dtype="<f8", count=rows * cols)
    return A.reshape(rows, cols).astype(float, copy=False)


# --------------------------------------------------------------------------- #
# JSON
# --------------------------------------------------------------------------- #


def write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
    atomic_write_bytes(path, text.encode())


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


@dataclass
class BenchmarkConfig:
    """Benchmark configuration. JSON schema (every key optional)::

        {
          "schema_version": 1,
          "mesh":      {"n_cells": 2000, "quad_order": 2},
          "physics":   {"diffusion": 1.0},
          "time":      {"dt": 0.002, "t_end": 1.5, "stride": 2},
          "scenarios": {"train": [0.0, 0.5, 1.0], "test": 0.75},
          "rom":       {"N_r": 20},
          "newton":    {"tol": 1e-10, "maxit": 25}
        }
    """

    n_cells: int = 2000
    quad_order: int = 2
    diffusion: float = 1.0
    dt: float = 0.002
    t_end: float = 1.5
    stride: int = 2
    train: list = field(default_factory=lambda: [0.0, 0.5, 1.0])
    test: float = 0.75
    N_r: int = 20
    newton_tol: float = 1e-10
    newton_maxit: int = 25

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    @property
    def K(self):
        """Snapshot count: ``len(train) * floor(n_steps / stride)``."""
        return len(self.train) * (self.n_steps // self.stride)

    def problem(self, C):
        from .benchfem import FomProblem

        return FomProblem(
            n_cells=self.n_cells,
            diffusion=self.diffusion,
            dt=self.dt,
            t_end=self.t_end,
            C=float(C),
            quad_order=self.quad_order,
            newton_tol=self.newton_tol,
            newton_maxit=self.newton_maxit,
        )

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "mesh": {"n_cells": self.n_cells, "quad_order": self.quad_order},
            "physics": {"diffusion": self.diffusion},
            "time": {"dt": self.dt, "t_end": self.t_end, "stride": self.stride},
            "scenarios": {"train": list(self.train), "test": self.test},
            "rom": {"N_r": self.N_r},
            "newton": {"tol": self.newton_tol, "maxit": self.newton_maxit},
        }


# (section, key) -> (attribute, kind)
_CONFIG_FIELDS = {
    ("mesh", "n_cells"): ("n_cells", "posint"),
    ("mesh", "quad_order"): ("quad_order", "posint"),
    ("physics", "diffusion"): ("diffusion", "posreal"),
    ("time", "dt"): ("dt", "posreal"),
    ("time", "t_end"): ("t_end", "posreal"),
    ("time", "stride"): ("stride", "posint"),
    ("scenarios", "train"): ("train", "scenario_list"),
    ("scenarios", "test"): ("test", "scenario"),
    ("rom", "N_r"): ("N_r", "posint"),
    ("newton", "tol"): ("newton_tol", "posreal"),
    ("newton", "maxit"): ("newton_maxit", "posint"),
}


def _check_value(path, kind, value):
    if kind == "posint":
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise ConfigError(path, f"expected a positive integer, got {value!r}")
        return value
    if kind in ("posreal", "scenario"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        if kind == "posreal" and value <= 0:
            raise ConfigError(path, f"must be positive, got {value}")
        if kind == "scenario" and not 0.0 <= value <= 1.0:
            raise ConfigError(path, f"scenario parameter must lie in [0, 1], got {value}")
        return value
    if kind == "scenario_list":
        if not isinstance(value, list) or not value:
            raise ConfigError(path, "expected a non-empty list")
        return [_check_value(f"{path}[{i}]", "scenario", v) for i, v in enumerate(value)]
    raise AssertionError(kind)


def load_config(source=None):
    """Validate a config given as a path, a dict or ``None`` (all defaults).

    Raises
    ------
    ConfigError
        With the dotted path of the offending field, e.g. ``scenarios.train[2]``.
    """
    if source is None:
        data = {}
    elif isinstance(source, dict):
        data = source
    else:
        try:
            data = read_json(source)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")
    sections = {s for s, _ in _CONFIG_FIELDS}
    for key in data:
        if key != "schema_version" and key not in sections:
            raise ConfigError(key, "unknown section")
    cfg = BenchmarkConfig()
    for section in sorted(sections):
        block = data.get(section, {})
        if not isinstance(block, dict):
            raise ConfigError(section, "expected an object")
        for key, value in block.items():
            if (section, key) not in _CONFIG_FIELDS:
                raise ConfigError(f"{section}.{key}", "unknown field")
            attr, kind = _CONFIG_FIELDS[(section, key)]
            setattr(cfg, attr, _check_value(f"{section}.{key}", kind, value))
    if cfg.n_steps < cfg.stride:
        raise ConfigError("time.stride", "stride exceeds the number of time steps")
    return cfg


# --------------------------------------------------------------------------- #
# manifests
# --------------------------------------------------------------------------- #


def validate_manifest(manifest, base_dir):
    """Check schema version, file existence and declared shapes.

    ``manifest["files"]`` maps a name to ``{"path": ..., "shape": [rows, cols]}``
    with paths relative to ``base_dir``.
    """
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(f"schema_version {manifest.get('schema_version')!r}")
    base = Path(base_dir)
    for name, entry in manifest.get("files", {}).items():
        path = base / entry["path"]
        if not path.exists():
            raise SchemaMismatch(f"file {name!r} missing: {path}")
        if "shape" in entry and str(path).endswith(".hrmx"):
            shape = read_hrmx_shape(path)
            if list(shape) != list(entry["shape"]):
                raise SchemaMismatch(
                    f"file {name!r}: stored shape {shape}, declared {entry['shape']}"
                )
    return manifest


# --------------------------------------------------------------------------- #
# rules
# --------------------------------------------------------------------------- #


def save_rule(path, rule, **meta):
    data = rule.to_dict()
    if meta:
        data["meta"] = meta
    write_json(path, data)


def load_rule(path):
    data = read_json(path)
    for key in ("indices", "weights", "residual_history"):
        if key not in data:
            raise SchemaMismatch(f"{path}: rule lacks {key!r}")
    return SparseRule.from_dict(data)


# --------------------------------------------------------------------------- #
# reports
# --------------------------------------------------------------------------- #

REPORT_COLUMNS = [
    "mode",
    "case_kind",
    "M",
    "M_J",
    "K",
    "N_r",
    "K_thin",
    "M_c",
    "support",
    "stop_reason",
    "equations_full",
    "equations_train",
    "compression_ratio",
    "dense_A_bytes",
    "kappa",
    "eta_thin",
    "eta",
    "aposteriori",
    "apriori",
    "epsilon",
]
# kept apart so golden comparisons can drop them
TIMING_COLUMNS = ["assembly_ms", "compression_ms", "training_ms", "total_ms"]


def report_row(manifest):
    """Flatten one training-run manifest into a report row."""
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(f"schema_version {manifest.get('schema_version')!r}")
    if manifest.get("kind") != "training_run":
        raise SchemaMismatch(f"expected a training_run manifest, got {manifest.get('kind')!r}")
    dims = manifest["dims"]
    res = manifest.get("results", {})
    bounds = manifest.get("bounds") or {}
    timing = manifest.get("timing_ms", {})
    K, N_r, M = dims["K"], dims["N_r"], dims["M"]
    K_thin = dims.get("K_thin")
    row = {
        "mode": manifest["mode"],
        "case_kind": manifest["case_kind"],
        "M": M,
        "M_J": dims["M_J"],
        "K": K,
        "N_r": N_r,
        "K_thin": K_thin,
        "M_c": dims["M_c"],
        "support": res.get("support"),
        "stop_reason": res.get("stop_reason"),
        "equations_full": K * N_r,
        "equations_train": res.get("n_equations"),
        "compression_ratio": None if K_thin is None else K_thin / K,
        "dense_A_bytes": 8 * K * N_r * M,
        "kappa": res.get("kappa"),
        "eta_thin": bounds.get("eta_thin"),
        "eta": res.get("eta"),
        "aposteriori": bounds.get("aposteriori"),
        "apriori": bounds.get("apriori"),
        "epsilon": bounds.get("epsilon"),
    }
    for col in TIMING_COLUMNS:
        key = col[: -len("_ms")]
        row[col] = timing.get(key)
    return row


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(rows, csv_path=None, json_path=None, append=True):
    """Write report rows as CSV (appending by default) and/or JSON."""
    columns = REPORT_COLUMNS + TIMING_COLUMNS
    if csv_path is not None:
        csv_path = Path(csv_path)
        existing = b""
        if append and csv_path.exists():
            existing = csv_path.read_bytes()
            header = existing.decode().splitlines()[0] if existing else ""
            if existing and header != ",".join(columns):
                raise SchemaMismatch(f"{csv_path}: header differs from the report schema")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if not existing:
            w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
        atomic_write_bytes(csv_path, existing + buf.getvalue().encode())
    if json_path is not None:
        write_json(json_path, {"schema_version": SCHEMA_VERSION, "columns": columns, "rows": rows})
