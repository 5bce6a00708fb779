"""Field snapshots, manifests and CSV tables.

Binary field layout: a 32-byte little-endian header of four int64 values
``(d, n, N, components)`` followed by the field as row-major complex128 of
shape ``(components, n, ..., n, N, N)``.  A gauge field has ``d`` components,
a group field has one.  Every ``.bin`` file has a ``.json`` sidecar holding
the algebra name and the field kind.
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .lattice import GaugeField, TorusGrid
from .lie_algebra import get_algebra

HEADER = np.dtype("<i8")
BODY = np.dtype("<c16")

try:
    from importlib.metadata import version as _pkg_version

    CODE_VERSION = _pkg_version("artifact")
except Exception:  # pragma: no cover - running from a source tree
    CODE_VERSION = "0+unknown"


class FieldFormatError(ValueError):
    pass


def write_field(path, field, meta=None):
    """Write a ``GaugeField`` or ``GroupField`` and its sidecar; returns the sidecar path."""
    path = Path(path)
    grid = field.grid
    alg = field.algebra
    if isinstance(field, GaugeField):
        body = field.matrices()
        kind = "gauge"
    else:
        body = field.values[None]
        kind = "group"
    header = np.array([grid.d, grid.n, alg.n, body.shape[0]], dtype=HEADER)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(body, dtype=BODY).tobytes())
    side = {"kind": kind, "group": alg.name, "d": grid.d, "n": grid.n, "N": alg.n, "components": int(body.shape[0])}
    side.update(meta or {})
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(side, indent=2, sort_keys=True, default=_json_default), encoding="utf-8")
    return sidecar


def read_raw(path):
    """Header tuple and body array of a binary field file."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 * HEADER.itemsize:
        raise FieldFormatError(f"{path}: truncated header")
    d, n, N, comps = (int(v) for v in np.frombuffer(raw[:32], dtype=HEADER))
    shape = (comps, *(n,) * d, N, N)
    expect = 32 + BODY.itemsize * math.prod(shape)
    if len(raw) != expect:
        raise FieldFormatError(f"{path}: {len(raw)} bytes, header implies {expect}")
    return (d, n, N, comps), np.frombuffer(raw[32:], dtype=BODY).reshape(shape).copy()


def read_field(path):
    from .gauge import GroupField

    path = Path(path)
    (d, n, N, comps), body = read_raw(path)
    side = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    if (side["d"], side["n"], side["N"], side["components"]) != (d, n, N, comps):
        raise FieldFormatError(f"{path}: sidecar disagrees with header")
    grid = TorusGrid(d, n)
    alg = get_algebra(side["group"])
    if side["kind"] == "gauge":
        return GaugeField.from_matrices(grid, alg, body)
    return GroupField(grid, alg, body[0])


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True)


def write_json(path, obj):
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def write_csv(path, header, rows, meta=None):
    """CSV with ``#``-prefixed metadata lines, a header row and ``repr``-exact floats."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        for k, v in (meta or {}).items():
            f.write(f"# {k}: {v}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def read_csv(path):
    """Metadata dict, header and rows (as strings) of a file written by :func:`write_csv`."""
    meta, lines = {}, []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition(": ")
                meta[k] = v
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    return meta, rows[0], rows[1:]


def write_trajectory(directory, traj, config_echo, snapshot_every=1):
    """Manifest, time-series CSV and binary snapshots of a recorded trajectory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    snaps = []
    for k in range(0, len(traj.states), snapshot_every):
        name = f"state_{k:05d}.bin"
        write_field(directory / name, traj.states[k], {"time": traj.times[k]})
        snaps.append(name)
    write_csv(
        directory / "series.csv",
        ["time", "sup_norm"],
        [[t, float(np.max(np.abs(a.coeffs)))] for t, a in zip(traj.times, traj.states)],
    )
    write_json(
        directory / "manifest.json",
        {
            "config": config_echo,
            "status": traj.status,
            "jump_times": list(traj.jump_times),
            "diagnostics": traj.diagnostics,
            "snapshots": snaps,
            "code_version": CODE_VERSION,
        },
    )


def threads():
    """Worker cap from ``SYMLAB_THREADS`` (default 1)."""
    raw = os.environ.get("SYMLAB_THREADS", "1")
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"SYMLAB_THREADS={raw!r} is not an integer") from None
    if k < 1:
        raise ValueError("SYMLAB_THREADS must be at least 1")
    return k
