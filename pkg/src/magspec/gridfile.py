"""Plain-text interchange formats.

Cell files carry the periodic data (V0, A0, u, support mask) as a header
(d, q, h) followed by named row-major grids of reals; operators export as
coordinate-format sparse triplets.  Floats are written with shortest
round-trip repr, so files are byte-deterministic and lossless.
"""

from __future__ import annotations

import gzip

import numpy as np

from .errors import ConfigError, ShapeError
from .fields import PeriodicBackground, SingleSiteProfile
from .geometry import LatticeGeometry

CELL_MAGIC = "# magspec cell v1"


def _grid_lines(arr: np.ndarray) -> list[str]:
    flat = arr.reshape(-1, arr.shape[-1])
    return [" ".join(repr(float(x)) for x in row) for row in flat]


def write_cell_file(path, geometry: LatticeGeometry, fields: dict) -> None:
    """Write named cell fields; scalars have shape cell, vectors (d, *cell)."""
    lines = [CELL_MAGIC]
    lines.append(f"d {geometry.dimension}")
    lines.append("q " + " ".join(str(q) for q in geometry.cell))
    lines.append(f"h {geometry.spacing!r}")
    d = geometry.dimension
    for name, arr in fields.items():
        arr = np.asarray(arr)
        if arr.dtype == bool:
            arr = arr.astype(float)
        if arr.shape == geometry.cell:
            lines.append(f"field {name} scalar")
            lines.extend(_grid_lines(arr.reshape(geometry.cell)))
        elif arr.shape == (d,) + geometry.cell:
            lines.append(f"field {name} vector")
            for comp in arr:
                lines.extend(_grid_lines(comp))
        else:
            raise ShapeError(f"field {name} has shape {arr.shape}, not a cell field")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_cell_file(path):
    """Parse a cell file; returns (geometry-less header dict, fields dict)."""
    with open(path, encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0].strip() != CELL_MAGIC:
        raise ConfigError(f"{path}:1: not a magspec cell file (missing magic header)")
    idx = 1

    def expect_key(key):
        nonlocal idx
        if idx >= len(raw):
            raise ConfigError(f"{path}:{idx + 1}: unexpected end of file, wanted {key!r}")
        parts = raw[idx].split()
        if not parts or parts[0] != key:
            raise ConfigError(f"{path}:{idx + 1}: expected {key!r}, got {raw[idx]!r}")
        idx += 1
        return parts[1:]

    try:
        d = int(expect_key("d")[0])
        q = tuple(int(x) for x in expect_key("q"))
        h = float(expect_key("h")[0])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}:{idx}: malformed header field ({exc})") from exc
    if len(q) != d:
        raise ConfigError(f"{path}: header q has {len(q)} entries for dimension {d}")
    rows_per_grid = int(np.prod(q[:-1])) if d > 1 else 1

    fields = {}
    while idx < len(raw):
        line = raw[idx].strip()
        if not line:
            idx += 1
            continue
        parts = line.split()
        if parts[0] != "field" or len(parts) != 3:
            raise ConfigError(f"{path}:{idx + 1}: expected 'field <name> scalar|vector'")
        name, kind = parts[1], parts[2]
        idx += 1
        n_grids = 1 if kind == "scalar" else d
        comps = []
        for _ in range(n_grids):
            grid_rows = []
            for _ in range(rows_per_grid):
                if idx >= len(raw):
                    raise ConfigError(f"{path}:{idx + 1}: truncated grid for field {name!r}")
                try:
                    row = [float(x) for x in raw[idx].split()]
                except ValueError as exc:
                    raise ConfigError(f"{path}:{idx + 1}: bad number in field {name!r}: {exc}") from exc
                if len(row) != q[-1]:
                    raise ConfigError(
                        f"{path}:{idx + 1}: row has {len(row)} values, grid width is {q[-1]}"
                    )
                grid_rows.append(row)
                idx += 1
            comps.append(np.array(grid_rows).reshape(q))
        fields[name] = comps[0] if kind == "scalar" else np.stack(comps)
    return {"d": d, "q": q, "h": h}, fields


def load_background(path, geometry: LatticeGeometry, eps: float = 0.0) -> PeriodicBackground:
    header, fields = read_cell_file(path)
    if header["d"] != geometry.dimension or tuple(header["q"]) != geometry.cell:
        raise ConfigError(
            f"{path}: cell file is d={header['d']}, q={header['q']}; "
            f"geometry wants d={geometry.dimension}, q={geometry.cell}"
        )
    if abs(header["h"] - geometry.spacing) > 1e-12:
        raise ConfigError(
            f"{path}: cell spacing {header['h']} != geometry spacing {geometry.spacing}"
        )
    if "V0" not in fields:
        raise ConfigError(f"{path}: missing required field 'V0'")
    return PeriodicBackground(
        geometry, fields["V0"], fields.get("A0"), coupling_eps=eps
    )


def load_profile(path, geometry: LatticeGeometry) -> SingleSiteProfile:
    header, fields = read_cell_file(path)
    if header["d"] != geometry.dimension or tuple(header["q"]) != geometry.cell:
        raise ConfigError(
            f"{path}: profile cell is d={header['d']}, q={header['q']}; "
            f"geometry wants d={geometry.dimension}, q={geometry.cell}"
        )
    if "u" not in fields:
        raise ConfigError(f"{path}: missing required field 'u'")
    mask = fields.get("u_mask")
    return SingleSiteProfile(
        geometry, fields["u"], mask.astype(bool) if mask is not None else None
    )


def write_operator_coo(path, op) -> None:
    """Sparse triplets 'row col re im', one per stored entry, row-major order."""
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [
        f"{coo.row[i]} {coo.col[i]} {float(coo.data[i].real)!r} {float(coo.data[i].imag)!r}"
        for i in order
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_eigenvalues_gz(path, eigenvalues: np.ndarray) -> None:
    """Per-realization eigenvalue dump, gzip-compressed text."""
    body = "\n".join(repr(float(x)) for x in np.asarray(eigenvalues)) + "\n"
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        fh.write(body)
