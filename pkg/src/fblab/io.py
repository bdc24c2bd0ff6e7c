"""Plot-ready exports: CSV tables and binary PGM images of lattice fields."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import CLASS_NAMES, Grid

SLICE_NAMES = {(0, 1): "xy", (0, 2): "xz", (1, 2): "yz"}


@dataclass
class ExportRecord:
    """Files written by one export, with the (min, max) used to scale each image."""

    paths: list[Path] = field(default_factory=list)
    normalization: dict[str, tuple[float, float]] = field(default_factory=dict)


def _fmt(v: float) -> str:
    # shortest round-trip repr: stable across runs and platforms
    return repr(float(v))


def _component_names(name: str, m: int) -> list[str]:
    return [name] if m == 1 else [f"{name}{i}" for i in range(m)]


def _split_field(arr: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """View as shape + (m,), scalar fields getting m = 1."""
    arr = np.asarray(arr, float)
    if arr.shape == tuple(shape):
        return arr[..., None]
    if arr.shape[:-1] == tuple(shape):
        return arr
    raise ValueError(f"field of shape {arr.shape} does not fit lattice shape {tuple(shape)}")


def write_csv(path, field_values: np.ndarray, grid: Grid | None = None, name: str = "u") -> Path:
    """One row per node in C order.

    Columns are the node coordinates (``x``, ``y``, ``z``) and ``class`` when a
    grid is given, otherwise the integer indices ``i``, ``j``, ``k``; then the
    field components ``u`` (scalar) or ``u0``, ``u1``, ...
    """
    path = Path(path)
    arr = np.asarray(field_values, float)
    if grid is not None:
        vals = _split_field(arr, grid.shape)
        shape = grid.shape
        lead = list("xyz"[: grid.dim]) + ["class"]
        coords = grid.coords.reshape(-1, grid.dim)
        classes = grid.node_class.ravel()
    else:
        shape = arr.shape
        vals = arr[..., None]
        lead = list("ijk"[: arr.ndim]) if arr.ndim <= 3 else [f"i{a}" for a in range(arr.ndim)]
    flat = vals.reshape(-1, vals.shape[-1])
    header = lead + _component_names(name, flat.shape[1])
    index = np.indices(shape).reshape(len(shape), -1).T
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for n, row in enumerate(flat):
            if grid is not None:
                left = [_fmt(c) for c in coords[n]] + [CLASS_NAMES[int(classes[n])]]
            else:
                left = [str(int(i)) for i in index[n]]
            w.writerow(left + [_fmt(v) for v in row])
    return path


def to_gray(values: np.ndarray) -> tuple[np.ndarray, tuple[float, float]]:
    """Min-max scale finite entries to 0..255; non-finite entries and a degenerate range map to 0."""
    v = np.asarray(values, float)
    ok = np.isfinite(v)
    if not np.any(ok):
        return np.zeros(v.shape, np.uint8), (0.0, 0.0)
    lo, hi = float(np.min(v[ok])), float(np.max(v[ok]))
    out = np.zeros(v.shape, np.uint8)
    if hi > lo:
        out[ok] = np.rint(255.0 * (v[ok] - lo) / (hi - lo)).astype(np.uint8)
    return out, (lo, hi)


def write_pgm(path, image: np.ndarray) -> tuple[Path, tuple[float, float]]:
    """Binary PGM (P5, maxval 255). Array axis 0 runs left to right, axis 1 bottom to top."""
    path = Path(path)
    img = np.asarray(image, float)
    if img.ndim != 2:
        raise ValueError("PGM export needs a 2D scalar array")
    gray, rng = to_gray(img)
    raster = np.ascontiguousarray(gray.T[::-1])
    with path.open("wb") as fh:
        fh.write(f"P5\n{raster.shape[1]} {raster.shape[0]}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())
    return path, rng


def read_pgm(path) -> np.ndarray:
    """Inverse of ``write_pgm`` up to the grey-level quantisation."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, hgt = int(parts[1]), int(parts[2])
    raster = np.frombuffer(parts[4][: w * hgt], np.uint8).reshape(hgt, w)
    return raster[::-1].T.copy()


def mid_slices(arr: np.ndarray, dim: int) -> dict[str, np.ndarray]:
    """Axis-aligned mid-plane slices of a 3D lattice array, keyed by the plane they span."""
    if dim != 3:
        raise ValueError("mid-slices are defined for 3D lattices")
    out = {}
    for (a, b), tag in SLICE_NAMES.items():
        drop = 3 - a - b
        idx = [slice(None)] * arr.ndim
        idx[drop] = arr.shape[drop] // 2
        out[tag] = arr[tuple(idx)]
    return out


def _scalar_view(vals: np.ndarray) -> np.ndarray:
    """Images show scalars directly and vectors by their Euclidean length."""
    if vals.shape[-1] == 1:
        return vals[..., 0]
    return np.sqrt(np.sum(vals * vals, axis=-1))


def export_field(field_values: np.ndarray, stem, fmt: str = "csv", grid: Grid | None = None,
                 name: str = "u", mask: np.ndarray | None = None) -> ExportRecord:
    """Write ``field_values`` next to ``stem`` as CSV or PGM.

    3D lattices are exported through their three mid-plane slices, suffixed
    ``-xy``, ``-xz`` and ``-yz``. Nodes outside ``mask`` are blank in images.
    """
    stem = Path(stem)
    arr = np.asarray(field_values, float)
    shape = grid.shape if grid is not None else arr.shape
    vals = _split_field(arr, shape) if grid is not None else arr[..., None]
    dim = len(shape)
    rec = ExportRecord()
    if fmt == "csv":
        if dim == 3:
            for tag, sl in mid_slices(vals, 3).items():
                rec.paths.append(_write_slice_csv(stem.with_name(f"{stem.name}-{tag}.csv"), sl, grid, tag, name))
        else:
            rec.paths.append(write_csv(stem.with_suffix(".csv"), arr, grid, name))
        return rec
    if fmt != "pgm":
        raise ValueError(f"unknown export format {fmt!r}")
    img = _scalar_view(vals)
    if mask is not None:
        img = np.where(mask, img, np.nan)
    if dim == 1:
        img = img[:, None]
    if dim == 3:
        for tag, sl in mid_slices(img, 3).items():
            p, rng = write_pgm(stem.with_name(f"{stem.name}-{tag}.pgm"), sl)
            rec.paths.append(p)
            rec.normalization[p.name] = rng
    elif dim in (1, 2):
        p, rng = write_pgm(stem.with_suffix(".pgm"), img)
        rec.paths.append(p)
        rec.normalization[p.name] = rng
    else:
        raise ValueError("PGM export supports 1D, 2D and 3D lattices")
    return rec


def _write_slice_csv(path: Path, vals: np.ndarray, grid: Grid | None, tag: str, name: str) -> Path:
    """CSV of a mid-plane slice: in-plane coordinates (or indices), then components."""
    a, b = {v: k for k, v in SLICE_NAMES.items()}[tag]
    if grid is not None:
        cols = ["xyz"[a], "xyz"[b]]
        ax_a, ax_b = grid.axes[a], grid.axes[b]
    else:
        cols = ["ijk"[a], "ijk"[b]]
        ax_a, ax_b = np.arange(vals.shape[0]), np.arange(vals.shape[1])
    header = cols + _component_names(name, vals.shape[-1])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(vals.shape[0]):
            for j in range(vals.shape[1]):
                ca = _fmt(ax_a[i]) if grid is not None else str(i)
                cb = _fmt(ax_b[j]) if grid is not None else str(j)
                w.writerow([ca, cb] + [_fmt(v) for v in vals[i, j]])
    return path


def write_table(path, rows: list[dict]) -> Path:
    """Rows of flat dicts as CSV; the header is the union of keys in first-seen order."""
    path = Path(path)
    keys: list[str] = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_cell(r.get(k, "")) for k in keys])
    return path


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_cell(x) for x in np.ravel(np.asarray(v, dtype=object)))
    return str(v)
