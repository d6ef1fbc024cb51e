"""On-disk formats: pattern CSV (+ JSON sidecar), parameter JSON, checkpoints and PGM images."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from pathlib import Path

import numpy as np

from .core import PDE_NAMES, GridSpec, ParameterError, Pattern, RDParams
from .nn import Mlp, TrainableSet

log = logging.getLogger(__name__)

CSV_HEADER = ("x", "y", "u", "v")


class PatternFormatError(ValueError):
    def __init__(self, path, line: int | None, message: str):
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def pattern_to_csv(pattern: Pattern) -> str:
    grid = pattern.grid
    xs, ys = grid.x(), grid.y()
    lines = [",".join(CSV_HEADER)]
    for iy in range(grid.ny):
        y = _fmt(ys[iy])
        for ix in range(grid.nx):
            lines.append(f"{_fmt(xs[ix])},{y},{_fmt(pattern.u[iy, ix])},{_fmt(pattern.v[iy, ix])}")
    return "\n".join(lines) + "\n"


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_pattern(pattern: Pattern, path, provenance: dict | None = None) -> Path:
    """Write ``x,y,u,v`` rows (y outer, x inner) and, if there is provenance, a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(pattern_to_csv(pattern))
    meta = provenance if provenance is not None else pattern.provenance
    if meta is not None:
        write_json(sidecar_path(path), meta)
    return path


def read_pattern(path, with_sidecar: bool = True) -> Pattern:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise PatternFormatError(path, None, f"cannot read pattern: {exc}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise PatternFormatError(path, 1, f"expected header {','.join(CSV_HEADER)}")
    data = np.empty((len(rows) - 1, 4))
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise PatternFormatError(path, n, f"expected 4 columns, got {len(row)}")
        try:
            data[n - 2] = [float(c) for c in row]
        except ValueError:
            raise PatternFormatError(path, n, f"non-numeric value in {row!r}") from None
        if not np.all(np.isfinite(data[n - 2])):
            raise PatternFormatError(path, n, "non-finite value")
    if len(data) < 9:
        raise PatternFormatError(path, None, "too few rows for a grid")
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    nx, ny = len(xs), len(ys)
    if nx * ny != len(data):
        raise PatternFormatError(path, None, f"{len(data)} rows do not form a {nx}x{ny} grid")
    grid = GridSpec(nx, ny, float(xs[0]), float(xs[-1]), float(ys[0]), float(ys[-1]))
    expected = grid.points()
    bad = np.flatnonzero(np.any(np.abs(expected - data[:, :2]) > 1e-9 * max(1.0, np.abs(expected).max()), axis=1))
    if bad.size:
        raise PatternFormatError(path, int(bad[0]) + 2, "rows are not a uniform grid in y-outer, x-inner order")
    provenance = None
    side = sidecar_path(path)
    if with_sidecar and side.exists():
        provenance = read_json(side)
    return Pattern(grid, data[:, 2].reshape(grid.shape), data[:, 3].reshape(grid.shape), provenance)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=_jsonable).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def read_params(path) -> RDParams:
    """Parameters from JSON: a flat mapping, or an object with an ``inferred``/``params`` entry."""
    try:
        data = read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParameterError(f"{path}: cannot parse parameters: {exc}") from None
    if not isinstance(data, dict):
        raise ParameterError(f"{path}: expected a JSON object")
    for key in ("inferred", "params"):
        if isinstance(data.get(key), dict):
            data = data[key]
            break
    try:
        return RDParams.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"{path}: {exc}") from None


def write_params(path, params: RDParams) -> Path:
    return write_json(path, params.as_dict())


def save_checkpoint(path, ts: TrainableSet, step: int = 0) -> Path:
    """JSON header line, then the flat float64 vector (little endian): network, then 5 model parameters."""
    header = {
        "layer_sizes": list(ts.net.layer_sizes),
        "mask": dict(zip(PDE_NAMES, ts.mask)),
        "step": int(step),
        "r2": ts.r2,
        "input_lo": (ts.net.input_center - ts.net.input_halfwidth).tolist(),
        "input_hi": (ts.net.input_center + ts.net.input_halfwidth).tolist(),
        "output_center": ts.net.output_center.tolist(),
        "output_scale": ts.net.output_scale.tolist(),
        "count": int(ts.theta.size),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(ts.theta.astype("<f8").tobytes())
    return path


def load_checkpoint(path) -> tuple[TrainableSet, dict]:
    blob = Path(path).read_bytes()
    head, _, body = blob.partition(b"\n")
    header = json.loads(head)
    theta = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if theta.size != header["count"]:
        raise ValueError(f"checkpoint holds {theta.size} values, header says {header['count']}")
    net = Mlp(header["layer_sizes"], input_lo=header["input_lo"], input_hi=header["input_hi"],
              output_center=header["output_center"], output_scale=header["output_scale"])
    n = net.n_params
    net.params[:] = theta[:n]
    params = RDParams.from_trainable_vector(theta[n:], header["r2"])
    ts = TrainableSet.create(net, params, [header["mask"][k] for k in PDE_NAMES])
    return ts, header


def to_gray(values: np.ndarray) -> tuple[np.ndarray, float, float, bool]:
    """Min-max scale to 0..255.  A constant field maps to mid-gray and reports ``degenerate``."""
    f = np.asarray(values, dtype=np.float64)
    lo, hi = float(f.min()), float(f.max())
    if hi <= lo:
        return np.full(f.shape, 128, dtype=np.uint8), lo, hi, True
    return np.rint(255.0 * (f - lo) / (hi - lo)).astype(np.uint8), lo, hi, False


def write_pgm(path, values: np.ndarray) -> dict:
    """Binary PGM (P5), maxval 255.  The top image row is the largest y."""
    pix, lo, hi, degenerate = to_gray(values)
    if degenerate:
        log.warning("%s: constant field rendered as mid-gray", path)
    img = pix[::-1]
    h, w = img.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
    return {"min": lo, "max": hi, "degenerate": degenerate}


def read_pgm(path) -> np.ndarray:
    """Pixels of a P5 image as written by :func:`write_pgm` (rows top to bottom)."""
    blob = Path(path).read_bytes()
    parts = blob.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only maxval 255 is supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def render_pattern(pattern: Pattern, out_dir, stem: str = "pattern") -> dict:
    out_dir = Path(out_dir)
    meta = {
        "u": write_pgm(out_dir / f"{stem}_u.pgm", pattern.u),
        "v": write_pgm(out_dir / f"{stem}_v.pgm", pattern.v),
        "orientation": "top row is y_max; left column is x_min",
    }
    write_json(out_dir / f"{stem}_render.json", meta)
    return meta


def write_aggregate_csv(path, agg) -> Path:
    """Columns ``parameter,mean,variance,error_pct``; a final ``data_loss`` row carries the mean data loss."""
    lines = ["parameter,mean,variance,error_pct"]
    for s in agg.summaries:
        lines.append(f"{s.name},{_fmt(s.mean)},{_fmt(s.variance)},{_fmt(s.error_pct)}")
    lines.append(f"data_loss,{_fmt(agg.mean_data_loss)},,")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def write_history_csv(path, runs) -> Path:
    cols = ["restart_seed", "epoch", "mse_h", "mse_f", "mse_bc", "total", *PDE_NAMES]
    lines = [",".join(cols)]
    for run in runs:
        for rec in run.history:
            row = [str(run.restart_seed)] + [_fmt(rec[c]) if c != "epoch" else str(rec[c]) for c in cols[1:]]
            lines.append(",".join(row))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def write_spectrum_csv(path, k: np.ndarray, power: np.ndarray) -> Path:
    lines = ["k,power"] + [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(k, power)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path
