"""Binary trace/statistic files, CSV emitters and run manifests.

FFCA (one simulation trace), little-endian::

    4s  magic "FFCA"          H  format version
    I   H   I W   I T         I  s_level*100
    I   density*1e6           Q  master_seed
    I   sim_index             I  alpha*1e6
    d   q_threshold  d i_seed  d q_die  d q_dead
    T*H*W uint8 cell states, t-major then row-major

FFST (statistic or forecast map)::

    4s magic "FFST"  H version  I H  I W  I T
    T*H*W float32
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import njit, use_numba
from .config import CONFIG_SCHEMA_VERSION, SimConfig
from .engine import SimulationTrace

FFCA_MAGIC = b"FFCA"
FFST_MAGIC = b"FFST"
FFCA_VERSION = 1
FFST_VERSION = 1
_FFCA_HEADER = struct.Struct("<4sHIIIIIQIIdddd")
_FFST_HEADER = struct.Struct("<4sHIII")

FORMAT_VERSIONS = {"FFCA": FFCA_VERSION, "FFST": FFST_VERSION, "config": CONFIG_SCHEMA_VERSION}

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


class FormatError(ValueError):
    """A file does not follow the expected binary layout."""


# -- checksums ---------------------------------------------------------------

@njit
def _fnv1a_jit(data, h):
    prime = np.uint64(FNV_PRIME)
    for b in data:
        h = (h ^ np.uint64(b)) * prime
    return h


def fnv1a64(data: bytes, accelerated=None) -> int:
    """64-bit FNV-1a hash of ``data``."""
    if use_numba(accelerated):
        return int(_fnv1a_jit(np.frombuffer(data, dtype=np.uint8), np.uint64(FNV_OFFSET)))
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def file_digest(path) -> str:
    return f"{fnv1a64(Path(path).read_bytes()):016x}"


# -- FFCA --------------------------------------------------------------------

def encode_trace(trace: SimulationTrace) -> bytes:
    c = trace.config
    T, H, W = trace.states.shape
    header = _FFCA_HEADER.pack(
        FFCA_MAGIC, FFCA_VERSION, H, W, T,
        int(round(c.s_level * 100)), int(round(c.density * 1e6)),
        int(c.master_seed), int(trace.sim_index), int(round(c.alpha * 1e6)),
        float(c.q_threshold), float(c.i_seed), float(c.q_die), float(c.q_dead))
    return header + np.ascontiguousarray(trace.states, dtype=np.uint8).tobytes()


def write_trace(path, trace: SimulationTrace):
    Path(path).write_bytes(encode_trace(trace))


def read_trace_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(_FFCA_HEADER.size)
    return _decode_ffca_header(raw, path)


def _decode_ffca_header(raw, path):
    if len(raw) < _FFCA_HEADER.size:
        raise FormatError(f"{path}: truncated FFCA header")
    (magic, version, H, W, T, s100, d6, seed, idx, a6,
     qt, iseed, qdie, qdead) = _FFCA_HEADER.unpack(raw[:_FFCA_HEADER.size])
    if magic != FFCA_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FFCA_MAGIC!r}")
    if version != FFCA_VERSION:
        raise FormatError(f"{path}: unsupported FFCA version {version}")
    return {"height": H, "width": W, "frames": T, "s_level_x100": s100, "density_x1e6": d6,
            "master_seed": seed, "sim_index": idx, "alpha_x1e6": a6, "q_threshold": qt,
            "i_seed": iseed, "q_die": qdie, "q_dead": qdead}


def read_trace(path, config: SimConfig | None = None) -> SimulationTrace:
    """Load an FFCA file.

    Header fields override ``config`` (or defaults) so the returned trace's
    config matches what was written.
    """
    raw = Path(path).read_bytes()
    hdr = _decode_ffca_header(raw, path)
    T, H, W = hdr["frames"], hdr["height"], hdr["width"]
    body = raw[_FFCA_HEADER.size:]
    if len(body) != T * H * W:
        raise FormatError(f"{path}: expected {T * H * W} state bytes, found {len(body)}")
    states = np.frombuffer(body, dtype=np.uint8).reshape(T, H, W).copy()
    if states.size and states.max() > 4:
        raise FormatError(f"{path}: invalid cell state {int(states.max())}")
    base = config if config is not None else SimConfig()
    cfg = base.replace(height=H, width=W, s_level=hdr["s_level_x100"] / 100.0,
                       density=hdr["density_x1e6"] / 1e6, master_seed=hdr["master_seed"],
                       alpha=hdr["alpha_x1e6"] / 1e6, q_threshold=hdr["q_threshold"],
                       i_seed=hdr["i_seed"], q_die=hdr["q_die"], q_dead=hdr["q_dead"],
                       max_steps=max(base.max_steps, T))
    return SimulationTrace(cfg, hdr["sim_index"], states)


# -- FFST --------------------------------------------------------------------

def write_stat_map(path, values):
    """Write a ``(T, H, W)`` array as FFST float32."""
    values = np.asarray(values)
    if values.ndim != 3:
        raise FormatError("statistic map must be (T, H, W)")
    T, H, W = values.shape
    data = _FFST_HEADER.pack(FFST_MAGIC, FFST_VERSION, H, W, T) + \
        np.ascontiguousarray(values, dtype="<f4").tobytes()
    Path(path).write_bytes(data)


def read_stat_map(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _FFST_HEADER.size:
        raise FormatError(f"{path}: truncated FFST header")
    magic, version, H, W, T = _FFST_HEADER.unpack(raw[:_FFST_HEADER.size])
    if magic != FFST_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FFST_MAGIC!r}")
    if version != FFST_VERSION:
        raise FormatError(f"{path}: unsupported FFST version {version}")
    body = raw[_FFST_HEADER.size:]
    if len(body) != 4 * T * H * W:
        raise FormatError(f"{path}: expected {4 * T * H * W} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(T, H, W).astype(np.float32)


# -- CSV ---------------------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        if np.isnan(v):
            return ""
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


REPORT_COLUMNS = ["stratum_kind", "stratum_lo", "stratum_hi", "metric", "value", "support", "ci_lo", "ci_hi"]


def write_reports(path, reports, prefix_columns=()):
    """MetricReport CSV.

    With ``prefix_columns`` each item of ``reports`` is a
    ``(prefix_values, MetricReport)`` pair and the prefix values lead the row.
    """
    prefix_columns = list(prefix_columns)
    rows = []
    for item in reports:
        pre, r = item if prefix_columns else ((), item)
        ci = r.ci or (None, None)
        rows.append([*pre, r.stratum_kind, r.stratum_lo, r.stratum_hi, r.metric, r.value,
                     r.support, ci[0], ci[1]])
    write_csv(path, prefix_columns + REPORT_COLUMNS, rows)


def write_macro_csv(path, series, s_level=None):
    header = ["t", "mean_burnt", "var_burnt", "mean_unburnt", "var_unburnt"]
    cols = [series.mean_burnt, series.var_burnt, series.mean_unburnt, series.var_unburnt]
    rows = [[t] + [c[t] for c in cols] for t in range(series.n_frames)]
    if s_level is not None:
        header = ["s_level"] + header
        rows = [[s_level] + r for r in rows]
    write_csv(path, header, rows)


def write_histogram_csv(path, hist):
    rows = [[hist.edges[i], hist.edges[i + 1], hist.counts[i]] for i in range(len(hist.counts))]
    write_csv(path, ["bin_lo", "bin_hi", "count"], rows)


def write_calibration_csv(path, curve):
    rows = [[curve.edges[k], curve.edges[k + 1], curve.mean_pred[k], curve.mean_obs[k], curve.count[k]]
            for k in range(len(curve.count))]
    write_csv(path, ["bin_lo", "bin_hi", "mean_pred", "mean_obs", "count"], rows)


# -- manifest ----------------------------------------------------------------

def now_iso():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _rel(path, root):
    try:
        return str(Path(path).resolve().relative_to(Path(root).resolve()))
    except ValueError:
        return str(path)


def write_manifest(out_dir, command, config: dict, outputs=(), inputs=(), extra=None,
                   status="ok", error=None, started=None):
    """JSON manifest with digests of every listed file (relative to ``out_dir``)."""
    out_dir = Path(out_dir)
    doc = {
        "tool": "stochfire",
        "tool_version": __version__,
        "format_versions": FORMAT_VERSIONS,
        "command": command,
        "config": config,
        "rng": {"generator": "splitmix64",
                "stream_seed": "mix64(master_seed + 0x9E3779B97F4A7C15 * (index + 1))",
                "layout_stream_index": 2**32},
        "inputs": {str(p): file_digest(p) for p in inputs},
        "outputs": {_rel(p, out_dir): file_digest(p) for p in outputs},
        "started": started or now_iso(),
        "finished": now_iso(),
        "status": status,
    }
    if error is not None:
        doc["error"] = error
    if extra:
        doc.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    return path


def read_manifest(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from None
