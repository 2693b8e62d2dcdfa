"""
File formats: dataset CSV, recession ranges, binary draw stores, reports and
run configuration.

Draw-store layout (all integers little-endian)::

    offset  size      content
    0       8         magic b"DRAWSTOR"
    8       4         u32 format version
    12      4         u32 length n of the metadata block
    16      n         UTF-8 JSON metadata, including an ordered array table
                      [{"name", "shape"}] describing the payload
    16 + n  sum(...)  arrays in table order, C-contiguous little-endian float64

The file size is exactly ``16 + n + 8 * sum(prod(shape))``.
"""

import csv
from dataclasses import asdict, replace
import json
import math
from pathlib import Path
import struct
import warnings

import numpy as np

from .dataset import Dataset, month_index
from .errors import DataError, FormatError, ParameterError, TvpError
from .evalharness import BacktestRecord, BacktestSchedule
from .heavytails import DofPrior
from .sampler import DrawStore, ModelFlags, ModelPriors, SamplerConfig
from .stochvol import SvPriors

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "load_dataset",
    "save_dataset",
    "load_recessions",
    "recession_flags",
    "persist_draws",
    "load_draws",
    "save_records",
    "load_records",
    "emit_report",
    "read_report",
    "load_config",
    "REPORT_COLUMNS",
]

MAGIC = b"DRAWSTOR"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sII")

MISSING = {"", "na", "nan", "null", "none", "."}


class ConfigError(TvpError, ValueError):
    """Invalid run configuration."""


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


def _read_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    return header, body


def _parse_float(cell):
    c = cell.strip()
    if c.lower() in MISSING:
        return math.nan
    try:
        return float(c)
    except ValueError:
        raise DataError(f"cannot parse {cell!r} as a number") from None


def load_dataset(path, column_map=None, lag_predictors=False, start=None, end=None,
                 recessions=None) -> Dataset:
    """Read a monthly CSV with an integer yyyymm date column.

    ``column_map`` keys: ``date``; either ``y`` (excess return) or ``return``
    plus ``rf`` (raw index return and risk-free rate); optional ``rf`` alone
    to carry the risk-free rate; optional ``recession`` (0/1 column);
    ``predictors`` as a list of column names or a ``{name: column}`` dict.
    Without a map the native layout written by :func:`save_dataset` is
    assumed.  ``lag_predictors`` shifts predictors down one month so row t
    holds values dated t-1.  ``start``/``end`` restrict the modeled range;
    missing cells inside it are rejected with their CSV line numbers.
    ``recessions`` is a list of inclusive (start, end) ranges.
    """
    header, body = _read_csv(path)
    if column_map is None:
        reserved = {"date", "y", "rf", "recession"}
        column_map = {"date": "date", "y": "y",
                      "predictors": [h for h in header if h not in reserved]}
        if "rf" in header:
            column_map["rf"] = "rf"
        if "recession" in header:
            column_map["recession"] = "recession"
    preds = column_map.get("predictors", [])
    if isinstance(preds, dict):
        names, pred_cols = list(preds), list(preds.values())
    else:
        names, pred_cols = list(preds), list(preds)
    needed = [column_map.get("date", "date")] + pred_cols
    for key in ("y", "return", "rf", "recession"):
        if key in column_map:
            needed.append(column_map[key])
    unknown = [c for c in needed if c not in header]
    if unknown:
        raise DataError(f"{path}: unknown column(s) {unknown}")
    if "y" not in column_map and not ("return" in column_map and "rf" in column_map):
        raise DataError("column_map needs 'y' or both 'return' and 'rf'")
    col = {h: i for i, h in enumerate(header)}

    def column(name):
        i = col[name]
        out = np.empty(len(body))
        for r, row in enumerate(body):
            try:
                out[r] = _parse_float(row[i]) if i < len(row) else math.nan
            except DataError as exc:
                raise DataError(f"{path}: line {r + 2}, column {name}: {exc}") from None
        return out

    date_col = col[column_map.get("date", "date")]
    dates = []
    for r, row in enumerate(body):
        cell = row[date_col].strip() if date_col < len(row) else ""
        try:
            dates.append(int(float(cell)))
        except ValueError:
            raise DataError(f"{path}: line {r + 2}: bad date {cell!r}") from None
    dates = np.array(dates, dtype=np.int64)
    month_index(dates)
    seen = {}
    for r, d in enumerate(dates.tolist()):
        if d in seen:
            raise DataError(f"{path}: duplicate month {d} (lines {seen[d] + 2} and {r + 2})")
        seen[d] = r
    steps = np.diff(month_index(dates))
    if np.any(steps <= 0):
        k = int(np.argmax(steps <= 0))
        raise DataError(f"{path}: dates not increasing at {dates[k + 1]} (line {k + 3})")

    rf = column(column_map["rf"]) if "rf" in column_map else None
    y = column(column_map["y"]) if "y" in column_map else column(column_map["return"]) - rf
    X = np.column_stack([column(c) for c in pred_cols]) if pred_cols else np.zeros((len(body), 0))
    rec = column(column_map["recession"]) if "recession" in column_map else None
    lines = np.arange(len(body)) + 2
    if lag_predictors:
        X = np.vstack([np.full((1, X.shape[1]), np.nan), X[:-1]])

    keep = np.ones(len(body), dtype=bool)
    if start is not None:
        keep &= dates >= start
    if end is not None:
        keep &= dates <= end
    if lag_predictors and start is None:
        keep[0] = False
    parts = [y[:, None], X] + ([rf[:, None]] if rf is not None else []) + ([rec[:, None]] if rec is not None else [])
    bad = ~np.all(np.isfinite(np.hstack(parts)), axis=1) & keep
    if np.any(bad):
        raise DataError(f"{path}: missing cells in modeled range at line(s) {lines[bad][:10].tolist()}")
    dates, y, X = dates[keep], y[keep], X[keep]
    rf = rf[keep] if rf is not None else None
    flags = rec[keep].astype(bool) if rec is not None else None
    if recessions is not None:
        flags = recession_flags(dates, recessions)
    return Dataset(dates, y, X, names, flags, rf)


def _fmt_full(x):
    return repr(float(x))


def save_dataset(ds: Dataset, path):
    """Write the native layout: date, y, [rf], recession, predictors (full precision)."""
    header = ["date", "y"] + (["rf"] if ds.rf is not None else []) + ["recession"] + list(ds.names)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(ds.T):
            row = [str(int(ds.dates[t])), _fmt_full(ds.y[t])]
            if ds.rf is not None:
                row.append(_fmt_full(ds.rf[t]))
            row.append("1" if ds.recession[t] else "0")
            row += [_fmt_full(v) for v in ds.X[t]]
            w.writerow(row)


def load_recessions(path):
    """Two-column CSV of inclusive (start yyyymm, end yyyymm) ranges; header optional."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    out = []
    for i, row in enumerate(rows):
        try:
            a, b = int(row[0]), int(row[1])
        except (ValueError, IndexError):
            if i == 0:
                continue
            raise DataError(f"{path}: line {i + 1}: expected two yyyymm dates") from None
        month_index([a, b])
        if b < a:
            raise DataError(f"{path}: line {i + 1}: range end {b} before start {a}")
        out.append((a, b))
    return out


def recession_flags(dates, ranges):
    d = np.asarray(dates, dtype=np.int64)
    flags = np.zeros(d.shape[0], dtype=bool)
    for a, b in ranges:
        flags |= (d >= a) & (d <= b)
    return flags


# ---------------------------------------------------------------------------
# draw stores
# ---------------------------------------------------------------------------


def persist_draws(store: DrawStore, path):
    table, payload = [], []
    for name in sorted(store.arrays):
        arr = np.ascontiguousarray(store.arrays[name], dtype="<f8")
        table.append({"name": name, "shape": list(arr.shape)})
        payload.append(arr.tobytes())
    meta = dict(store.metadata(), arrays=table)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for p in payload:
            fh.write(p)


def load_draws(path, expected_hash=None) -> DrawStore:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a draw-store header")
    magic, version, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a draw store (bad magic {magic!r})")
    if version > FORMAT_VERSION:
        raise FormatError(f"{path}: format version {version} is newer than supported version "
                          f"{FORMAT_VERSION}; upgrade the reader")
    if len(raw) < _HEADER.size + n:
        raise FormatError(f"{path}: truncated metadata block")
    try:
        meta = json.loads(raw[_HEADER.size:_HEADER.size + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt metadata: {exc}") from None
    offset = _HEADER.size + n
    arrays = {}
    for entry in meta["arrays"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: truncated payload in array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=nbytes // 8,
                                              offset=offset).reshape(shape).astype(float)
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    if expected_hash is not None and meta["config_hash"] != expected_hash:
        warnings.warn(f"{path}: config hash {meta['config_hash']} differs from expected {expected_hash}",
                      stacklevel=2)
    return DrawStore(meta["model_id"], meta["config_hash"], meta["seed"], ModelFlags(**meta["flags"]),
                     arrays, meta.get("diagnostics", {}))


# ---------------------------------------------------------------------------
# backtest records
# ---------------------------------------------------------------------------


def save_records(records, path):
    """Lossless ``.npz`` of one model's backtest records, including draw locations."""
    if not records:
        raise DataError("no records to save")
    arr = {
        "origin": np.array([r.origin for r in records], dtype=np.int64),
        "target": np.array([r.target for r in records], dtype=np.int64),
        "realized": np.array([r.realized for r in records]),
        "point": np.array([r.point for r in records]),
        "lps": np.array([r.lps for r in records]),
        "recession": np.array([r.recession for r in records], dtype=bool),
        "model": np.array(records[0].model),
    }
    if records[0].locations is not None:
        arr["locations"] = np.vstack([r.locations for r in records])
    np.savez(path, **arr)


def load_records(path):
    with np.load(path) as z:
        model = str(z["model"])
        locs = z["locations"] if "locations" in z.files else None
        return [BacktestRecord(int(z["origin"][i]), int(z["target"][i]), float(z["realized"][i]),
                               float(z["point"][i]), float(z["lps"][i]), bool(z["recession"][i]), model,
                               None if locs is None else locs[i].copy())
                for i in range(z["origin"].shape[0])]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

REPORT_COLUMNS = {
    "metrics": ("model", "regime", "rel_rmse", "log_bf"),
    "trading": ("model", "regime", "mu", "sigma", "sharpe"),
    "series": ("target", "model", "cum_log_bf", "cum_sq_error"),
    "records": ("model", "origin", "target", "realized", "point", "lps", "recession"),
}


def _sig6(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if not math.isfinite(x) else float(f"{x:.6g}")
    return x


def emit_report(rows, path, fmt=None, kind=None, columns=None):
    """Write report rows with a stable column order and 6 significant digits.

    ``kind`` selects a standard column set from :data:`REPORT_COLUMNS`;
    ``fmt`` defaults to the file suffix (``csv`` or ``json``).  Non-finite
    numbers become ``nan``/``inf`` in CSV and ``null`` in JSON.
    """
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt not in ("csv", "json"):
        raise ParameterError(f"unsupported report format {fmt!r}")
    cols = list(columns or REPORT_COLUMNS.get(kind) or (rows[0].keys() if rows else []))
    clean = [{c: _sig6(r[c]) for c in cols} for r in rows]
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for r in clean:
                    w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in r.values()])
        else:
            def nullify(v):
                return None if isinstance(v, float) and not math.isfinite(v) else v
            with open(path, "w") as fh:
                json.dump({"columns": cols, "rows": [{c: nullify(v) for c, v in r.items()} for r in clean]},
                          fh, indent=1)
    except OSError as exc:
        raise DataError(f"cannot write report {path}: {exc}") from exc
    return path


def read_report(path):
    """Parse a report written by :func:`emit_report` back into typed rows."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        with open(path) as fh:
            doc = json.load(fh)
        return [{c: (math.nan if r[c] is None else r[c]) for c in doc["columns"]} for r in doc["rows"]]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for r in reader:
            row = {}
            for k, v in r.items():
                try:
                    row[k] = int(v)
                except ValueError:
                    try:
                        row[k] = float(v)
                    except ValueError:
                        row[k] = v
            out.append(row)
        return out


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_SCHEMA = {
    "run": {"models": list, "model": str, "seed": int, "profile": str, "out_dir": str, "n_jobs": int},
    "data": {"path": str, "recessions": str, "lag_predictors": bool, "standardize": bool,
             "start": int, "end": int, "columns": dict},
    "sampler": {"n_iter": int, "n_burn": int, "thin": int},
    "priors": {"dl_a": float, "gaussian_var": float, "sv_offset": float, "sv": dict, "dof": dict},
    "schedule": {"sample_start": int, "initial_end": int, "final": int, "last_n": int},
    "trading": {"lower": float, "upper": float, "mode": str},
    "simulate": {"T": int, "K": int, "beta0": list, "sqrt_v": list, "nu": float, "kappa": list,
                 "mu": float, "rho": float, "sigma2": float, "start_date": int},
    "validate": {"n_chains": int, "n_cycles": int, "T": int, "K": int},
}


def _check_types(section, table):
    spec = _SCHEMA[section]
    for key, val in table.items():
        if key not in spec:
            raise ConfigError(f"[{section}] unknown key {key!r}; allowed: {sorted(spec)}")
        want = spec[key]
        ok = isinstance(val, want) and not (want is int and isinstance(val, bool))
        if want is float and isinstance(val, int) and not isinstance(val, bool):
            ok = True
        if not ok:
            raise ConfigError(f"[{section}] {key} must be {want.__name__}, got {type(val).__name__}")


def validate_config(doc):
    for section, table in doc.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]; allowed: {sorted(_SCHEMA)}")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        _check_types(section, table)
    profile = doc.get("run", {}).get("profile", "desk")
    if profile not in ("desk", "paper"):
        raise ConfigError(f"profile must be 'desk' or 'paper', got {profile!r}")
    mode = doc.get("trading", {}).get("mode", "draw")
    if mode not in ("draw", "point", "both"):
        raise ConfigError("trading.mode must be 'draw', 'point' or 'both'")
    return doc


def load_config(path):
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return validate_config(doc)


def build_priors(doc) -> ModelPriors:
    p = doc.get("priors", {})
    try:
        sv = SvPriors(**p.get("sv", {}))
        dof = DofPrior(**p.get("dof", {}))
    except TypeError as exc:
        raise ConfigError(f"[priors]: {exc}") from exc
    kw = {k: float(p[k]) for k in ("dl_a", "gaussian_var", "sv_offset") if k in p}
    return ModelPriors(sv=sv, dof=dof, **kw)


def build_sampler_config(doc, profile_config: SamplerConfig, seed=None) -> SamplerConfig:
    s = doc.get("sampler", {})
    try:
        cfg = replace(profile_config, priors=build_priors(doc), **s)
    except ParameterError as exc:
        raise ConfigError(f"[sampler]: {exc}") from exc
    run_seed = doc.get("run", {}).get("seed")
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    elif run_seed is not None:
        cfg = replace(cfg, seed=int(run_seed))
    return cfg


def build_schedule(doc, profile_schedule: BacktestSchedule) -> BacktestSchedule:
    try:
        return replace(profile_schedule, **doc.get("schedule", {}))
    except DataError as exc:
        raise ConfigError(f"[schedule]: {exc}") from exc


def config_to_dict(cfg: SamplerConfig):
    return json.loads(json.dumps(asdict(cfg), default=str))
