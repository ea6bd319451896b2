"""Plain-text artifacts: saved reports, run histories and plot-ready CSVs.

Plot CSV columns:

* ``psd``            freq_hz, psd_db (dB relative to 1 unit^2/Hz)
* ``learning-curve`` epoch, acpr_l, acpr_r, nmse_db, train_loss
* ``amam-ampm``      amp_in, gain_db, phase_deg
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .harness import ExperimentRecord
from .metrics import DB_FLOOR, AmCurves, MetricsReport, Psd

PLOT_KINDS = ("psd", "learning-curve", "amam-ampm")
REPORT_FILE = "report.txt"
PSD_FILE = "report_psd.csv"
AM_FILE = "report_am.csv"
HISTORY_FILE = "history.csv"


class MissingFieldError(ConfigError):
    def __init__(self, field: str):
        self.field = field
        super().__init__(f"nothing to export: the record has no {field!r}")


def _write_rows(path, header, columns) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
            n += 1
    return n


def _read_columns(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    data = data.reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


# --- plot CSVs -------------------------------------------------------------------

def _report_of(source) -> MetricsReport:
    if isinstance(source, MetricsReport):
        return source
    if isinstance(source, ExperimentRecord):
        for split in ("test", "val", "train"):
            if split in source.final:
                return source.final[split]
        raise MissingFieldError("final")
    raise ConfigError(f"cannot export from {type(source).__name__}")


def _history_of(source) -> list[dict]:
    if isinstance(source, ExperimentRecord):
        if not source.history:
            raise MissingFieldError("history")
        return source.history
    if isinstance(source, list):
        if not source:
            raise MissingFieldError("history")
        return source
    raise MissingFieldError("history")


def export_plots(source, kind: str, path) -> int:
    """Write one plot CSV; returns the number of data rows."""
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    if kind == "learning-curve":
        h = _history_of(source)
        return _write_rows(
            path, ("epoch", "acpr_l", "acpr_r", "nmse_db", "train_loss"),
            ([r["epoch"] for r in h], [r["val_acpr_left_dbc"] for r in h],
             [r["val_acpr_right_dbc"] for r in h], [r["val_nmse_db"] for r in h],
             [r["train_loss"] for r in h]),
        )
    rep = _report_of(source)
    if kind == "psd":
        if rep.psd is None:
            raise MissingFieldError("psd")
        return _write_rows(path, ("freq_hz", "psd_db"), (rep.psd.freqs_hz, rep.psd.db))
    if rep.am is None:
        raise MissingFieldError("am")
    return _write_rows(path, ("amp_in", "gain_db", "phase_deg"),
                       (rep.am.amp_in, rep.am.gain_db, rep.am.phase_deg))


def read_psd_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Frequency grid and linear density recovered from a ``psd`` export."""
    cols = _read_columns(path)
    db = cols["psd_db"]
    density = np.where(db <= DB_FLOOR, 0.0, 10.0 ** (db / 10.0))
    return cols["freq_hz"], density


# --- reports ---------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def save_report(report: MetricsReport, directory, prefix: str = "") -> Path:
    """Key/value scalars plus linear PSD and AM arrays, full precision."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {_fmt(v)}" for k, v in report.scalars().items()]
    lines += [f"meta.{k} = {_fmt(v)}" for k, v in sorted(report.meta.items())]
    if report.psd is not None:
        p = report.psd
        lines += [f"psd.nfft = {p.nfft}", f"psd.overlap = {_fmt(p.overlap)}",
                  f"psd.window = {p.window}"]
        _write_rows(d / (prefix + PSD_FILE), ("freq_hz", "density"), (p.freqs_hz, p.density))
    if report.am is not None:
        a = report.am
        _write_rows(d / (prefix + AM_FILE), ("amp_in", "gain_db", "phase_deg"),
                    (a.amp_in, a.gain_db, a.phase_deg))
    out = d / (prefix + REPORT_FILE)
    out.write_text("\n".join(lines) + "\n")
    return out


def _parse_value(text: str):
    if text == "none":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def load_report(directory, prefix: str = "") -> MetricsReport:
    d = Path(directory)
    path = d / (prefix + REPORT_FILE)
    if not path.exists():
        raise ParseError(f"no report at {path}")
    kv = {}
    for i, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, val = line.partition(" = ")
        if not sep:
            raise ParseError(f"expected 'key = value', got {line!r}", row=i)
        kv[key.strip()] = _parse_value(val.strip())
    for key in ("nmse_db", "acpr_left_dbc", "acpr_right_dbc", "evm_db"):
        if key not in kv:
            raise ParseError(f"report is missing {key!r}")
    psd = None
    if (d / (prefix + PSD_FILE)).exists():
        cols = _read_columns(d / (prefix + PSD_FILE))
        psd = Psd(cols["freq_hz"], cols["density"], int(kv["psd.nfft"]),
                  float(kv["psd.overlap"]), str(kv["psd.window"]))
    am = None
    if (d / (prefix + AM_FILE)).exists():
        cols = _read_columns(d / (prefix + AM_FILE))
        am = AmCurves(cols["amp_in"], cols["gain_db"], cols["phase_deg"])
    meta = {k[5:]: v for k, v in kv.items() if k.startswith("meta.")}
    return MetricsReport(kv["nmse_db"], kv["acpr_left_dbc"], kv["acpr_right_dbc"], kv["evm_db"],
                         psd=psd, am=am, meta=meta)


# --- run records -----------------------------------------------------------------

def save_history(history: list[dict], path) -> None:
    if not history:
        Path(path).write_text("")
        return
    keys = list(history[0])
    _write_rows(path, keys, [[r[k] for r in history] for k in keys])


def load_history(path) -> list[dict]:
    if not Path(path).read_text().strip():
        return []
    cols = _read_columns(path)
    n = len(next(iter(cols.values())))
    return [{k: (int(v[i]) if k == "epoch" else float(v[i])) for k, v in cols.items()}
            for i in range(n)]


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, (np.ndarray, tuple)):
        return list(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")
