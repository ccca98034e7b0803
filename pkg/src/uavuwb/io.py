"""Plain-text CSV formats.

Every file starts with a ``#``-prefixed header block of ``key: value`` lines
(format version, units, provenance), followed by one column-name line and
the data rows. Floats are written with 9 significant digits.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    BAND_HIGH_HZ,
    BAND_LOW_HZ,
    F_CENTER_HZ,
    MAX_TX_POWER_DBM,
    N_TOT,
    PULSE_REPETITION_HZ,
    T_S_NS,
    T_WINDOW_NS,
    Cir,
    EnvironmentClass,
    Geometry,
    ScanSet,
    ScenarioId,
    UavUwbError,
)
from .pathloss import PathLossSample

FORMAT_VERSION = "1"

RADIO_METADATA = {
    "band_hz": f"{BAND_LOW_HZ:.9g}-{BAND_HIGH_HZ:.9g}",
    "center_hz": f"{F_CENTER_HZ:.9g}",
    "pulse_repetition_hz": f"{PULSE_REPETITION_HZ:.9g}",
    "max_tx_power_dbm": f"{MAX_TX_POWER_DBM:.9g}",
}


class ParseError(UavUwbError, ValueError):
    def __init__(self, path, line: int, column: Optional[str], msg: str):
        where = f"{path}:{line}" + (f" column {column!r}" if column else "")
        super().__init__(f"{where}: {msg}")
        self.path, self.line, self.column = path, line, column


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{float(value):.9g}"
    return str(value)


def write_table(path, header: dict, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    buf = io.StringIO()
    meta = {"format_version": FORMAT_VERSION, **header}
    for k, v in meta.items():
        buf.write(f"# {k}: {fmt(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_table(path):
    """Return ``(header dict, column names, rows of strings)``."""
    path = Path(path)
    header, columns, rows = {}, None, []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                key, sep, value = line[1:].partition(":")
                if not sep:
                    raise ParseError(path, lineno, None, "header line without ':'")
                header[key.strip()] = value.strip()
                continue
            if not line.strip():
                continue
            fields = next(csv.reader([line]))
            if columns is None:
                columns = fields
                continue
            if len(fields) != len(columns):
                raise ParseError(path, lineno, None, f"expected {len(columns)} fields, got {len(fields)}")
            rows.append((lineno, fields))
    if columns is None:
        raise ParseError(path, 0, None, "missing column header")
    version = header.get("format_version")
    if version is not None and version != FORMAT_VERSION:
        raise ParseError(path, 1, None, f"unsupported format version {version!r}")
    return header, columns, rows


def _column(path, columns, rows, name, conv=float, optional=False):
    if name not in columns:
        if optional:
            return None
        raise ParseError(path, 0, name, "missing column")
    j = columns.index(name)
    out = []
    for lineno, fields in rows:
        try:
            out.append(conv(fields[j]))
        except ValueError:
            raise ParseError(path, lineno, name, f"cannot parse {fields[j]!r}") from None
    return out


def _header_float(path, header, key, default=None):
    if key not in header:
        if default is None:
            raise ParseError(path, 0, None, f"missing header key {key!r}")
        return default
    try:
        return float(header[key])
    except ValueError:
        raise ParseError(path, 0, None, f"bad header value for {key!r}") from None


# --- CIR -----------------------------------------------------------------

CIR_COLUMNS = ("tau_ns", "amplitude", "cluster")


def write_cir(path, cir: Cir, **meta) -> Path:
    header = {
        "kind": "cir",
        "units": "tau ns, amplitude linear",
        "t_s_ns": cir.t_s,
        "t_window_ns": cir.t_window,
        "n_tot": N_TOT,
        **meta,
        **RADIO_METADATA,
    }
    return write_table(path, header, CIR_COLUMNS, zip(cir.tau, cir.a, cir.cluster))


def read_cir(path) -> tuple[Cir, dict]:
    header, cols, rows = read_table(path)
    tau = _column(path, cols, rows, "tau_ns")
    a = _column(path, cols, rows, "amplitude")
    cl = _column(path, cols, rows, "cluster", int)
    t_s = _header_float(path, header, "t_s_ns", T_S_NS)
    t_w = _header_float(path, header, "t_window_ns", T_WINDOW_NS)
    try:
        cir = Cir(tau, a, cl, t_s=t_s, t_window=t_w)
    except ValueError as exc:
        raise ParseError(path, 0, None, str(exc)) from None
    return cir, header


# --- ensembles -------------------------------------------------------------

MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ("file", "seed", "stream", "group", "h_uav_m", "d_m", "h_gnd_m", "h_opt_m")


def write_manifest(directory, entries: Sequence[dict], **meta) -> Path:
    header = {"kind": "manifest", "count": len(entries), **meta}
    rows = ([e.get(c) for c in MANIFEST_COLUMNS] for e in entries)
    return write_table(Path(directory) / MANIFEST_NAME, header, MANIFEST_COLUMNS, rows)


def read_manifest(directory) -> tuple[dict, list[dict]]:
    path = Path(directory) / MANIFEST_NAME
    header, cols, rows = read_table(path)
    entries = []
    for lineno, fields in rows:
        e = dict(zip(cols, fields))
        try:
            for k in ("seed", "stream", "group"):
                e[k] = int(e[k]) if e.get(k) not in (None, "") else None
            for k in ("h_uav_m", "d_m", "h_gnd_m", "h_opt_m"):
                e[k] = float(e[k]) if e.get(k) not in (None, "") else None
        except ValueError as exc:
            raise ParseError(path, lineno, None, str(exc)) from None
        entries.append(e)
    return header, entries


def entry_geometry(e: dict) -> Geometry:
    return Geometry(d=e["d_m"], h_uav=e["h_uav_m"], h_gnd=e["h_gnd_m"], h_opt=e["h_opt_m"])


def read_ensemble(directory):
    """Manifest header, entries and the CIRs they list, in manifest order."""
    header, entries = read_manifest(directory)
    cirs = [read_cir(Path(directory) / e["file"])[0] for e in entries]
    return header, entries, cirs


# --- scan sets -------------------------------------------------------------

def write_scanset(path, ss: ScanSet, **meta) -> Path:
    n = ss.scans.shape[1]
    tmpl = np.zeros(n)
    tmpl[: min(n, ss.template.size)] = ss.template[:n]
    g = ss.geometry
    header = {
        "kind": "scanset",
        "units": "t ns, samples linear",
        "t_s_ns": ss.t_s,
        "n_tot": ss.n_tot,
        "template_samples": ss.template.size,
        "env": ss.env.value if ss.env else None,
        "scenario": ss.scenario.key if ss.scenario else None,
        "d_m": g.d if g else None,
        "h_uav_m": g.h_uav if g else None,
        "h_gnd_m": g.h_gnd if g else None,
        **meta,
        **RADIO_METADATA,
    }
    cols = ["t_ns", "template"] + [f"scan_{k}" for k in range(ss.n_tot)]
    rows = (
        [i * ss.t_s, tmpl[i], *ss.scans[:, i]] for i in range(n)
    )
    return write_table(path, header, cols, rows)


def read_scanset(path) -> ScanSet:
    header, cols, rows = read_table(path)
    if header.get("kind") not in (None, "scanset"):
        raise ParseError(path, 0, None, f"not a scan set (kind={header.get('kind')!r})")
    tmpl = np.array(_column(path, cols, rows, "template"))
    L = int(_header_float(path, header, "template_samples", float(tmpl.size)))
    scan_cols = [c for c in cols if c.startswith("scan_")]
    if not scan_cols:
        raise ParseError(path, 0, "scan_0", "no scan columns")
    scans = np.array([_column(path, cols, rows, c) for c in scan_cols])
    geom = None
    if header.get("d_m") and header.get("h_uav_m"):
        geom = Geometry(
            d=float(header["d_m"]),
            h_uav=float(header["h_uav_m"]),
            h_gnd=float(header.get("h_gnd_m") or 1.5),
        )
    env = EnvironmentClass.parse(header["env"]) if header.get("env") else None
    sc = ScenarioId.parse(header["scenario"]) if header.get("scenario") else None
    return ScanSet(scans, tmpl[:L], geom, env, sc, _header_float(path, header, "t_s_ns", T_S_NS))


# --- path loss samples -----------------------------------------------------

PATHLOSS_COLUMNS = ("env", "scenario", "v_mph", "d_m", "pl_db")


def write_pathloss_samples(path, samples: Iterable[PathLossSample], **meta) -> Path:
    rows = (
        (s.env.value if s.env else "", s.scenario.key if s.scenario else "", s.v_mph, s.d, s.pl_db)
        for s in samples
    )
    return write_table(path, {"kind": "pathloss", "units": "d m, pl dB", **meta}, PATHLOSS_COLUMNS, rows)


def read_pathloss_samples(path) -> list[PathLossSample]:
    _, cols, rows = read_table(path)
    out = []
    j = {c: cols.index(c) for c in PATHLOSS_COLUMNS if c in cols}
    for c in ("d_m", "pl_db"):
        if c not in j:
            raise ParseError(path, 0, c, "missing column")
    for lineno, f in rows:
        try:
            env = EnvironmentClass.parse(f[j["env"]]) if "env" in j and f[j["env"]] else None
            sc = ScenarioId.parse(f[j["scenario"]]) if "scenario" in j and f[j["scenario"]] else None
        except ValueError as exc:
            raise ParseError(path, lineno, None, str(exc)) from None
        vals = {}
        for c in ("v_mph", "d_m", "pl_db"):
            if c not in j:
                continue
            try:
                vals[c] = (int if c == "v_mph" else float)(f[j[c]] or 0)
            except ValueError:
                raise ParseError(path, lineno, c, f"cannot parse {f[j[c]]!r}") from None
        try:
            out.append(PathLossSample(vals["d_m"], vals["pl_db"], env, sc, vals.get("v_mph", 0)))
        except ValueError as exc:
            raise ParseError(path, lineno, None, str(exc)) from None
    return out


# --- analysis outputs ------------------------------------------------------

def write_pdp(path, pdp, **meta) -> Path:
    return write_table(path, {"kind": "pdp", "units": "delay ns, power linear", **meta},
                       ("delay_ns", "power"), zip(pdp.t, pdp.p))


def write_cfr(path, cfr, band=(BAND_LOW_HZ, BAND_HIGH_HZ), **meta) -> Path:
    f = cfr.rf_freqs
    sel = (f >= band[0]) & (f <= band[1])
    return write_table(path, {"kind": "cfr", "units": "freq Hz (RF), magnitude dB", **meta},
                       ("freq_hz", "mag_db"), zip(f[sel], cfr.mag_db[sel]))


STATS_COLUMNS = ("height_m", "scenario", "t_mean_ns", "t_rms_ns", "cb_hz")


def write_delay_stats(path, rows, **meta) -> Path:
    return write_table(path, {"kind": "delay_stats", "units": "ns, Hz", **meta}, STATS_COLUMNS, rows)


def read_delay_stats(path) -> list[dict]:
    _, cols, rows = read_table(path)
    out = []
    for lineno, f in rows:
        d = dict(zip(cols, f))
        try:
            out.append({
                "height_m": float(d["height_m"]) if d["height_m"] else None,
                "scenario": d["scenario"],
                "t_mean_ns": float(d["t_mean_ns"]),
                "t_rms_ns": float(d["t_rms_ns"]),
                "cb_hz": float(d["cb_hz"]),
            })
        except (KeyError, ValueError) as exc:
            raise ParseError(path, lineno, None, str(exc)) from None
    return out


def write_toa_cdf(path, toa, cdf, **meta) -> Path:
    return write_table(path, {"kind": "toa_cdf", "units": "ns", **meta}, ("toa_ns", "cdf"), zip(toa, cdf))


def write_subband(path, stats, **meta) -> Path:
    return write_table(path, {"kind": "subband", "units": "Hz, dB, dB^2", **meta},
                       ("center_hz", "mean_db", "var_db2"), stats)


def write_presets(path, rows, columns) -> Path:
    return write_table(path, {"kind": "presets"}, columns, ([r.get(c) for c in columns] for r in rows))


# --- fit reports -------------------------------------------------------------

#: (report field, preset attribute path, label, relative tolerance for --truth runs)
FIT_FIELDS = (
    ("alpha_hat", "pl.alpha", "alpha", None),
    ("pl0_hat", "pl.pl0_db", "PL0 (dB)", None),
    ("sigma_hat", "pl.sigma_db", "sigma (dB)", None),
    ("c_bar_hat", "sv.c_bar", "C_bar", None),
    ("Lambda_hat", "sv.Lambda", "Lambda (1/ns)", 0.10),
    ("lambda_hat", "sv.lam", "lambda (1/ns)", 0.10),
    ("mu_hat", "sv.mu", "mu (ns)", 0.15),
    ("beta_hat", "sv.beta", "beta (ns)", 0.15),
    ("eta_hat", "nak.eta", "eta (dB)", 0.15),
    ("xi_hat", "nak.xi", "xi", 0.15),
    ("m0_hat", None, "m0", None),
    ("v0_hat", None, "v0", None),
)
FIT_COLUMNS = ("parameter", "estimate", "truth", "rel_error", "tolerance", "within_tolerance")


def _truth_value(preset, attr):
    if preset is None or attr is None:
        return None
    obj = preset
    for part in attr.split("."):
        obj = getattr(obj, part)
    return float(obj)


def fit_rows(report, truth=None) -> list[tuple]:
    rows = []
    for name, attr, _, tol in FIT_FIELDS:
        est = getattr(report, name)
        tv = _truth_value(truth, attr)
        err = (est - tv) / tv if (est is not None and tv) else None
        ok = None if (err is None or tol is None) else abs(err) <= tol
        rows.append((name, est, tv, err, tol if truth is not None else None, ok))
    return rows


def write_fit_report(directory, report, truth=None, **meta) -> tuple[Path, Path]:
    directory = Path(directory)
    header = {"kind": "fit_report", "label_source": report.label_source,
              "truth": truth.key if truth is not None else None, **meta}
    for k, v in sorted(report.diagnostics.items()):
        header[f"diag_{k}"] = v if not isinstance(v, dict) else ";".join(f"{a}={b}" for a, b in v.items())
    rows = fit_rows(report, truth)
    csv_path = write_table(directory / "fit_report.csv", header, FIT_COLUMNS, rows)
    txt_path = directory / "fit_report.txt"
    txt_path.write_text(format_fit_table(report, truth))
    return csv_path, txt_path


def format_fit_table(report, truth=None) -> str:
    groups = (
        ("Path loss", ("alpha_hat", "pl0_hat", "sigma_hat")),
        ("PDP", ("c_bar_hat", "Lambda_hat", "lambda_hat", "mu_hat", "beta_hat")),
        ("Small scale fading", ("eta_hat", "xi_hat", "m0_hat", "v0_hat")),
    )
    labels = {f[0]: f[2] for f in FIT_FIELDS}
    by_name = {r[0]: r for r in fit_rows(report, truth)}
    lines = [f"label source: {report.label_source}"]
    if truth is not None:
        lines.append(f"truth preset: {truth.key}")
    head = f"{'Parameter':<16}{'Estimate':>12}" + (f"{'Table':>12}{'Error %':>10}" if truth else "")
    for title, names in groups:
        lines += ["", title, head, "-" * len(head)]
        for n in names:
            _, est, tv, err, _, _ = by_name[n]
            line = f"{labels[n]:<16}{fmt(est) or '-':>12}"
            if truth is not None:
                line += f"{fmt(tv) or '-':>12}{(f'{100 * err:+.1f}' if err is not None else '-'):>10}"
            lines.append(line)
    if report.diagnostics:
        lines += ["", "Diagnostics"]
        lines += [f"  {k}: {v}" for k, v in sorted(report.diagnostics.items())]
    return "\n".join(lines) + "\n"
