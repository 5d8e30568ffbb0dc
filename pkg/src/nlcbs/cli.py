"""Command-line driver: parameter sweeps, CSV tables and SVG plots.

Usage::

    cbs <mode|preset> --config <file> --seed <u64> --out <dir> [--samples N] [--workers N]

Configuration files are line oriented::

    # comment
    mode = scalar
    b = 0.5, 1, 2          # lists are comma separated
    delta = 0

Every list-valued parameter spans one axis of the sweep; the sweep is the
Cartesian product in the order channel, b, delta, s. The ``x`` key selects
the plotted axis and ``plot`` the plotted columns.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__, dipoles, montecarlo, rt, scalar
from .core import Channel, MediumParams

logger = logging.getLogger("nlcbs")

MODES = ("scalar", "vectorial", "classical", "spectrum")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
VALIDITY_BOUND = 0.1

DEFAULT_SAMPLES = {"scalar": 0, "vectorial": 1_000_000, "classical": 2000, "spectrum": 200_000}
DEFAULT_PLOT = {
    "scalar": ("gamma_L", "gamma_C"),
    "vectorial": ("gamma_L", "gamma_C"),
    "classical": ("crossed_slope", "predicted", "predicted_without_df"),
    "spectrum": ("eta",),
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


# --- configuration ---------------------------------------------------------------

def _float(v):
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("value must be finite")
    return x


def _int(v):
    x = int(v, 0)
    if x < 0:
        raise ValueError("value must be non-negative")
    return x


def _channel(v):
    return Channel.parse(v).value


def _bool(v):
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _word(v):
    return v


# key -> (converter, is_list)
KEYS = {
    "mode": (_word, False),
    "channel": (_channel, True),
    "b": (_float, True),
    "delta": (_float, True),
    "s": (_float, True),
    "delta_p": (_float, True),
    "samples": (_int, False),
    "seed": (_int, False),
    "workers": (_int, False),
    "n_nodes": (_int, False),
    "scatterers": (_int, False),
    "inelastic": (_bool, False),
    "x": (_word, False),
    "plot": (_word, True),
}
SWEEP_KEYS = ("channel", "b", "delta", "s")
X_KEYS = ("b", "delta", "s", "delta_p")


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration."""

    mode: str
    channel: tuple = ("scalar",)
    b: tuple = (0.5,)
    delta: tuple = (0.0,)
    s: tuple = (0.01,)
    delta_p: tuple = ()
    samples: int | None = None
    seed: int | None = None
    workers: int = 1
    n_nodes: int = rt.DEFAULT_NODES
    scatterers: int = 500
    inelastic: bool = True
    x: str | None = None
    plot: tuple = ()

    @property
    def n_samples(self) -> int:
        return self.samples if self.samples is not None else DEFAULT_SAMPLES[self.mode]

    @property
    def stochastic(self) -> bool:
        return self.mode in ("vectorial", "classical") or (
            self.mode == "spectrum" and any(c != "scalar" for c in self.channel))

    @property
    def x_axis(self) -> str:
        if self.x:
            return self.x
        if self.mode == "spectrum":
            return "delta_p"
        # channel is not numeric; several channels become separate series
        for k in ("b", "delta", "s"):
            if len(getattr(self, k)) > 1:
                return k
        return "b"

    @property
    def plot_columns(self) -> tuple:
        return self.plot or DEFAULT_PLOT[self.mode]

    def canonical(self) -> str:
        """Stable text form; its hash identifies the run."""
        lines = []
        for k in KEYS:
            v = getattr(self, k)
            if isinstance(v, tuple):
                v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def points(self):
        """Sweep points as dicts, in the fixed nesting order."""
        axes = [getattr(self, k) for k in SWEEP_KEYS]
        return [dict(zip(SWEEP_KEYS, p)) for p in itertools.product(*axes)]


def parse_config(text: str, *, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` text into a RunConfig.

    All problems are collected and raised together in a ConfigError, each
    prefixed with its line number.
    """
    errors, values, seen = [], {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            errors.append(f"line {lineno}: unknown key {key!r} (allowed: {', '.join(KEYS)})")
            continue
        if key in seen:
            errors.append(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
            continue
        seen[key] = lineno
        conv, is_list = KEYS[key]
        items = [v.strip() for v in value.split(",")] if is_list else [value]
        if not value or any(not v for v in items):
            errors.append(f"line {lineno}: empty value for {key!r}")
            continue
        try:
            parsed = tuple(conv(v) for v in items)
        except ValueError as exc:
            errors.append(f"line {lineno}: cannot parse {key} = {value!r}: {exc}")
            continue
        values[key] = parsed if is_list else parsed[0]
        if key == "mode" and values[key] not in MODES:
            errors.append(f"line {lineno}: mode must be one of {', '.join(MODES)}, "
                          f"got {value!r}")
            del values[key]
    if base is None and "mode" not in values and not any("mode" in e for e in errors):
        errors.append("line 0: missing required key 'mode'")
    if errors:
        raise ConfigError(errors)
    cfg = replace(base, **values) if base is not None else _with_defaults(values)
    problems = validate(cfg, seen)
    if problems:
        raise ConfigError(problems)
    return cfg


def _with_defaults(values):
    cfg = RunConfig(**values)
    if cfg.mode == "vectorial" and "channel" not in values:
        cfg = replace(cfg, channel=("hh",))
    return cfg


def validate(cfg: RunConfig, lines=None) -> list:
    lines = lines or {}

    def at(key):
        return f"line {lines.get(key, 0)}"

    out = []
    if cfg.mode not in MODES:
        out.append(f"{at('mode')}: mode must be one of {', '.join(MODES)}")
        return out
    if any(not v > 0 for v in cfg.b):
        out.append(f"{at('b')}: optical thickness must be > 0")
    if any(v < 0 for v in cfg.s):
        out.append(f"{at('s')}: saturation must be >= 0")
    if cfg.mode == "scalar" and any(c != "scalar" for c in cfg.channel):
        out.append(f"{at('channel')}: mode scalar only supports channel = scalar "
                   "(use mode vectorial for hh)")
    if cfg.mode == "spectrum" and not cfg.delta_p:
        out.append(f"{at('delta_p')}: mode spectrum needs a delta_p list")
    if cfg.mode == "classical":
        if any(c != "scalar" for c in cfg.channel):
            out.append(f"{at('channel')}: the coupled-dipole model is scalar")
        if not 1 <= cfg.scatterers <= dipoles.MAX_SCATTERERS:
            out.append(f"{at('scatterers')}: must be in [1, {dipoles.MAX_SCATTERERS}]")
        if cfg.n_samples < 2:
            out.append(f"{at('samples')}: need at least 2 realizations")
    if cfg.mode in ("vectorial", "spectrum") and cfg.stochastic and cfg.n_samples < 2:
        out.append(f"{at('samples')}: need at least 2 samples")
    if cfg.stochastic and cfg.seed is None:
        out.append(f"{at('seed')}: a seed is required for stochastic modes")
    if cfg.n_nodes < 3:
        out.append(f"{at('n_nodes')}: need at least 3 nodes")
    if cfg.x is not None and cfg.x not in X_KEYS:
        out.append(f"{at('x')}: x must be one of {', '.join(X_KEYS)}")
    return out


# --- presets ---------------------------------------------------------------------

def _grid(lo, hi, step):
    n = int(round((hi - lo) / step))
    return ", ".join(repr(round(lo + k * step, 10)) for k in range(n + 1))


# Runtimes are for one core of a current desktop (measured on the reference
# machine; they scale linearly with --samples).
PRESETS = {
    # inelastic slopes vs laser detuning at b = 0.5 (~4 min)
    "fig9": [
        f"mode = scalar\nb = 0.5\ndelta = {_grid(0, 3, 0.25)}\nx = delta\n"
        "plot = gamma_L_in, gamma_C_in",
        f"mode = vectorial\nchannel = hh\nb = 0.5\ndelta = {_grid(0, 3, 0.25)}\n"
        "samples = 1000000\nx = delta\nplot = gamma_L_in, gamma_C_in",
    ],
    # elastic and inelastic slopes vs optical thickness at delta = 0 (~6 min)
    "fig10": [
        "mode = scalar\nb = 0.25, 0.5, 0.75, 1, 1.5, 2, 3\ndelta = 0\nx = b\n"
        "plot = gamma_L_el, gamma_C_el, gamma_L_in, gamma_C_in",
        "mode = vectorial\nchannel = hh\nb = 0.25, 0.5, 0.75, 1, 1.5, 2, 3\ndelta = 0\n"
        "samples = 300000\nx = b\nplot = gamma_L_el, gamma_C_el, gamma_L_in, gamma_C_in",
    ],
    # slope of the enhancement factor: both sweeps above (~10 min)
    "fig11": [
        f"mode = scalar\nb = 0.5\ndelta = {_grid(0, 3, 0.25)}\nx = delta\nplot = eta_slope",
        f"mode = vectorial\nchannel = hh\nb = 0.5\ndelta = {_grid(0, 3, 0.25)}\n"
        "samples = 1000000\nx = delta\nplot = eta_slope",
        "mode = scalar\nb = 0.25, 0.5, 0.75, 1, 1.5, 2, 3\ndelta = 0\nx = b\nplot = eta_slope",
        "mode = vectorial\nchannel = hh\nb = 0.25, 0.5, 0.75, 1, 1.5, 2, 3\ndelta = 0\n"
        "samples = 300000\nx = b\nplot = eta_slope",
    ],
    # spectral enhancement factor at delta = 0 (~6 min)
    "fig12": [
        f"mode = spectrum\nchannel = scalar, hh\nb = 0.5, 1, 2\ndelta = 0\n"
        f"delta_p = {_grid(-3, 3, 0.25)}\nsamples = 200000",
    ],
    # spectral enhancement factor at delta = 1 (~6 min)
    "fig13": [
        f"mode = spectrum\nchannel = scalar, hh\nb = 0.5, 1, 2\ndelta = 1\n"
        f"delta_p = {_grid(-2, 4, 0.25)}\nsamples = 200000",
    ],
}


def preset_configs(name: str, overrides: str = "") -> list:
    """Configs of a preset; ``overrides`` (config text) applies to each part."""
    extra = [ln for ln in overrides.splitlines() if ln.split("#", 1)[0].strip()]
    return [parse_config(_merge_text(text, extra)) for text in PRESETS[name]]


# --- evaluation ------------------------------------------------------------------

BREAKDOWN_FIELDS = ("L_el_1", "C_el_1", "S_el_1", "L_el_2_scatt", "C_el_2_scatt", "L_in_2",
                    "C_in_2", "L_el_2_prop", "C_el_2_prop")
ERROR_FIELDS = tuple(f for f in BREAKDOWN_FIELDS if f != "S_el_1")
DERIVED_FIELDS = ("gamma_L", "gamma_C", "gamma_L_el", "gamma_C_el", "gamma_L_in", "gamma_C_in",
                  "eta_linear", "eta_slope", "eta")
BREAKDOWN_COLUMNS = (("mode", "channel", "b", "delta", "s") + BREAKDOWN_FIELDS + DERIVED_FIELDS
                     + tuple(f + "_err" for f in ERROR_FIELDS)
                     + ("gamma_L_err", "gamma_C_err", "eta_slope_err", "samples"))
SPECTRUM_COLUMNS = ("mode", "channel", "b", "delta", "delta_p", "ladder_density",
                    "crossed_density", "eta", "ladder_density_err", "crossed_density_err",
                    "eta_err", "samples")
CLASSICAL_COLUMNS = ("mode", "channel", "b", "scatterers", "kl", "background", "background_err",
                     "peak", "peak_err", "eta", "eta_err", "crossed_slope", "crossed_slope_err",
                     "predicted", "predicted_without_df", "samples")


def columns(mode: str) -> tuple:
    if mode in ("scalar", "vectorial"):
        return BREAKDOWN_COLUMNS
    return SPECTRUM_COLUMNS if mode == "spectrum" else CLASSICAL_COLUMNS


def _breakdown_row(cfg, pt, bd, samples):
    g = bd.gammas()
    errors = {f + "_err": bd.mc_errors.get(f, 0.0) for f in ERROR_FIELDS}
    if bd.mc_errors:
        parts = ("scatt", "in", "prop") if cfg.inelastic else ("scatt", "prop")
        gl, gc = (montecarlo.gamma_error(bd, w, parts) for w in ("L", "C"))
    else:
        gl = gc = 0.0
    row = dict(mode=cfg.mode, channel=pt["channel"], b=pt["b"], delta=pt["delta"], s=pt["s"])
    row.update({f: getattr(bd, f) for f in BREAKDOWN_FIELDS})
    row.update(gamma_L=bd.gamma_L, gamma_C=bd.gamma_C,
               gamma_L_el=g["L_el_scatt"] + g["L_el_prop"],
               gamma_C_el=g["C_el_scatt"] + g["C_el_prop"],
               gamma_L_in=g["L_in"], gamma_C_in=g["C_in"],
               eta_linear=bd.eta_linear, eta_slope=bd.eta_slope, eta=bd.eta(pt["s"]))
    row.update(errors)
    row.update(gamma_L_err=gl, gamma_C_err=gc,
               eta_slope_err=(bd.eta_linear - 1.0) * math.hypot(gl, gc), samples=samples)
    return [row]


def _point_seed(cfg, index):
    return montecarlo._spawn(cfg.seed or 0, index)


def evaluate_point(cfg: RunConfig, index: int, pt: dict) -> list:
    """Rows of one sweep point (several for spectrum mode)."""
    params = MediumParams(pt["delta"], pt["b"], pt["s"], pt["channel"])
    seed = _point_seed(cfg, index)
    if cfg.mode == "scalar":
        bd = scalar.assemble(params, cfg.n_nodes)
        return _breakdown_row(cfg, pt, bd, 0)
    if cfg.mode == "vectorial":
        bd = montecarlo.vectorial_breakdown(params, cfg.n_samples, seed,
                                            inelastic=cfg.inelastic)
        if not cfg.inelastic:
            bd.L_in_2 = bd.C_in_2 = 0.0
            bd.mc_errors.update(L_in_2=0.0, C_in_2=0.0)
        return _breakdown_row(cfg, pt, bd, cfg.n_samples)
    if cfg.mode == "spectrum":
        if params.channel is Channel.SCALAR:
            curve = scalar.spectral_enhancement(params, cfg.delta_p, cfg.n_nodes)
            samples = 0
            lerr = cerr = np.zeros(len(cfg.delta_p))
        else:
            curve = montecarlo.spectral_enhancement_mc(params, cfg.delta_p, cfg.n_samples, seed)
            samples = cfg.n_samples
            lerr, cerr = curve.ladder_error, curve.crossed_error
        eta_err = curve.eta_error
        return [dict(mode=cfg.mode, channel=pt["channel"], b=pt["b"], delta=pt["delta"],
                     delta_p=float(dp), ladder_density=float(curve.ladder_density[k]),
                     crossed_density=float(curve.crossed_density[k]), eta=float(curve.eta[k]),
                     ladder_density_err=float(lerr[k]), crossed_density_err=float(cerr[k]),
                     eta_err=float(eta_err[k]), samples=samples)
                for k, dp in enumerate(curve.detuning)]
    # classical
    bg, pk, ens = dipoles.ensemble_backscatter(cfg.scatterers, pt["b"], cfg.n_samples, seed)
    kl = dipoles.cloud_geometry(cfg.scatterers, pt["b"])[0] / pt["b"]
    eta = ens.enhancement(0)
    slope = ens.crossed_slope()
    return [dict(mode=cfg.mode, channel=pt["channel"], b=pt["b"], scatterers=cfg.scatterers,
                 kl=kl, background=bg.mean, background_err=bg.std_error, peak=pk.mean,
                 peak_err=pk.std_error, eta=eta.mean, eta_err=eta.std_error,
                 crossed_slope=slope.mean, crossed_slope_err=slope.std_error,
                 predicted=dipoles.predicted_crossed_slope(pt["b"], kl),
                 predicted_without_df=dipoles.predicted_crossed_slope(
                     pt["b"], kl, reversed_propagation=False),
                 samples=cfg.n_samples)]


def _job(args):
    cfg, index, pt = args
    t0 = time.perf_counter()
    try:
        rows = evaluate_point(cfg, index, pt)
    except (rt.ConvergenceError, dipoles.DipoleConvergenceError, FloatingPointError) as exc:
        raise NumericalFailure(f"{cfg.mode} at {pt}: {exc}") from None
    return rows, time.perf_counter() - t0


class NumericalFailure(RuntimeError):
    """A solver failed at one sweep point."""


def check_validity(cfg: RunConfig):
    """Warn for sweep points outside the perturbative regime s b^2 << 1."""
    for b in cfg.b:
        for s in cfg.s:
            if s * b * b > VALIDITY_BOUND:
                warnings.warn(f"s*b^2 = {s * b * b:.3g} > {VALIDITY_BOUND} at b={b}, s={s}: "
                              "first-order results need s*b^2 << 1", stacklevel=2)


# --- output ----------------------------------------------------------------------

def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def parse_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


class CsvWriter:
    """Append rows to a CSV with a provenance comment header, flushing each row."""

    def __init__(self, path, cols, provenance: dict):
        self.path = Path(path)
        self.cols = tuple(cols)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        for k, v in provenance.items():
            self._fh.write(f"# {k}: {v}\n")
        self._w = csv.writer(self._fh, lineterminator="\r\n")
        self._w.writerow(self.cols)
        self._fh.flush()

    def write(self, row: dict):
        missing = [c for c in self.cols if c not in row]
        if missing:
            raise ValueError(f"row misses columns {missing}")
        self._w.writerow([format_value(row[c]) for c in self.cols])
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def emit_csv(rows, path, provenance: dict | None = None, cols=None):
    """Write ``rows`` (dicts) to ``path`` in one go."""
    if not rows:
        raise ValueError("no rows to write")
    cols = cols or tuple(rows[0])
    with CsvWriter(path, cols, provenance or {}) as w:
        for r in rows:
            w.write(r)


def read_csv(path) -> list:
    """Rows of a CSV written by this module, values converted back to numbers."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    return [{k: parse_value(v) for k, v in r.items()} for r in reader]


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
          "#17becf")


def emit_svg(rows, path, x: str, ys, group_by=(), title: str = ""):
    """Line plot of columns ``ys`` against ``x``, one line per series.

    Only the root element and the text labels have content; all graphic
    elements are self-closed.
    """
    if not rows:
        raise ValueError("no rows to plot")
    series = {}
    for r in rows:
        key = tuple((g, r[g]) for g in group_by)
        for y in ys:
            v = r.get(y)
            if v is None or not math.isfinite(float(v)):
                continue
            series.setdefault((key, y), []).append((float(r[x]), float(v)))
    pts = [p for s in series.values() for p in s]
    if not pts:
        raise ValueError("nothing finite to plot")
    xs, vs = zip(*pts)
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(vs), max(vs)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    w, h, ml, mr, mt, mb = 720, 480, 70, 190, 30, 50
    pw, ph = w - ml - mr, h - mt - mb

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" '
           f'viewBox="0 0 {w} {h}">',
           f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{mt + ph}" x2="{px(t):.2f}" y2="{mt + ph + 5}" '
                   'stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{mt + ph + 18}" font-size="11" '
                   f'text-anchor="middle">{_esc(format(t, ".4g"))}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ml - 5}" y1="{py(t):.2f}" x2="{ml}" y2="{py(t):.2f}" '
                   'stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{py(t) + 4:.2f}" font-size="11" '
                   f'text-anchor="end">{_esc(format(t, ".4g"))}</text>')
    if y0 < 0 < y1:
        out.append(f'<line x1="{ml}" y1="{py(0):.2f}" x2="{ml + pw}" y2="{py(0):.2f}" '
                   'stroke="#999999" stroke-dasharray="4,3"/>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{h - 10}" font-size="13" '
               f'text-anchor="middle">{_esc(x)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{_esc(", ".join(ys))}</text>')
    if title:
        out.append(f'<text x="{ml + pw / 2:.1f}" y="18" font-size="13" '
                   f'text-anchor="middle">{_esc(title)}</text>')
    for k, ((key, y), p) in enumerate(series.items()):
        p.sort()
        color = COLORS[k % len(COLORS)]
        coords = " ".join(f"{px(a):.2f},{py(v):.2f}" for a, v in p)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   'stroke-width="1.5"/>')
        for a, v in p:
            out.append(f'<circle cx="{px(a):.2f}" cy="{py(v):.2f}" r="2.5" fill="{color}"/>')
        label = " ".join([y] + [f"{g}={format_value(v)}" for g, v in key])
        ly = mt + 14 + 16 * k
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly}" font-size="11">{_esc(label)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


# --- driver ----------------------------------------------------------------------

def provenance(configs, name: str) -> dict:
    digest = hashlib.sha256("".join(c.canonical() for c in configs).encode()).hexdigest()
    return {
        "run": name,
        "config_sha256": digest,
        "seed": configs[0].seed if configs[0].seed is not None else "none",
        "artifact": __version__,
        "numpy": np.__version__,
        "samples": ", ".join(str(c.n_samples) for c in configs),
        "n_nodes": ", ".join(str(c.n_nodes) for c in configs),
    }


def run_figure(configs, out_dir=None, *, workers: int = 1, name: str = "run") -> list:
    """Evaluate every sweep point of ``configs`` in order.

    With ``out_dir`` the rows are appended to ``results.csv`` as soon as
    they are available (in sweep order, whatever the number of workers),
    wall times go to ``timings.csv`` and a plot to ``results.svg``.
    """
    if isinstance(configs, RunConfig):
        configs = [configs]
    cols = columns(configs[0].mode)
    if any(columns(c.mode) != cols for c in configs):
        raise ConfigError(["line 0: all parts of a run must produce the same columns"])
    for c in configs:
        check_validity(c)
    jobs = [(c, i, pt) for c in configs for i, pt in enumerate(c.points())]
    writer = timer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        prov = provenance(configs, name)
        writer = CsvWriter(out_dir / "results.csv", cols, prov)
        timer = CsvWriter(out_dir / "timings.csv", ("index", "mode", "point", "wall_time_s"),
                          {"config_sha256": prov["config_sha256"]})
        (out_dir / "config.txt").write_text("\n".join(c.canonical() for c in configs),
                                            encoding="utf-8")
    rows = []
    try:
        if workers > 1:
            ex = ProcessPoolExecutor(workers)
            results = ex.map(_job, jobs)
        else:
            ex = None
            results = map(_job, jobs)
        for k, ((cfg, _, pt), (new, wall)) in enumerate(zip(jobs, results)):
            logger.info("point %d/%d %s %s done in %.1f s", k + 1, len(jobs), cfg.mode, pt, wall)
            for r in new:
                rows.append(r)
                if writer:
                    writer.write(r)
            if timer:
                timer.write(dict(index=k, mode=cfg.mode,
                                 point=" ".join(f"{a}={format_value(v)}" for a, v in pt.items()),
                                 wall_time_s=wall))
        if ex is not None:
            ex.shutdown()
    finally:
        if writer:
            writer.close()
            timer.close()
    if out_dir is not None:
        _plot(configs, rows, out_dir / "results.svg", name)
    return rows


def _plot(configs, rows, path, name):
    cfg = configs[0]
    x = cfg.x_axis
    group = [k for k in ("mode", "channel", "b", "delta", "s")
             if k != x and len({r.get(k) for r in rows}) > 1]
    emit_svg(rows, path, x, cfg.plot_columns, group, title=name)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cbs", description="Weakly nonlinear coherent backscattering from a slab.")
    p.add_argument("target", help=f"mode ({', '.join(MODES)}) or preset "
                                  f"({', '.join(PRESETS)})")
    p.add_argument("--config", type=Path, help="configuration file (required for modes)")
    p.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--samples", type=int, help="samples per estimator / realizations")
    p.add_argument("--workers", type=int, default=1, help="parallel sweep points")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args) -> list:
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError([f"line 0: cannot read config: {exc}"]) from None
    extra = []
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError(["line 0: --seed must be an unsigned 64-bit integer"])
        extra.append(f"seed = {args.seed}")
    if args.samples is not None:
        if args.samples < 1:
            raise ConfigError(["line 0: --samples must be positive"])
        extra.append(f"samples = {args.samples}")
    if args.target in PRESETS:
        overrides = _merge_text(text, extra)
        return preset_configs(args.target, overrides)
    if args.target not in MODES:
        raise ConfigError([f"line 0: unknown mode or preset {args.target!r} "
                           f"(modes: {', '.join(MODES)}; presets: {', '.join(PRESETS)})"])
    if args.config is None:
        raise ConfigError(["line 0: --config is required for a mode run"])
    cfg = parse_config(text)
    if cfg.mode != args.target:
        raise ConfigError([f"line 0: config mode {cfg.mode!r} does not match {args.target!r}"])
    if extra:
        cfg = parse_config("\n".join(extra), base=cfg)
    return [cfg]


def _merge_text(text, extra):
    # command-line values replace the same keys of the file
    keys = {e.split("=")[0].strip() for e in extra}
    kept = [ln for ln in text.splitlines()
            if ln.split("#", 1)[0].split("=")[0].strip() not in keys]
    return "\n".join(kept + extra)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    try:
        configs = _load(args)
        rows = run_figure(configs, args.out, workers=max(1, args.workers), name=args.target)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {len(rows)} rows to {args.out / 'results.csv'}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
