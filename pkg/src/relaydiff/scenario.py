"""Scenario configuration files and run output.

A scenario file is one YAML document::

    domain: {lo: 0.05, hi: 0.25}
    D: 1.0e-5
    grid: {n: 4000, grading: 4.0, fine_fraction: 0.1}
    initial:
      u0_kind: bump          # uniform | bump | custom-file
      eps: 3.0e-4
      v0: 3.0e-3
      w0: 0.2497
      r0: {fronts: [], upper_sign: 1}
    run: {T: 30.0, v_min: null, cadence: 0.05}
    tolerances: {dt_max: 1.0e-2}

Errors carry the file name and line of the offending entry.
"""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .hysteresis import SimpleConfig, StructureError
from .kernels import ThresholdDomain
from .solver import (Grid, InitialData, LoggedEvent, ModelParams, MonitorReport, Record, StopRule, SystemState,
                     TimeSeries, bump_profile, uniform_profile)


class ConfigError(ValueError):
    def __init__(self, msg: str, source: str = "<config>", line: int | None = None):
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {msg}")


class _LineDict(dict):
    line: int | None = None
    lines: dict = {}


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    m = _LineDict(loader.construct_mapping(node, deep=True))
    m.line = node.start_mark.line + 1
    m.lines = {k.value: k.start_mark.line + 1 for k, _ in node.value}
    return m


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)
# YAML 1.1 wants a dot in floats; accept "1e-5" as a number too
_LineLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:\d+\.?\d*|\.\d+)[eE][-+]?\d+$"),
    list("-+0123456789."))


def load_yaml(path) -> _LineDict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", str(path)) from None
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", str(path), mark.line + 1 if mark else None) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", str(path), 1)
    return doc


class _Section:
    """Typed access to one mapping with line-anchored errors."""

    def __init__(self, d, source: str, name: str, allowed: set[str], fallback_line: int | None = None):
        if d is None:
            # absent section: anchor diagnostics at the enclosing mapping
            d = _LineDict()
            d.line, d.lines = fallback_line, {}
        if not isinstance(d, dict):
            raise ConfigError(f"'{name}' must be a mapping", source, getattr(d, "line", None))
        self.d, self.source, self.name = d, source, name
        for k in d:
            if k not in allowed:
                raise ConfigError(f"unknown key '{k}' in '{name}' (allowed: {', '.join(sorted(allowed))})",
                                  source, self.line_of(k))

    def line_of(self, key):
        return getattr(self.d, "lines", {}).get(key, getattr(self.d, "line", None))

    def number(self, key, default=None, positive=False, optional=False):
        if key not in self.d or self.d[key] is None:
            if default is None and not optional:
                raise ConfigError(f"missing required key '{self._q(key)}'", self.source, getattr(self.d, "line", None))
            return default
        v = self.d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"'{self._q(key)}' must be a number, got {v!r}", self.source, self.line_of(key))
        v = float(v)
        if not math.isfinite(v) or (positive and v <= 0):
            raise ConfigError(f"'{self._q(key)}' must be {'positive' if positive else 'finite'}, got {v!r}",
                              self.source, self.line_of(key))
        return v

    def integer(self, key, default=None):
        v = self.d.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"'{self._q(key)}' must be an integer, got {v!r}", self.source, self.line_of(key))
        return v

    def _q(self, key):
        return f"{self.name}.{key}" if self.name else key

    def sub(self, key, allowed):
        return _Section(self.d.get(key), self.source, self._q(key), allowed, self.line_of(key))


@dataclass
class Scenario:
    params: ModelParams
    grid: Grid
    data: InitialData
    stop: StopRule
    cadence: float
    profile_cadence: float | None
    probes: list[float] | None
    name: str = "scenario"


def parse_scenario(doc, source: str = "<config>", base_dir: Path | None = None) -> Scenario:
    top = _Section(doc, source, "", {"name", "domain", "D", "grid", "initial", "run", "tolerances", "probes"})
    dom_s = top.sub("domain", {"lo", "hi"})
    try:
        domain = ThresholdDomain(dom_s.number("lo", 0.05), dom_s.number("hi", 0.25))
    except StructureError as exc:
        raise ConfigError(str(exc), source, top.line_of("domain")) from None
    D = top.number("D", positive=True)
    g = top.sub("grid", {"n", "grading", "fine_fraction"})
    tol = top.sub("tolerances", {"dt_init", "dt_max", "dU_max", "tol_event", "tol_series"})
    kw = {k: tol.number(k, positive=True, optional=True) for k in ("dt_init", "dt_max", "dU_max", "tol_event", "tol_series")}
    try:
        params = ModelParams(domain, D, grid_n=g.integer("n", 4000), grid_grading=g.number("grading", 4.0),
                             grid_fine_fraction=g.number("fine_fraction", 0.1),
                             **{k: v for k, v in kw.items() if v is not None})
        grid = params.make_grid()
    except StructureError as exc:
        raise ConfigError(str(exc), source, top.line_of("grid")) from None
    ini = top.sub("initial", {"u0_kind", "eps", "v0", "w0", "r0", "u0_file"})
    kind = ini.d.get("u0_kind", "bump")
    eps = ini.number("eps", optional=True)
    if kind == "bump":
        eps = eps if eps is not None else math.sqrt(D) / 10
        u0 = bump_profile(grid, eps)
    elif kind == "uniform":
        u0 = uniform_profile(grid)
    elif kind == "custom-file":
        if "u0_file" not in ini.d:
            raise ConfigError("u0_kind custom-file needs 'u0_file'", source, ini.line_of("u0_kind"))
        f = Path(ini.d["u0_file"])
        if not f.is_absolute() and base_dir is not None:
            f = base_dir / f
        try:
            xs, us = np.loadtxt(f, delimiter=",", unpack=True, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read u0_file: {exc}", source, ini.line_of("u0_file")) from None
        u0 = np.interp(grid.centers, xs, us)
    else:
        raise ConfigError(f"u0_kind must be uniform, bump or custom-file, got {kind!r}", source, ini.line_of("u0_kind"))
    mass = float(np.dot(u0, grid.widths))
    if abs(mass - 1.0) > 1e-8:
        raise ConfigError(f"initial density has mass {mass!r}, expected 1", source, ini.line_of("u0_kind"))
    v0 = ini.number("v0", 0.0)
    w0 = ini.number("w0", 0.0)
    if v0 < 0:
        raise ConfigError("initial.v0 must be nonnegative", source, ini.line_of("v0"))
    if abs(w0) > domain.hi:
        raise ConfigError(f"|initial.w0| = {abs(w0)} exceeds hi = {domain.hi}", source, ini.line_of("w0"))
    r0s = ini.sub("r0", {"fronts", "upper_sign"})
    try:
        r0 = SimpleConfig(domain.lo, domain.hi, tuple(r0s.d.get("fronts", []) or []), int(r0s.d.get("upper_sign", 1)))
    except (StructureError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid r0: {exc}", source, ini.line_of("r0")) from None
    rn = top.sub("run", {"T", "v_min", "cadence", "profile_cadence", "steady_steps", "steady_tol"})
    stop = StopRule(rn.number("T", positive=True), rn.number("v_min", optional=True),
                    rn.d.get("steady_steps"), rn.number("steady_tol", 1e-10))
    probes = doc.get("probes")
    if probes is not None and (not isinstance(probes, list) or not all(isinstance(p, (int, float)) for p in probes)):
        raise ConfigError("'probes' must be a list of thresholds", source, top.line_of("probes"))
    return Scenario(params, grid, InitialData(u0, v0, w0, r0, eps), stop, rn.number("cadence", 0.05, positive=True),
                    rn.number("profile_cadence", positive=True, optional=True), probes, str(doc.get("name", "scenario")))


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(load_yaml(path), str(path), path.parent)


# -- output --------------------------------------------------------------------

def _f(v) -> str:
    return "" if v is None else format(float(v), ".17g")


def write_series_csv(path, series: TimeSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "v", "w", "U_bar", "n_fronts", "leftmost_front"])
        for r in series.records:
            w.writerow([_f(r.t), _f(r.v), _f(r.w), _f(r.U_bar), r.cfg.n_fronts, _f(r.cfg.leftmost)])


def write_events_jsonl(path, series: TimeSeries) -> None:
    with open(path, "w") as fh:
        for e in series.events:
            fh.write(json.dumps(e.to_dict()) + "\n")


def write_profiles(out_dir, series: TimeSeries) -> list[Path]:
    out = []
    x = series.grid.centers
    for r in series.records:
        if r.u is None:
            continue
        p = Path(out_dir) / f"profile_{r.t:.6f}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "u", "r"])
            for xv, uv, rv in zip(x, r.u, r.cfg.sign_at(x)):
                w.writerow([_f(xv), _f(uv), int(rv)])
        out.append(p)
    return out


def save_series(out_dir, series: TimeSeries) -> None:
    """Write the human-readable outputs plus a reloadable archive."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_series_csv(out_dir / "series.csv", series)
    write_events_jsonl(out_dir / "events.jsonl", series)
    write_profiles(out_dir, series)
    p = series.params
    init = series.initial
    meta = {
        "params": {"lo": p.domain.lo, "hi": p.domain.hi, "D": p.D, "grid_n": p.grid_n, "grid_grading": p.grid_grading,
                   "grid_fine_fraction": p.grid_fine_fraction, "dt_init": p.dt_init, "dt_max": p.dt_max,
                   "dU_max": p.dU_max, "tol_event": p.tol_event, "tol_series": p.tol_series},
        "faces": series.grid.faces.tolist(),
        "probes_x": None if series.probes_x is None else series.probes_x.tolist(),
        "stop_reason": series.stop_reason,
        "initial": None if init is None else {"u0": np.asarray(init.u0).tolist(), "v0": init.v0, "w0": init.w0,
                                              "r0": init.r0.to_dict(), "eps": init.eps},
        "monitor": None if series.monitor is None else series.monitor.__dict__,
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, default=float))
    with open(out_dir / "snapshots.jsonl", "w") as fh:
        for r in series.records:
            fh.write(json.dumps({"t": r.t, "v": r.v, "w": r.w, "U_bar": r.U_bar, "P": r.P, "cfg": r.cfg.to_dict(),
                                 "probes": None if r.probes is None else list(map(float, r.probes)),
                                 "events": [e.to_dict() for e in r.events]}) + "\n")


def load_series(out_dir) -> TimeSeries:
    """Rebuild a :class:`TimeSeries` (without profiles) from :func:`save_series` output."""
    out_dir = Path(out_dir)
    try:
        meta = json.loads((out_dir / "meta.json").read_text())
        lines = (out_dir / "snapshots.jsonl").read_text().splitlines()
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"not a saved series: {exc}", str(out_dir)) from None
    pp = dict(meta["params"])
    dom = ThresholdDomain(pp.pop("lo"), pp.pop("hi"))
    params = ModelParams(dom, **pp)
    grid = Grid(np.asarray(meta["faces"], dtype=float))
    probes_x = None if meta["probes_x"] is None else np.asarray(meta["probes_x"])
    init = None
    if meta["initial"] is not None:
        m = meta["initial"]
        init = InitialData(np.asarray(m["u0"]), m["v0"], m["w0"], SimpleConfig.from_dict(m["r0"]), m["eps"])
    series = TimeSeries(grid, params, probes_x=probes_x, stop_reason=meta.get("stop_reason", ""), initial=init)
    if meta.get("monitor"):
        series.monitor = MonitorReport(**meta["monitor"])
    for ln in lines:
        d = json.loads(ln)
        evs = [LoggedEvent(**e) for e in d["events"]]
        series.events += evs
        series.records.append(Record(d["t"], d["v"], d["w"], d["U_bar"], SimpleConfig.from_dict(d["cfg"]),
                                     None if d["probes"] is None else np.asarray(d["probes"]), None, evs, d["P"]))
    last = series.records[-1]
    series.final = SystemState(last.t, np.empty(0), last.v, last.w, last.cfg)
    return series
