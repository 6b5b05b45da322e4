"""State snapshots, run manifests and scenario files.

Snapshots reuse the deterministic field container: one file per state with
arrays ``u``, ``theta`` and ``K`` and a JSON header holding the grids, the
time and the physical parameters.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np
import yaml

from .core import PhysParams, State
from .errors import ConfigurationError
from .fields import grid_from_meta, grid_meta, read_container, write_container
from .galerkin import INITIAL_KINDS, STEPPERS, GalerkinConfig

SNAPSHOT_KIND = "state"
MANIFEST = "manifest.json"


def save_state(path, Z, time=0.0, params=None, extra=None):
    meta = {"kind": SNAPSHOT_KIND, "time": float(time), "grid_n": grid_meta(Z.grid_n),
            "grid_2n": grid_meta(Z.grid_2n)}
    if params is not None:
        meta["params"] = params.to_dict()
    if extra:
        meta["extra"] = extra
    write_container(path, {"u": Z.u.coeffs, "theta": Z.theta.coeffs, "K": Z.K.coeffs}, meta)


def load_state(path):
    """``(State, time, meta)`` from a snapshot file."""
    arrays, meta = read_container(path)
    if meta.get("kind") != SNAPSHOT_KIND:
        raise ConfigurationError(f"{path}: not a state snapshot")
    Z = State.from_arrays(arrays["u"], arrays["theta"], arrays["K"],
                          grid_from_meta(meta["grid_n"]), grid_from_meta(meta["grid_2n"]))
    return Z, float(meta["time"]), meta


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_table(path, rows, fmt="csv"):
    """Rows of flat mappings to CSV (stable column order) or JSON."""
    if fmt == "json":
        write_json(path, rows)
        return
    if fmt != "csv":
        raise ConfigurationError(f"unknown table format {fmt!r}")
    import csv

    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in r.items()})


def read_table(path):
    import csv

    with open(path, newline="") as fh:
        return [{k: _num(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def _num(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return v


# ---------------------------------------------------------------------------
# Scenarios

CHECKS = ("ed_identity", "ed_residual", "persistence", "rigidity", "transport", "decay",
          "bihari", "symmetry", "bands", "stability")

_SCHEMA = {
    "name": str,
    "kind": str,
    "seed": int,
    "params": dict,
    "galerkin": dict,
    "initial": dict,
    "diagnostics": dict,
    "scan": dict,
    "checks": list,
}
_GALERKIN_KEYS = {f.name for f in dc_fields(GalerkinConfig)}
_INITIAL_KEYS = {"kind", "amplitude", "band", "width", "mode"}
_DIAG_KEYS = {"M", "j_max", "report_every", "full_report_every", "decay_window", "bihari_t0",
              "ed_dt", "ed_times"}
_SCAN_KEYS = {"k_max", "tol"}


@dataclass
class Scenario:
    """A parsed run description."""

    name: str
    kind: str
    params: PhysParams
    galerkin: GalerkinConfig | None
    initial: dict
    seed: int | None
    diagnostics: dict = field(default_factory=dict)
    scan: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    source: str | None = None

    def to_dict(self):
        g = None
        if self.galerkin is not None:
            g = {f.name: getattr(self.galerkin, f.name) for f in dc_fields(GalerkinConfig)}
        return {"name": self.name, "kind": self.kind, "params": self.params.to_dict(),
                "galerkin": g, "initial": self.initial, "seed": self.seed,
                "diagnostics": self.diagnostics, "scan": self.scan, "checks": self.checks}


def _line_map(text):
    """Map key paths to 1-based line numbers of a YAML mapping document."""
    lines = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                lines[p] = k.start_mark.line + 1
                walk(v, p)

    try:
        walk(yaml.compose(text), ())
    except yaml.YAMLError:
        pass
    return lines


def _where(src, lines, *path):
    ln = lines.get(tuple(path))
    loc = f"{src}:{ln}" if ln else src
    return f"{loc}: {'.'.join(path)}"


def parse_scenario(text, source="<scenario>", seed_override=None):
    """Validate a scenario document (YAML) and build a ``Scenario``."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{source}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{source}: expected a mapping at top level")
    lines = _line_map(text)
    for k, v in doc.items():
        if k not in _SCHEMA:
            raise ConfigurationError(f"{_where(source, lines, k)}: unknown key")
        if v is not None and not isinstance(v, _SCHEMA[k]) or isinstance(v, bool):
            raise ConfigurationError(f"{_where(source, lines, k)}: expected {_SCHEMA[k].__name__}")
    for req in ("name", "kind", "params"):
        if req not in doc:
            raise ConfigurationError(f"{source}: missing key '{req}'")
    kind = doc["kind"]
    if kind not in ("simulate", "scan"):
        raise ConfigurationError(f"{_where(source, lines, 'kind')}: must be 'simulate' or 'scan'")
    try:
        params = PhysParams.from_dict(doc["params"], where=_where(source, lines, "params"))
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc)) from None

    def check_keys(section, allowed):
        d = doc.get(section) or {}
        for k in d:
            if k not in allowed:
                raise ConfigurationError(f"{_where(source, lines, section, k)}: unknown key")
        return dict(d)

    gal = None
    initial = check_keys("initial", _INITIAL_KEYS)
    diagnostics = check_keys("diagnostics", _DIAG_KEYS)
    scan = check_keys("scan", _SCAN_KEYS)
    seed = doc.get("seed")
    if seed_override is not None:
        seed = int(seed_override)
    if kind == "simulate":
        g = check_keys("galerkin", _GALERKIN_KEYS)
        for req in ("n", "dt", "t_end"):
            if req not in g:
                raise ConfigurationError(f"{source}: galerkin.{req} is required")
        if g.get("stepper", "if-rk4") not in STEPPERS:
            raise ConfigurationError(f"{_where(source, lines, 'galerkin', 'stepper')}: must be one of {STEPPERS}")
        try:
            gal = GalerkinConfig(**g)
        except (TypeError, ConfigurationError) as exc:
            raise ConfigurationError(f"{_where(source, lines, 'galerkin')}: {exc}") from None
        if initial.get("kind", "random-band") not in INITIAL_KINDS:
            raise ConfigurationError(f"{_where(source, lines, 'initial', 'kind')}: must be one of {INITIAL_KINDS}")
        amp = initial.get("amplitude", 0.0)
        if isinstance(amp, bool) or not isinstance(amp, (int, float)) or amp < 0:
            raise ConfigurationError(f"{_where(source, lines, 'initial', 'amplitude')}: must be a non-negative number")
        if amp > 0 and initial.get("kind", "random-band") != "single-mode" and seed is None:
            raise ConfigurationError(f"{source}: a seed is required for randomized initial data")
        if initial.get("kind") == "single-mode" and seed is None:
            raise ConfigurationError(f"{source}: a seed is required for randomized initial data")
    checks = list(doc.get("checks") or [])
    for c in checks:
        if c not in CHECKS:
            raise ConfigurationError(f"{_where(source, lines, 'checks')}: unknown check {c!r}")
    return Scenario(doc["name"], kind, params, gal, initial, seed, diagnostics, scan, checks, source)


def builtin_scenarios():
    d = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(d.glob("*.yaml"))}


def load_scenario(path_or_name, seed_override=None):
    """Load a scenario from a file path or a bundled scenario name."""
    p = Path(path_or_name)
    if not p.exists():
        named = builtin_scenarios()
        if str(path_or_name) in named:
            p = named[str(path_or_name)]
        else:
            raise ConfigurationError(
                f"scenario {path_or_name!r} not found (bundled: {', '.join(named)})")
    return parse_scenario(p.read_text(), str(p), seed_override)


def snapshot_name(i):
    return f"snap_{i:06d}.mpf"


def write_manifest(out, scenario, entries, extra=None):
    d = {"scenario": scenario.to_dict(), "snapshots": entries}
    if extra:
        d.update(extra)
    write_json(os.path.join(out, MANIFEST), d)


def read_manifest(out):
    path = os.path.join(out, MANIFEST)
    if not os.path.exists(path):
        raise ConfigurationError(f"{out}: no {MANIFEST} (run the scenario first)")
    return read_json(path)
