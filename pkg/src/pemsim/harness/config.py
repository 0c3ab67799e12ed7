"""Experiment configuration: parsing, validation and cell enumeration.

Document layout (YAML)::

    schema: 1
    base_seed: 2022
    runs_per_cell: 30
    policy: {standoff: 5.0}          # PolicyConfig overrides
    scenarios:
      - name: tc1
        id: TC1
        params: {lead_speed: 7}      # a list value makes a grid axis
        pems: [markov]
    pems:
      - name: markov
        condition: daylight
        zones: [...]                 # optional; default is full coverage
        models:
          daylight:
            all:                     # zone id
              false_negative: {steady_state_p: $p, mean_sojourn_s: $sojourn}
        grid: {p: [0.25, 0.5], sojourn: [0.3, 5]}

Grid axes are enumerated by parameter name, then by ascending value. Cells
are ordered by scenario name, scenario parameters, PEM name and PEM
parameters, and numbered ``c00000``, ``c00001``, ...
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, fields
from typing import Any, Mapping

import yaml

from ..pem import (
    FULL_COVERAGE,
    ErrorGeneratorConfig,
    FalseNegativeConfig,
    FalsePositiveConfig,
    MisclassificationConfig,
    PemConfig,
    PositionNoiseConfig,
    TrackingLossConfig,
    Zone,
)
from ..policy import PolicyConfig
from ..world import ObjectClass, ScenarioDefinition, ScenarioId, build_scenario

SCHEMA_VERSION = 1
DEFAULT_RUNS = 30
SIGMA_D_MAX = 0.12
SIGMA_THETA_MAX_DEG = 1.5


class ConfigError(ValueError):
    """Configuration problem, located by a dotted path into the document."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ConfigWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Cell:
    index: int
    scenario_name: str
    scenario_id: str
    scenario_params: tuple[tuple[str, float], ...]
    pem_name: str
    pem_params: tuple[tuple[str, float], ...]
    scenario: ScenarioDefinition
    pem: PemConfig

    @property
    def cell_id(self) -> str:
        return f"c{self.index:05d}"


@dataclass(frozen=True)
class ExperimentMatrix:
    base_seed: int
    runs_per_cell: int
    policy: PolicyConfig
    cells: tuple[Cell, ...]
    pem_vars: tuple[str, ...]
    warnings: tuple[str, ...] = ()

    @property
    def episode_count(self) -> int:
        return len(self.cells) * self.runs_per_cell


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _require_mapping(node, path) -> Mapping:
    if not isinstance(node, Mapping):
        raise ConfigError(path, f"expected a mapping, got {type(node).__name__}")
    return node


def _require_list(node, path) -> list:
    if not isinstance(node, list):
        raise ConfigError(path, f"expected a list, got {type(node).__name__}")
    return node


def _check_keys(node: Mapping, path: str, allowed, required=()) -> None:
    for key in node:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown field")
    for key in required:
        if key not in node:
            raise ConfigError(f"{path}.{key}" if path else str(key), "missing required field")


def _number(value, path) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if math.isnan(value):
        raise ConfigError(path, "NaN is not allowed")
    return float(value)


def _name(value, path) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(path, f"expected a non-empty string, got {value!r}")
    if any(ord(ch) < 32 or ord(ch) == 127 for ch in value):
        raise ConfigError(path, "control characters are not allowed in names")
    return value


def _grid_axes(node, path) -> list[tuple[str, list[float]]]:
    """``{name: value | [values]}`` -> sorted axes with sorted unique values."""
    node = _require_mapping(node or {}, path)
    axes = []
    for key in sorted(node):
        raw = node[key]
        values = raw if isinstance(raw, list) else [raw]
        if not values:
            raise ConfigError(f"{path}.{key}", "empty value list")
        nums = sorted({_number(v, f"{path}.{key}[{i}]") for i, v in enumerate(values)})
        axes.append((str(key), nums))
    return axes


def _product(axes) -> list[tuple[tuple[str, float], ...]]:
    if not axes:
        return [()]
    names = [a[0] for a in axes]
    return [tuple(zip(names, combo)) for combo in itertools.product(*(a[1] for a in axes))]


# --------------------------------------------------------------------------
# PEM documents
# --------------------------------------------------------------------------

_GEN_FIELDS = {
    "false_negative": ("steady_state_p", "mean_sojourn_s"),
    "position_noise": ("sigma_d", "sigma_theta_deg"),
    "tracking_loss": ("p_tl",),
    "misclassification": None,
    "false_positive": ("rate_per_frame", "class_probs"),
}


class _Subst:
    """Resolves ``$var`` placeholders against one grid point and records use."""

    def __init__(self, values: Mapping[str, float], defined):
        self.values = values
        self.defined = defined
        self.used: set[str] = set()

    def __call__(self, value, path) -> float:
        if isinstance(value, str) and value.startswith("$"):
            var = value[1:]
            if var not in self.defined:
                raise ConfigError(path, f"placeholder {value!r} has no grid axis")
            self.used.add(var)
            return self.values[var]
        return _number(value, path)


def _class_row(node, path, sub) -> dict[ObjectClass, float]:
    node = _require_mapping(node, path)
    row = {}
    for key, val in node.items():
        try:
            cls = ObjectClass(key)
        except ValueError:
            raise ConfigError(f"{path}.{key}", f"unknown object class; expected one of "
                              f"{[c.value for c in ObjectClass]}") from None
        row[cls] = sub(val, f"{path}.{key}")
    return row


def _generator(node, path, sub, warn) -> ErrorGeneratorConfig:
    node = _require_mapping(node or {}, path)
    _check_keys(node, path, _GEN_FIELDS)
    kw = {}
    try:
        if "false_negative" in node:
            p = f"{path}.false_negative"
            n = _require_mapping(node["false_negative"], p)
            _check_keys(n, p, _GEN_FIELDS["false_negative"], _GEN_FIELDS["false_negative"])
            ss = sub(n["steady_state_p"], f"{p}.steady_state_p")
            so = sub(n["mean_sojourn_s"], f"{p}.mean_sojourn_s")
            if not 0.0 <= ss <= 1.0:
                raise ConfigError(f"{p}.steady_state_p", f"{ss} outside [0.0, 1.0]")
            if not 0.0 < so <= 10.0:
                raise ConfigError(f"{p}.mean_sojourn_s", f"{so} violates the (0.0s,10s] bound")
            kw["false_negative"] = FalseNegativeConfig(ss, so)
        if "position_noise" in node:
            p = f"{path}.position_noise"
            n = _require_mapping(node["position_noise"], p)
            _check_keys(n, p, _GEN_FIELDS["position_noise"])
            sd = sub(n.get("sigma_d", 0.0), f"{p}.sigma_d")
            st = sub(n.get("sigma_theta_deg", 0.0), f"{p}.sigma_theta_deg")
            if sd < 0 or st < 0:
                raise ConfigError(p, "noise standard deviations must be non-negative")
            if sd > SIGMA_D_MAX:
                warn(f"{p}.sigma_d: {sd} exceeds the documented range [0, {SIGMA_D_MAX}]")
            if st > SIGMA_THETA_MAX_DEG:
                warn(f"{p}.sigma_theta_deg: {st} exceeds the documented range [0, {SIGMA_THETA_MAX_DEG}]")
            kw["position_noise"] = PositionNoiseConfig(sd, math.radians(st))
        if "tracking_loss" in node:
            p = f"{path}.tracking_loss"
            n = _require_mapping(node["tracking_loss"], p)
            _check_keys(n, p, _GEN_FIELDS["tracking_loss"], _GEN_FIELDS["tracking_loss"])
            ptl = sub(n["p_tl"], f"{p}.p_tl")
            if not 0.0 <= ptl <= 1.0:
                raise ConfigError(f"{p}.p_tl", f"{ptl} outside [0, 1]")
            kw["tracking_loss"] = TrackingLossConfig(ptl)
        if "misclassification" in node:
            p = f"{path}.misclassification"
            n = _require_mapping(node["misclassification"], p)
            matrix = {}
            for key, row in n.items():
                try:
                    cls = ObjectClass(key)
                except ValueError:
                    raise ConfigError(f"{p}.{key}", "unknown object class") from None
                matrix[cls] = _class_row(row, f"{p}.{key}", sub)
            kw["misclassification"] = MisclassificationConfig(matrix)
        if "false_positive" in node:
            p = f"{path}.false_positive"
            n = _require_mapping(node["false_positive"], p)
            _check_keys(n, p, _GEN_FIELDS["false_positive"], ("rate_per_frame",))
            rate = sub(n["rate_per_frame"], f"{p}.rate_per_frame")
            if "class_probs" in n:
                kw["false_positive"] = FalsePositiveConfig(rate, _class_row(n["class_probs"], f"{p}.class_probs", sub))
            else:
                kw["false_positive"] = FalsePositiveConfig(rate)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    return ErrorGeneratorConfig(**kw)


def _zones(node, path) -> tuple[Zone, ...]:
    if node is None:
        return (FULL_COVERAGE,)
    out = []
    for i, z in enumerate(_require_list(node, path)):
        p = f"{path}[{i}]"
        z = _require_mapping(z, p)
        _check_keys(z, p, ("id", "theta_min_deg", "theta_max_deg", "d_min", "d_max"), ("id",))
        d_max = z.get("d_max")
        try:
            out.append(Zone(
                _name(z["id"], f"{p}.id"),
                math.radians(_number(z.get("theta_min_deg", -180.0), f"{p}.theta_min_deg")),
                math.radians(_number(z.get("theta_max_deg", 180.0), f"{p}.theta_max_deg")),
                _number(z.get("d_min", 0.0), f"{p}.d_min"),
                math.inf if d_max is None else _number(d_max, f"{p}.d_max"),
            ))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(p, str(exc)) from None
    return tuple(out)


@dataclass(frozen=True)
class _PemSpec:
    name: str
    axes: list
    build: Any  # callable(point) -> PemConfig


def _pem_spec(node, path, warn) -> _PemSpec:
    node = _require_mapping(node, path)
    _check_keys(node, path, ("name", "condition", "zones", "models", "grid"), ("name", "models"))
    name = _name(node["name"], f"{path}.name")
    condition = _name(node.get("condition", "daylight"), f"{path}.condition")
    zones = _zones(node.get("zones"), f"{path}.zones")
    models = _require_mapping(node["models"], f"{path}.models")
    axes = _grid_axes(node.get("grid"), f"{path}.grid")
    defined = {a[0] for a in axes}
    if condition not in models:
        raise ConfigError(f"{path}.models", f"no model for the active condition {condition!r}")

    def build(point: tuple[tuple[str, float], ...], check_usage: bool = False) -> PemConfig:
        sub = _Subst(dict(point), defined)
        table = {}
        for cond, per_zone in models.items():
            cp = f"{path}.models.{cond}"
            per_zone = _require_mapping(per_zone, cp)
            for zid, gen in per_zone.items():
                if zid not in {z.zone_id for z in zones}:
                    raise ConfigError(f"{cp}.{zid}", "unknown zone id")
                label = f"{cp}.{zid}" + (f" (grid {dict(point)})" if point else "")
                table[(str(zid), str(cond))] = _generator(gen, label, sub, warn)
        if check_usage and sub.used != defined:
            unused = sorted(defined - sub.used)
            raise ConfigError(f"{path}.grid", f"grid axes never referenced: {unused}")
        try:
            return PemConfig(zones, table, condition, name)
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None

    return _PemSpec(name, axes, build)


# --------------------------------------------------------------------------
# Whole document
# --------------------------------------------------------------------------

def _policy(node, path) -> PolicyConfig:
    node = _require_mapping(node or {}, path)
    allowed = {f.name for f in fields(PolicyConfig)}
    _check_keys(node, path, allowed)
    kw = {}
    for key, val in node.items():
        if key == "cruise_speed" and val is None:
            kw[key] = None
        elif key in ("coast_limit", "velocity_window"):
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"{path}.{key}", f"expected an integer, got {val!r}")
            kw[key] = val
        else:
            kw[key] = _number(val, f"{path}.{key}")
    try:
        return PolicyConfig(**kw)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def parse_experiment_config(document: str | Mapping) -> ExperimentMatrix:
    """Validate a configuration document (YAML text or a parsed mapping)."""
    if isinstance(document, str):
        try:
            document = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise ConfigError("", f"not valid YAML: {exc}") from None
    doc = _require_mapping(document, "<document>")
    _check_keys(doc, "", ("schema", "base_seed", "runs_per_cell", "policy", "scenarios", "pems"),
                ("schema", "scenarios", "pems"))
    if doc["schema"] != SCHEMA_VERSION:
        raise ConfigError("schema", f"unsupported schema version {doc['schema']!r}; expected {SCHEMA_VERSION}")
    base_seed = doc.get("base_seed", 0)
    if isinstance(base_seed, bool) or not isinstance(base_seed, int) or not 0 <= base_seed < 2 ** 64:
        raise ConfigError("base_seed", f"expected an integer in [0, 2**64), got {base_seed!r}")
    runs = doc.get("runs_per_cell", DEFAULT_RUNS)
    if isinstance(runs, bool) or not isinstance(runs, int) or runs < 1:
        raise ConfigError("runs_per_cell", f"expected a positive integer, got {runs!r}")
    policy = _policy(doc.get("policy"), "policy")

    messages: list[str] = []

    def warn(msg: str) -> None:
        if msg not in messages:
            messages.append(msg)
            warnings.warn(msg, ConfigWarning, stacklevel=4)

    pem_specs: dict[str, _PemSpec] = {}
    for i, node in enumerate(_require_list(doc["pems"], "pems")):
        spec = _pem_spec(node, f"pems[{i}]", warn)
        if spec.name in pem_specs:
            raise ConfigError(f"pems[{i}].name", f"duplicate PEM name {spec.name!r}")
        pem_specs[spec.name] = spec
    pem_points = {}
    for name, spec in pem_specs.items():
        pts = _product(spec.axes)
        pem_points[name] = [(pt, spec.build(pt, check_usage=(k == 0))) for k, pt in enumerate(pts)]

    scen_entries = []
    seen_names = set()
    for i, node in enumerate(_require_list(doc["scenarios"], "scenarios")):
        path = f"scenarios[{i}]"
        node = _require_mapping(node, path)
        _check_keys(node, path, ("name", "id", "params", "pems"), ("id", "pems"))
        sid = node["id"]
        try:
            sid = ScenarioId(sid).value
        except ValueError:
            raise ConfigError(f"{path}.id", f"unknown scenario id {sid!r}") from None
        name = _name(node.get("name", sid), f"{path}.name")
        if name in seen_names:
            raise ConfigError(f"{path}.name", f"duplicate scenario name {name!r}")
        seen_names.add(name)
        axes = _grid_axes(node.get("params"), f"{path}.params")
        builds = []
        for pt in _product(axes):
            try:
                builds.append((pt, build_scenario(sid, dict(pt))))
            except ValueError as exc:
                raise ConfigError(f"{path}.params", str(exc)) from None
        pem_names = _require_list(node["pems"], f"{path}.pems")
        if not pem_names:
            raise ConfigError(f"{path}.pems", "at least one PEM is required")
        for j, pn in enumerate(pem_names):
            if pn not in pem_specs:
                raise ConfigError(f"{path}.pems[{j}]", f"unknown PEM {pn!r}")
        if len(set(pem_names)) != len(pem_names):
            raise ConfigError(f"{path}.pems", "duplicate PEM reference")
        scen_entries.append((name, sid, builds, sorted(pem_names)))

    cells = []
    for name, sid, builds, pem_names in sorted(scen_entries, key=lambda e: e[0]):
        for spt, scenario in builds:
            for pn in pem_names:
                for ppt, pem in pem_points[pn]:
                    cells.append(Cell(len(cells), name, sid, spt, pn, ppt, scenario, pem))
    if not cells:
        raise ConfigError("scenarios", "the matrix has no cells")
    pem_vars = tuple(sorted({k for c in cells for k, _ in c.pem_params}))
    return ExperimentMatrix(base_seed, runs, policy, tuple(cells), pem_vars, tuple(messages))


def load_experiment_config(path) -> ExperimentMatrix:
    """Read and parse a config file. ``OSError`` propagates for I/O problems."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_experiment_config(text)
