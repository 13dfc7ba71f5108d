"""Scenario configuration: TOML parsing and validation.

A scenario bundles a metric family, a measure density, a chart grid, and
per-check parameters. Configs are plain TOML; the bundled scenarios live
in the package's ``scenarios/`` directory and can be referenced by name.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field as dc_field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .errors import ConfigInvalid
from .grid import GridDomain, MeasureDensity
from .metrics import MetricField, make_metric

MAX_CELLS = 1_500_000


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    metric_spec: dict
    measure_expression: str
    domain_spec: dict
    entropy: dict
    curvature: dict
    constants: dict
    cheeger: dict
    eigen: dict
    isoperimetric: dict
    coarea: dict
    brunn_minkowski: dict
    cd: dict
    cheeger_buser: dict
    raw: dict = dc_field(default_factory=dict, repr=False)

    def build_metric(self) -> MetricField:
        spec = dict(self.metric_spec)
        family = spec.pop("family")
        dim = spec.pop("dimension", len(self.domain_spec["bounds"]))
        return make_metric(dim, family, **spec)

    def build_measure(self) -> MeasureDensity:
        dim = len(self.domain_spec["bounds"])
        return MeasureDensity.from_expression(self.measure_expression, dim)

    def build_domain(self) -> GridDomain:
        spec = self.domain_spec
        return GridDomain(
            bounds=tuple(tuple(b) for b in spec["bounds"]),
            resolution=tuple(spec["resolution"]),
            periodic=tuple(spec.get("periodic", [False] * len(spec["bounds"]))),
            open_faces=frozenset(spec.get("open_faces", [])),
        )

    @property
    def stencil_radius(self) -> int:
        return int(self.domain_spec.get("stencil_radius", 3))


_DEFAULTS = {
    "entropy": {"n_samples": 24},
    "curvature": {"tolerance": 1e-6, "base_points": 16, "directions": 8, "margin": 0.15},
    "constants": {"sample_points": 9, "directions": 64},
    "cheeger": {"ball_centers": [], "ball_radii": [], "eigen_superlevels": True, "mask_files": []},
    "eigen": {"restarts": 5, "max_iter": 1500, "tol_lambda": 1e-8, "reweight_iters": 6},
    "isoperimetric": {"count": 40, "generator": "mixed", "slack_rel": 0.05, "max_extent": 3.0},
    "coarea": {"fields": 20, "levels": 16, "slack_rel": 0.05, "width": 2.0},
    "brunn_minkowski": {"enabled": False, "pairs": 20, "t_values": [0.25, 0.5, 0.75], "samples_per_set": 12, "max_extent": 2.0},
    "cd": {"enabled": False, "pairs": 10, "t_values": [0.25, 0.5, 0.75], "max_extent": 2.0},
    "cheeger_buser": {"deltas": [0.5, 0.9], "slack_rel": 0.02},
}


def _merge_defaults(section: str, data: dict) -> dict:
    out = dict(_DEFAULTS.get(section, {}))
    out.update(data or {})
    return out


def parse_config(data: dict) -> ScenarioConfig:
    errors = []

    def need(key, parent=None, src=None):
        src = src if src is not None else data
        where = f"{parent}.{key}" if parent else key
        if key not in src:
            errors.append(f"missing field {where}")
            return None
        return src[key]

    name = need("name")
    seed = data.get("seed", 0)
    metric_spec = need("metric") or {}
    if metric_spec and "family" not in metric_spec:
        errors.append("missing field metric.family")
    measure = need("measure") or {}
    density = measure.get("density", "1") if isinstance(measure, dict) else "1"
    domain_spec = need("domain") or {}
    for key in ("bounds", "resolution"):
        if key not in domain_spec:
            errors.append(f"missing field domain.{key}")
    if "bounds" in domain_spec and "resolution" in domain_spec:
        if len(domain_spec["bounds"]) != len(domain_spec["resolution"]):
            errors.append("domain.bounds and domain.resolution lengths differ")
        cells = int(np.prod(domain_spec["resolution"]))
        if cells > MAX_CELLS:
            errors.append(f"domain has {cells} cells, budget is {MAX_CELLS}")
    if not isinstance(seed, int):
        errors.append("seed must be an integer")
    entropy = _merge_defaults("entropy", data.get("entropy"))
    curvature = _merge_defaults("curvature", data.get("curvature"))
    constants = _merge_defaults("constants", data.get("constants"))
    cheeger = _merge_defaults("cheeger", data.get("cheeger"))
    eigen = _merge_defaults("eigen", data.get("eigen"))
    iso = _merge_defaults("isoperimetric", data.get("isoperimetric"))
    coarea = _merge_defaults("coarea", data.get("coarea"))
    bm = _merge_defaults("brunn_minkowski", data.get("brunn_minkowski"))
    cd = _merge_defaults("cd", data.get("cd"))
    cb = _merge_defaults("cheeger_buser", data.get("cheeger_buser"))
    for section_name, section in (("eigen", eigen), ("isoperimetric", iso), ("coarea", coarea), ("cheeger_buser", cb)):
        for key, val in section.items():
            if key.endswith(("tol", "tol_lambda", "slack_rel", "tolerance")) and isinstance(val, (int, float)):
                if val <= 0:
                    errors.append(f"{section_name}.{key} must be positive")
    if errors:
        raise ConfigInvalid(errors)
    return ScenarioConfig(
        name=name,
        seed=int(seed),
        metric_spec=metric_spec,
        measure_expression=density,
        domain_spec=domain_spec,
        entropy=entropy,
        curvature=curvature,
        constants=constants,
        cheeger=cheeger,
        eigen=eigen,
        isoperimetric=iso,
        coarea=coarea,
        brunn_minkowski=bm,
        cd=cd,
        cheeger_buser=cb,
        raw=data,
    )


def bundled_scenario_path(name: str) -> Path:
    base = importlib.resources.files("finslerlab") / "scenarios" / f"{name}.toml"
    return Path(str(base))


def load_config(source) -> ScenarioConfig:
    """Load a scenario from a TOML path or a bundled scenario name."""
    path = Path(source)
    if not path.exists():
        candidate = bundled_scenario_path(str(source))
        if candidate.exists():
            path = candidate
        else:
            raise ConfigInvalid(f"no config file or bundled scenario named {source!r}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"cannot parse {path}: {exc}") from exc
    return parse_config(data)
