"""Declarative experiment configs (YAML), with field-level validation."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..conformal import MapDescriptor
from ..gff import LqgParams, SamplerKind
from ..lattice import GridSpec

KINDS = (
    "covariance_check",
    "weyl_check",
    "affine_covariance",
    "conformal_covariance",
    "measure_covariance",
    "annulus_events",
    "ball_volume",
)

# kinds that build their own grids (r schedule or mesh schedule)
_SCALED_KINDS = {"conformal_covariance", "measure_covariance"}


class ConfigError(ValueError):
    """Collects every field-level problem found in a config."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _complex(v, where, problems):
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    problems.append(f"{where}: expected a number or an [x, y] pair, got {v!r}")
    return 0j


def _decreasing(xs) -> bool:
    return all(a > b for a, b in zip(xs, xs[1:]))


@dataclass
class ExperimentConfig:
    kind: str
    params: LqgParams
    sampler: SamplerKind
    grid: GridSpec | None = None
    map: MapDescriptor | None = None
    center: complex = 0j
    epsilons: list[float] = field(default_factory=list)
    radii: list[float] = field(default_factory=list)
    sample_count: int = 1
    base_seed: int = 0
    pair_budget: int = 8
    neighbor_scheme: str = "king8"
    policy_exponent: float = 1.0
    options: dict = field(default_factory=dict)
    name: str = "experiment"
    out_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def seed(self, index: int) -> int:
        return self.base_seed + index

    def echo(self) -> dict:
        """The config as parsed from disk, with CLI overrides applied."""
        out = copy.deepcopy(self.raw)
        out["base_seed"] = self.base_seed
        out["sample_count"] = self.sample_count
        return out


def _grid_from(d, problems) -> GridSpec | None:
    if d is None:
        return None
    if not isinstance(d, dict):
        problems.append("grid: expected a mapping")
        return None
    try:
        spacing = float(d["spacing"])
        if "origin" in d:
            return GridSpec(_complex(d["origin"], "grid.origin", problems), spacing, int(d["nx"]), int(d["ny"]))
        return GridSpec.centered(_complex(d.get("center", 0), "grid.center", problems), float(d["half_width"]),
                                 spacing)
    except KeyError as exc:
        problems.append(f"grid: missing key {exc.args[0]!r} (need spacing and origin/nx/ny or half_width)")
    except (TypeError, ValueError) as exc:
        problems.append(f"grid: {exc}")
    return None


def parse_config(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError(["config: top level must be a mapping"])
    problems: list[str] = []
    known = {"kind", "name", "params", "grid", "sampler", "map", "center", "epsilons", "radii", "sample_count",
             "base_seed", "pair_budget", "neighbor_scheme", "policy_exponent", "options", "output"}
    for k in d:
        if k not in known:
            problems.append(f"{k}: unknown key")

    kind = d.get("kind")
    if kind not in KINDS:
        problems.append(f"kind: must be one of {', '.join(KINDS)}; got {kind!r}")

    p = d.get("params", {}) or {}
    try:
        params = LqgParams(float(p.get("gamma", math.sqrt(8 / 3))),
                           None if p.get("d_gamma") is None else float(p["d_gamma"]))
    except (TypeError, ValueError) as exc:
        problems.append(f"params: {exc}")
        params = LqgParams.pure_gravity()

    s = d.get("sampler", {}) or {}
    try:
        sampler = SamplerKind(
            s.get("tag", "whole_plane_bigbox"),
            float(s.get("expansion_factor", 4.0)),
            s.get("normalization", "smoothed_average_at_origin"),
            _complex(s.get("center", 0), "sampler.center", problems),
            float(s.get("radius", 1.0)),
        )
    except (TypeError, ValueError) as exc:
        problems.append(f"sampler: {exc}")
        sampler = SamplerKind()

    grid = _grid_from(d.get("grid"), problems)
    if grid is None and kind not in _SCALED_KINDS and "grid" not in d:
        problems.append("grid: required for this experiment kind")

    phi = None
    if d.get("map") is not None:
        try:
            phi = MapDescriptor.from_dict(d["map"])
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"map: {exc}")
    if kind in {"affine_covariance", "conformal_covariance", "measure_covariance"} and d.get("map") is None:
        problems.append("map: required for this experiment kind")
    if kind == "affine_covariance" and phi is not None and phi.kind != "affine":
        problems.append("map: affine_covariance needs an affine map")

    def floats(key):
        v = d.get(key, []) or []
        if not isinstance(v, list) or not all(isinstance(x, (int, float)) for x in v):
            problems.append(f"{key}: expected a list of numbers")
            return []
        return [float(x) for x in v]

    eps = floats("epsilons")
    radii = floats("radii")
    options = d.get("options", {}) or {}
    if not isinstance(options, dict):
        problems.append("options: expected a mapping")
        options = {}

    if kind in {"weyl_check", "affine_covariance", "ball_volume", "annulus_events", "measure_covariance"} and not eps:
        problems.append("epsilons: schedule must be nonempty for this experiment kind")
    if kind in {"conformal_covariance", "annulus_events"} and not radii:
        problems.append("radii: schedule must be nonempty for this experiment kind")
    if eps and not _decreasing(eps):
        problems.append("epsilons: schedule must be strictly decreasing")
    if radii and not _decreasing(radii):
        problems.append("radii: schedule must be strictly decreasing")
    if any(x <= 0 for x in eps + radii):
        problems.append("epsilons/radii: entries must be positive")
    if grid is not None and eps and min(eps) < grid.spacing * (1 - 1e-9):
        problems.append(f"epsilons: every epsilon must be >= grid spacing {grid.spacing}")
    if kind == "conformal_covariance":
        rho = options.get("points_per_radius")
        ratio = options.get("eps_over_r")
        if not isinstance(rho, (int, float)) or rho <= 0:
            problems.append("options.points_per_radius: required positive number")
        elif not isinstance(ratio, (int, float)) or ratio * rho < 1 - 1e-9:
            problems.append("options.eps_over_r: required, and eps_over_r * points_per_radius must be >= 1")
    if kind == "measure_covariance":
        sp = options.get("spacings")
        if not isinstance(sp, list) or not sp or not _decreasing(sp):
            problems.append("options.spacings: required strictly decreasing list (mesh refinements)")
        elif eps and min(eps) < max(sp) * (1 - 1e-9):
            problems.append("epsilons: every epsilon must be >= every mesh spacing")

    count = d.get("sample_count", 1)
    if not isinstance(count, int) or count < 1:
        problems.append("sample_count: must be an integer >= 1")
        count = 1
    seed = d.get("base_seed", 0)
    if not isinstance(seed, int) or seed < 0:
        problems.append("base_seed: must be a nonnegative integer")
        seed = 0
    budget = d.get("pair_budget", 8)
    if not isinstance(budget, int) or budget < 0:
        problems.append("pair_budget: must be a nonnegative integer")
        budget = 8
    scheme = d.get("neighbor_scheme", "king8")
    if scheme not in ("king8", "axis4"):
        problems.append("neighbor_scheme: must be king8 or axis4")
    policy = d.get("policy_exponent", 1.0)
    if not isinstance(policy, (int, float)):
        problems.append("policy_exponent: must be a number")
        policy = 1.0
    center = _complex(d.get("center", 0), "center", problems)
    out = d.get("output", {}) or {}

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        kind=kind, params=params, sampler=sampler, grid=grid, map=phi, center=center, epsilons=eps,
        radii=radii, sample_count=count, base_seed=seed, pair_budget=budget, neighbor_scheme=scheme,
        policy_exponent=float(policy), options=dict(options), name=str(d.get("name", kind)),
        out_dir=out.get("dir"), raw=copy.deepcopy(d),
    )


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
    return parse_config(data)
