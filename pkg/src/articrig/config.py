"""Pipeline configuration: an INI file with one section per stage.

Example::

    [assets]
    bike_dir = fixtures/bike
    skeleton = fixtures/skeleton.json
    body_pose = fixtures/rider_pose.json

    [bike]
    theta_p_deg = derive
    theta_s_deg = derive

    [refine]
    learning_rate = 0.05
    max_iters = 50

    [dataset]
    n_views = 36
    azimuth_step_deg = 10

Relative asset paths resolve against the config file's directory.
Angles are given in degrees here and converted to radians on load.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .ik import RefineConfig
from .render import DEFAULT_FOCAL, DEFAULT_RADIUS, DEFAULT_SIZE, DEFAULT_VIEWS

DERIVE = "derive"


@dataclass
class BikePoseSetting:
    """Bike pose as read from config; crank/steer may be ``"derive"``."""

    theta_p: float | str = 0.0
    theta_s: float | str = 0.0
    theta_X: float = 0.0
    theta_Y: float = 0.0
    theta_Z: float = 0.0
    t: tuple = (0.0, 0.0, 0.0)


@dataclass
class DatasetConfig:
    n_views: int = DEFAULT_VIEWS
    azimuth_step_deg: float | None = None
    radius: float = DEFAULT_RADIUS
    focal: float = DEFAULT_FOCAL
    image_size: int = DEFAULT_SIZE
    orbit_center: tuple = (0.0, 0.0, 0.0)

    def validate(self):
        if self.n_views < 1:
            raise ConfigError("dataset.n_views must be >= 1")
        if self.azimuth_step_deg is not None and not math.isclose(
            self.n_views * self.azimuth_step_deg, 360.0, abs_tol=1e-9
        ):
            raise ConfigError(
                f"n_views * azimuth_step_deg must be 360 (got {self.n_views} x {self.azimuth_step_deg})"
            )
        if not self.radius > 0 or not self.focal > 0 or self.image_size < 1:
            raise ConfigError("dataset radius, focal and image_size must be positive")


@dataclass
class PipelineConfig:
    bike_dir: Path | None = None
    skeleton: Path | None = None
    body_pose: Path | None = None
    rider_splats: Path | None = None
    out_dir: Path | None = None
    seed: int = 0
    density: int = 400
    sh_degree: int = 3
    sh_mode: str = "full"
    bike: BikePoseSetting = field(default_factory=BikePoseSetting)
    refine: RefineConfig = field(default_factory=RefineConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    record_timings: bool = False


def _floats(text, n, key):
    parts = [p for p in text.replace(",", " ").split() if p]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{key}: expected {n} numbers, got {text!r}") from None
    if len(vals) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def _angle(text, key, allow_derive):
    text = text.strip()
    if allow_derive and text.lower() == DERIVE:
        return DERIVE
    try:
        return math.radians(float(text))
    except ValueError:
        raise ConfigError(f"{key}: expected degrees{' or derive' if allow_derive else ''}, got {text!r}") from None


def _joint_map(text):
    pairs = []
    for item in text.replace("\n", ",").split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"refine_joint_map entry {item!r} must look like label=JointName")
        label, name = (s.strip() for s in item.split("=", 1))
        pairs.append((label, name))
    return tuple(pairs)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_parser(cp, base=path.parent)


def config_from_parser(cp, base=Path(".")) -> PipelineConfig:
    cfg = PipelineConfig()

    def p(section, key):
        return cp.get(section, key, fallback=None)

    def path_of(section, key):
        v = p(section, key)
        if v is None or not v.strip():
            return None
        v = Path(v.strip())
        return v if v.is_absolute() else base / v

    try:
        cfg.bike_dir = path_of("assets", "bike_dir")
        cfg.skeleton = path_of("assets", "skeleton")
        cfg.body_pose = path_of("assets", "body_pose")
        cfg.rider_splats = path_of("assets", "rider_splats")
        cfg.out_dir = path_of("output", "out_dir")
        if p("fixtures", "seed") is not None:
            cfg.seed = cp.getint("fixtures", "seed")
        if p("fixtures", "density") is not None:
            cfg.density = cp.getint("fixtures", "density")
        if p("fixtures", "sh_degree") is not None:
            cfg.sh_degree = cp.getint("fixtures", "sh_degree")
        if p("splat", "sh_mode") is not None:
            cfg.sh_mode = p("splat", "sh_mode").strip()
        if p("output", "record_timings") is not None:
            cfg.record_timings = cp.getboolean("output", "record_timings")

        b = cfg.bike
        if p("bike", "theta_p_deg") is not None:
            b.theta_p = _angle(p("bike", "theta_p_deg"), "bike.theta_p_deg", True)
        if p("bike", "theta_s_deg") is not None:
            b.theta_s = _angle(p("bike", "theta_s_deg"), "bike.theta_s_deg", True)
        for axis in "XYZ":
            key = f"theta_{axis.lower()}_deg"
            if p("bike", key) is not None:
                setattr(b, f"theta_{axis}", _angle(p("bike", key), f"bike.{key}", False))
        if p("bike", "t") is not None:
            b.t = _floats(p("bike", "t"), 3, "bike.t")

        kw = {}
        for key, conv in (
            ("learning_rate", float),
            ("max_iters", int),
            ("adam_beta1", float),
            ("adam_beta2", float),
            ("adam_eps", float),
            ("fd_step", float),
            ("gradient_mode", str.strip),
            ("objective_mode", str.strip),
        ):
            if p("refine", key) is not None:
                kw[key] = conv(p("refine", key))
        if p("refine", "refine_joint_map") is not None:
            kw["refine_joint_map"] = _joint_map(p("refine", "refine_joint_map"))
        cfg.refine = RefineConfig(**kw)

        d = cfg.dataset
        if p("dataset", "n_views") is not None:
            d.n_views = cp.getint("dataset", "n_views")
        if p("dataset", "azimuth_step_deg") is not None:
            d.azimuth_step_deg = cp.getfloat("dataset", "azimuth_step_deg")
        if p("dataset", "radius") is not None:
            d.radius = cp.getfloat("dataset", "radius")
        if p("dataset", "focal") is not None:
            d.focal = cp.getfloat("dataset", "focal")
        if p("dataset", "image_size") is not None:
            d.image_size = cp.getint("dataset", "image_size")
        if p("dataset", "orbit_center") is not None:
            d.orbit_center = _floats(p("dataset", "orbit_center"), 3, "dataset.orbit_center")
    except (ValueError, configparser.Error) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    cfg.dataset.validate()
    return cfg


def render_config(cfg: PipelineConfig, base=None) -> str:
    """Serialize a config back to INI text (paths relative to ``base`` when possible)."""

    def rel(path):
        if path is None:
            return ""
        if base is not None:
            try:
                return str(Path(path).relative_to(base))
            except ValueError:
                pass
        return str(path)

    def deg(v):
        return DERIVE if v == DERIVE else repr(math.degrees(v))

    b, r, d = cfg.bike, cfg.refine, cfg.dataset
    lines = [
        "[assets]",
        f"bike_dir = {rel(cfg.bike_dir)}",
        f"skeleton = {rel(cfg.skeleton)}",
        f"body_pose = {rel(cfg.body_pose)}",
        f"rider_splats = {rel(cfg.rider_splats)}",
        "",
        "[fixtures]",
        f"seed = {cfg.seed}",
        f"density = {cfg.density}",
        f"sh_degree = {cfg.sh_degree}",
        "",
        "[splat]",
        f"sh_mode = {cfg.sh_mode}",
        "",
        "[bike]",
        f"theta_p_deg = {deg(b.theta_p)}",
        f"theta_s_deg = {deg(b.theta_s)}",
        f"theta_x_deg = {deg(b.theta_X)}",
        f"theta_y_deg = {deg(b.theta_Y)}",
        f"theta_z_deg = {deg(b.theta_Z)}",
        f"t = {', '.join(repr(float(c)) for c in b.t)}",
        "",
        "[refine]",
        f"learning_rate = {r.learning_rate!r}",
        f"max_iters = {r.max_iters}",
        f"adam_beta1 = {r.adam_beta1!r}",
        f"adam_beta2 = {r.adam_beta2!r}",
        f"adam_eps = {r.adam_eps!r}",
        f"gradient_mode = {r.gradient_mode}",
        f"fd_step = {r.fd_step!r}",
        f"objective_mode = {r.objective_mode}",
        "refine_joint_map = " + ", ".join(f"{k}={v}" for k, v in r.refine_joint_map),
        "",
        "[dataset]",
        f"n_views = {d.n_views}",
        f"azimuth_step_deg = {360.0 / d.n_views!r}",
        f"radius = {d.radius!r}",
        f"focal = {d.focal!r}",
        f"image_size = {d.image_size}",
        f"orbit_center = {', '.join(repr(float(c)) for c in d.orbit_center)}",
        "",
    ]
    if cfg.out_dir is not None:
        lines += ["[output]", f"out_dir = {rel(cfg.out_dir)}", ""]
    return "\n".join(lines)

