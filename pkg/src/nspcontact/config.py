"""Experiment configuration: a flat sectioned key=value format.

Three sections -- [physics], [numerics], [experiment] -- with every key
optional; unset keys take the documented baseline defaults (Boltzmann
electrons, R = 1, gamma = 5/3, mu = kappa = 1, right state (1, 0, 1), and a
boundary pressure chosen for wave strength 0.1).  Duplicate keys and
unknown keys are hard errors, never silent overrides.
"""

import configparser
import hashlib
import io
from dataclasses import dataclass, replace

__all__ = [
    "ConfigError",
    "PhysicsConfig",
    "NumericsConfig",
    "ExperimentSpec",
    "ExperimentConfig",
    "load_config",
    "parse_config_text",
    "EXPERIMENT_KINDS",
]

EXPERIMENT_KINDS = (
    "profile-verify",
    "stability-run",
    "kappa-sweep",
    "boundary-identity",
    "decay-suite",
    "validate-config",
)


class ConfigError(ValueError):
    """Configuration parse or validation failure."""


@dataclass(frozen=True)
class PhysicsConfig:
    R: float = 1.0
    gamma: float = 5.0 / 3.0
    mu: float = 1.0
    kappa: float = 1.0
    p_minus: str = "auto"      # "auto" (from delta) or a positive number
    delta: float = 0.1         # target wave strength when p_minus = auto
    v_plus: float = 1.0
    u_plus: float = 0.0
    theta_plus: float = 1.0
    density_kind: str = "boltzmann"
    gamma_e: float = 1.0
    A_e: float = 1.0


@dataclass(frozen=True)
class NumericsConfig:
    L: float = 80.0
    N: int = 2048
    dt_initial: float = 0.05
    t_end: float = 50.0
    cadence: float = 0.5
    theta_scheme: float = 1.0
    far_field_bc: str = "dirichlet"
    newton_tol: float = 1e-10
    xi_max: float = 20.0
    n_nodes: int = 4001
    delta_cap: float = 0.3


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "profile-verify"
    amplitude_v: float = 0.01
    amplitude_u: float = 0.0
    amplitude_theta: float = 0.0
    shape: str = "gaussian_bump"
    center: str = "auto"       # "auto" -> L/4, or a number
    width: float = 1.0
    sweep_param: str = ""
    sweep_values: str = ""
    out_dir: str = "out"
    hash_seed: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    physics: PhysicsConfig
    numerics: NumericsConfig
    experiment: ExperimentSpec

    @classmethod
    def defaults(cls):
        return cls(PhysicsConfig(), NumericsConfig(), ExperimentSpec())

    def resolved_text(self, p_minus_value=None):
        """Canonical echo of every setting, defaults included.

        ``p_minus_value`` substitutes the numeric boundary pressure once an
        auto value has been resolved, so the echoed file is self-contained.
        """
        out = io.StringIO()
        for section_name, obj in (
            ("physics", self.physics),
            ("numerics", self.numerics),
            ("experiment", self.experiment),
        ):
            out.write(f"[{section_name}]\n")
            for key in obj.__dataclass_fields__:
                val = getattr(obj, key)
                if (
                    section_name == "physics"
                    and key == "p_minus"
                    and p_minus_value is not None
                ):
                    val = p_minus_value
                text = val if isinstance(val, str) else repr(val)
                out.write(f"{key} = {text}\n")
            out.write("\n")
        return out.getvalue()

    def config_hash(self, p_minus_value=None):
        text = self.resolved_text(p_minus_value=p_minus_value)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def with_overrides(self, overrides):
        """Apply CLI overrides given as 'section.key=value' strings."""
        sections = {
            "physics": dict(),
            "numerics": dict(),
            "experiment": dict(),
        }
        for item in overrides:
            key_part, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not of form section.key=value")
            section, dot, key = key_part.strip().partition(".")
            if not dot:
                raise ConfigError(f"override key {key_part!r} must be section.key")
            if section not in sections:
                raise ConfigError(f"unknown config section {section!r}")
            sections[section][key] = value.strip()
        phys = _build_section(PhysicsConfig, "physics", sections["physics"], base=self.physics)
        num = _build_section(NumericsConfig, "numerics", sections["numerics"], base=self.numerics)
        exp = _build_section(ExperimentSpec, "experiment", sections["experiment"], base=self.experiment)
        cfg = ExperimentConfig(phys, num, exp)
        _validate(cfg)
        return cfg


_FIELD_TYPES = {
    (PhysicsConfig, "p_minus"): "number_or_auto",
    (PhysicsConfig, "density_kind"): "str",
    (NumericsConfig, "N"): "int",
    (NumericsConfig, "n_nodes"): "int",
    (NumericsConfig, "far_field_bc"): "str",
    (ExperimentSpec, "kind"): "str",
    (ExperimentSpec, "shape"): "str",
    (ExperimentSpec, "center"): "number_or_auto",
    (ExperimentSpec, "sweep_param"): "str",
    (ExperimentSpec, "sweep_values"): "str",
    (ExperimentSpec, "out_dir"): "str",
    (ExperimentSpec, "hash_seed"): "str",
}


def _convert(cls, key, raw, section):
    kind = _FIELD_TYPES.get((cls, key), "float")
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        if kind == "number_or_auto":
            if raw == "auto":
                return "auto"
            float(raw)
            return raw
        return raw
    except ValueError:
        raise ConfigError(
            f"[{section}] {key}: cannot interpret {raw!r}"
        ) from None


def _build_section(cls, section, raw_items, base=None):
    obj = base if base is not None else cls()
    known = set(cls.__dataclass_fields__)
    updates = {}
    for key, raw in raw_items.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        updates[key] = _convert(cls, key, raw, section)
    return replace(obj, **updates) if updates else obj


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _validate(cfg):
    p = cfg.physics
    _require(p.R > 0, "R must be positive")
    _require(p.gamma > 1.0, "gamma must exceed 1")
    _require(p.mu > 0, "mu must be positive")
    _require(p.kappa > 0, "kappa must be positive")
    _require(p.v_plus > 0, "v_plus must be positive")
    _require(p.theta_plus > 0, "theta_plus must be positive")
    _require(p.delta >= 0, "delta must be nonnegative")
    if p.p_minus != "auto":
        _require(float(p.p_minus) > 0, "p_minus must be positive or 'auto'")
    _require(
        p.density_kind in ("boltzmann", "generalized"),
        "density_kind must be 'boltzmann' or 'generalized'",
    )
    _require(p.gamma_e >= 1.0, "gamma_e must be at least 1")
    _require(p.A_e > 0, "A_e must be positive")

    n = cfg.numerics
    _require(n.L > 0, "L must be positive")
    _require(n.N >= 16, "N must be at least 16")
    _require(n.dt_initial > 0, "dt_initial must be positive")
    _require(n.t_end >= 0, "t_end must be nonnegative")
    _require(n.cadence > 0, "cadence must be positive")
    _require(0.0 <= n.theta_scheme <= 1.0, "theta_scheme must lie in [0, 1]")
    _require(
        n.far_field_bc in ("dirichlet", "neumann"),
        "far_field_bc must be 'dirichlet' or 'neumann'",
    )
    _require(n.newton_tol > 0, "newton_tol must be positive")
    _require(n.xi_max > 0, "xi_max must be positive")
    _require(n.n_nodes >= 101, "n_nodes must be at least 101")
    _require(n.n_nodes % 2 == 1, "n_nodes must be odd")
    _require(n.delta_cap > 0, "delta_cap must be positive")

    e = cfg.experiment
    _require(e.kind in EXPERIMENT_KINDS, f"kind must be one of {EXPERIMENT_KINDS}")
    _require(
        e.shape in ("gaussian_bump", "compact_bump"),
        "shape must be 'gaussian_bump' or 'compact_bump'",
    )
    if e.center != "auto":
        float(e.center)
    _require(e.width > 0, "width must be positive")
    if e.sweep_param:
        _require(
            e.sweep_param in ("kappa", "delta", "N"),
            "sweep_param must be one of kappa, delta, N",
        )
        _require(e.sweep_values != "", "sweep_param set but sweep_values empty")
    if e.sweep_values:
        for tok in e.sweep_values.split(","):
            try:
                float(tok)
            except ValueError:
                raise ConfigError(
                    f"sweep_values entry {tok.strip()!r} is not a number"
                ) from None


def sweep_value_list(cfg):
    if not cfg.experiment.sweep_values:
        return []
    return [float(tok) for tok in cfg.experiment.sweep_values.split(",")]


def perturbation_center(cfg):
    if cfg.experiment.center == "auto":
        return 0.25 * cfg.numerics.L
    return float(cfg.experiment.center)


def parse_config_text(text, origin="<config>"):
    parser = configparser.ConfigParser(
        interpolation=None, strict=True, delimiters=("=",)
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=origin)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{origin}: duplicate key: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: parse error: {exc}") from None

    section_map = {
        "physics": (PhysicsConfig, {}),
        "numerics": (NumericsConfig, {}),
        "experiment": (ExperimentSpec, {}),
    }
    for section in parser.sections():
        if section not in section_map:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        section_map[section][1].update(parser.items(section))

    cfg = ExperimentConfig(
        physics=_build_section(PhysicsConfig, "physics", section_map["physics"][1]),
        numerics=_build_section(NumericsConfig, "numerics", section_map["numerics"][1]),
        experiment=_build_section(
            ExperimentSpec, "experiment", section_map["experiment"][1]
        ),
    )
    _validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, origin=str(path))
