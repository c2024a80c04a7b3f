# experiment_config.py
#
# Experiment documents: KEY=VALUE files with dotted keys (model.k=2), read with
# python-dotenv. Every key is known in advance; anything else is rejected.

from __future__ import annotations

import io
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from dotenv import dotenv_values

from diagnostics import DiagnosticsConfig
from errors import ConfigError, DomainError, ReportIOError
from micromacro_core import FULL_COUPLING, CouplingTerms
from time_integrator import COUPLINGS, SCHEMES, SchemeConfig

log = logging.getLogger(__name__)

FORMATS = ("csv", "json", "sqlite")
ECHO_NAME = "effective_config.env"

_PI_VALUE = re.compile(r"^\s*([-+0-9.eE]*)\s*\*?\s*pi\s*$")


@dataclass
class ModelSection:
    k: float = 0.0
    nu: float = 1.0
    linearized: bool = False


@dataclass
class DiscretizationSection:
    L_box: float = 64.0 * math.pi
    M: int = 64
    P: int = 6
    dt: float = 0.01
    T_final: float = 10.0
    scheme: str = "cnab"
    coupling: str = "implicit"
    cfl_safety: float = 0.5


@dataclass
class InitialSection:
    epsilon: float = 1e-3
    xi_cutoff: float = 0.25
    seed: int = 0


@dataclass
class OutputsSection:
    directory: str = "out"
    formats: Tuple[str, ...] = ("csv", "json")


@dataclass
class StudySection:
    seeds: int = 8
    epsilons: Tuple[float, ...] = (1e-3, 1e-2, 1e-1)
    L_boxes: Tuple[float, ...] = (16.0 * math.pi, 32.0 * math.pi, 64.0 * math.pi)


@dataclass
class ExperimentConfig:
    model: ModelSection = field(default_factory=ModelSection)
    discretization: DiscretizationSection = field(default_factory=DiscretizationSection)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    initial: InitialSection = field(default_factory=InitialSection)
    outputs: OutputsSection = field(default_factory=OutputsSection)
    study: StudySection = field(default_factory=StudySection)

    @property
    def terms(self) -> CouplingTerms:
        return CouplingTerms.linear() if self.model.linearized else FULL_COUPLING

    @property
    def out_dir(self) -> Path:
        return Path(self.outputs.directory)

    def scheme(self) -> SchemeConfig:
        d = self.discretization
        return SchemeConfig(
            dt=d.dt,
            scheme=d.scheme,
            T_final=d.T_final,
            cfl_safety=d.cfl_safety,
            coupling=d.coupling,
            terms=self.terms,
        )


# ---------------------------------------------------------------------------
# Value parsers
# ---------------------------------------------------------------------------


def parse_float(text: str) -> float:
    """Float with an optional pi factor: 2.5, 64pi, 64*pi, pi."""
    m = _PI_VALUE.match(text)
    if m:
        coef = m.group(1)
        return (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
    return float(text)


def parse_int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def parse_optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() == "auto" else parse_float(text)


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(parse_float(part) for part in text.split(",") if part.strip())


def _word_list(text: str) -> Tuple[str, ...]:
    return tuple(part.strip().lower() for part in text.split(",") if part.strip())


def _word(text: str) -> str:
    return text.strip().lower()


KEYS: Dict[str, Tuple[str, str, Callable[[str], Any]]] = {
    "model.k": ("model", "k", parse_float),
    "model.nu": ("model", "nu", parse_float),
    "model.linearized": ("model", "linearized", parse_bool),
    "discretization.L_box": ("discretization", "L_box", parse_float),
    "discretization.M": ("discretization", "M", parse_int),
    "discretization.P": ("discretization", "P", parse_int),
    "discretization.dt": ("discretization", "dt", parse_float),
    "discretization.T_final": ("discretization", "T_final", parse_float),
    "discretization.scheme": ("discretization", "scheme", _word),
    "discretization.coupling": ("discretization", "coupling", _word),
    "discretization.cfl_safety": ("discretization", "cfl_safety", parse_float),
    "diagnostics.s": ("diagnostics", "s", parse_int),
    "diagnostics.a": ("diagnostics", "a", parse_optional_float),
    "diagnostics.eta": ("diagnostics", "eta", parse_optional_float),
    "diagnostics.s_exp": ("diagnostics", "s_exp", parse_float),
    "diagnostics.record_every": ("diagnostics", "record_every", parse_int),
    "initial.epsilon": ("initial", "epsilon", parse_float),
    "initial.xi_cutoff": ("initial", "xi_cutoff", parse_float),
    "initial.seed": ("initial", "seed", parse_int),
    "outputs.directory": ("outputs", "directory", str.strip),
    "outputs.formats": ("outputs", "formats", _word_list),
    "study.seeds": ("study", "seeds", parse_int),
    "study.epsilons": ("study", "epsilons", _float_list),
    "study.L_boxes": ("study", "L_boxes", _float_list),
}


# ---------------------------------------------------------------------------
# Parsing and validation
# ---------------------------------------------------------------------------


def _validate(config: ExperimentConfig) -> None:
    m, d, g, i = config.model, config.discretization, config.diagnostics, config.initial

    if not m.k > 1.0:
        raise ConfigError(
            f"k must exceed 1: the boundary Hardy inequality and the drag-closure "
            f"integrals need k > 1 (got k={m.k})"
        )
    if m.nu < 0.0:
        raise ConfigError(f"nu must be nonnegative (got {m.nu})")
    if d.M < 4 or d.M & (d.M - 1):
        raise ConfigError(f"M must be a power of two (got {d.M})")
    if d.P < 2:
        raise ConfigError(f"P must be at least 2 so quadratic R-moments are representable (got {d.P})")
    if d.L_box <= 0.0:
        raise ConfigError(f"L_box must be positive (got {d.L_box})")
    if d.scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {sorted(SCHEMES)} (got {d.scheme!r})")
    if d.coupling not in COUPLINGS:
        raise ConfigError(f"coupling must be one of {list(COUPLINGS)} (got {d.coupling!r})")
    if g.s <= 2:
        raise ConfigError(f"s must exceed 2: the energy estimate needs s > N/2 + 1 = 2 (got s={g.s})")
    if i.epsilon < 0.0:
        raise ConfigError(f"epsilon must be positive (got {i.epsilon})")
    if i.xi_cutoff <= 0.0:
        raise ConfigError(f"xi_cutoff must be positive (got {i.xi_cutoff})")
    unknown = set(config.outputs.formats) - set(FORMATS)
    if unknown:
        raise ConfigError(f"unknown output formats {sorted(unknown)}; expected a subset of {FORMATS}")
    if config.study.seeds < 1:
        raise ConfigError(f"study.seeds must be at least 1 (got {config.study.seeds})")
    # raises for the remaining scheme constraints
    config.scheme()


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment document; missing keys take their defaults."""
    values = dotenv_values(stream=io.StringIO(text), interpolate=False)
    sections: Dict[str, Dict[str, Any]] = {}
    for key, raw in values.items():
        if key not in KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        if raw is None:
            raise ConfigError(f"configuration key {key!r} has no value")
        section, name, parser = KEYS[key]
        try:
            sections.setdefault(section, {})[name] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc

    if "k" not in sections.get("model", {}):
        raise ConfigError("model.k is required")

    config = ExperimentConfig()
    try:
        for section, updates in sections.items():
            setattr(config, section, replace(getattr(config, section), **updates))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    _validate(config)
    log.debug("[config] parsed %d keys", len(values))
    return config


def load_config(path: Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def with_overrides(
    config: ExperimentConfig, seed: Optional[int] = None, out: Optional[str] = None
) -> ExperimentConfig:
    if seed is not None:
        config = replace(config, initial=replace(config.initial, seed=seed))
    if out is not None:
        config = replace(config, outputs=replace(config.outputs, directory=str(out)))
    return config


# ---------------------------------------------------------------------------
# Echo
# ---------------------------------------------------------------------------


def _format_value(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def config_items(config: ExperimentConfig) -> List[Tuple[str, Any]]:
    items = []
    for key, (section, name, _) in KEYS.items():
        items.append((key, getattr(getattr(config, section), name)))
    return items


def config_to_text(config: ExperimentConfig) -> str:
    return "".join(f"{key}={_format_value(value)}\n" for key, value in config_items(config))


def config_echo(config: ExperimentConfig) -> Dict[str, Any]:
    return {key: (list(v) if isinstance(v, tuple) else v) for key, v in config_items(config)}


def write_effective_config(config: ExperimentConfig) -> Path:
    path = config.out_dir / ECHO_NAME
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(config_to_text(config), encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc
    log.info("[config] effective configuration written to %s", path)
    return path
