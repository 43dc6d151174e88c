"""Run configuration: every architecture, training, data and path setting in one object.

Configuration files hold ``section.key = value`` lines; ``#`` starts a
comment and blank lines are ignored. Sections are ``glimpse``, ``sequence``,
``train``, ``synth`` and ``paths``. Conv stage lists are written
``channels:kernel:stride`` comma separated, booleans ``true``/``false`` and a
missing optional value ``none``.
"""
import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

from ctanet.core.errors import ConfigurationError
from ctanet.core.glimpse import ConvStage, GlimpseConfig
from ctanet.core.sequence import SequenceConfig
from ctanet.core.synth import SynthSpec
from ctanet.core.train import TrainConfig
from ctanet.utils import parse_boolean_none_values_from_kwargs


logger = logging.getLogger(__name__)

DATA_DIR = os.getenv("CTANET_DATA_DIR", "./data")
RUN_CONFIG_FILE = 'run_config.txt'


@dataclass
class PathsConfig:
    data_dir: str = field(default_factory=lambda: os.path.join(DATA_DIR, 'dataset'))
    out_dir: str = field(default_factory=lambda: os.path.join(DATA_DIR, 'runs'))


SECTIONS = {
    'glimpse': GlimpseConfig,
    'sequence': SequenceConfig,
    'train': TrainConfig,
    'synth': SynthSpec,
    'paths': PathsConfig,
}


@dataclass
class RunConfig:
    """Union of the section configs; every field has a default."""
    glimpse: GlimpseConfig = field(default_factory=GlimpseConfig)
    sequence: SequenceConfig = field(default_factory=SequenceConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self) -> None:
        if self.glimpse.frames_per_video != self.train.frames_per_video:
            raise ConfigurationError(f"glimpse.frames_per_video ({self.glimpse.frames_per_video}) and "
                                     f"train.frames_per_video ({self.train.frames_per_video}) must agree")

    def dumps(self) -> str:
        """Every field, one ``section.key = value`` line each."""
        lines = []
        for section in SECTIONS:
            for f in dataclasses.fields(getattr(self, section)):
                lines.append(f"{section}.{f.name} = {_format_value(getattr(getattr(self, section), f.name))}")
        return '\n'.join(lines) + '\n'

    def save(self, directory: str) -> str:
        """Echo the effective configuration as ``run_config.txt`` in ``directory``."""
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, RUN_CONFIG_FILE)
        with open(path, 'w') as f:
            f.write(self.dumps())
        return path

    def with_train(self, **changes: Any) -> 'RunConfig':
        """Copy with some training fields replaced."""
        return dataclasses.replace(self, train=dataclasses.replace(self.train, **changes))


def _format_value(value: Any) -> str:
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, list):
        return ','.join(str(v) for v in value)
    return str(value)


def _coerce(section: str, key: str, annotation: Any, value: Any) -> Any:
    if value is None:
        if annotation in (Optional[str], Optional[int]):
            return None
        raise ConfigurationError(f"{section}.{key} may not be none")
    try:
        if annotation is bool:
            if not isinstance(value, bool):
                raise ValueError(f"expected true or false, got '{value}'")
            return value
        if annotation is int or annotation == Optional[int]:
            return int(value)
        if annotation is float:
            return float(value)
        if annotation is ConvStage:
            return ConvStage.parse(str(value))
        if annotation == List[ConvStage]:
            return [ConvStage.parse(part) for part in str(value).split(',') if part.strip()]
        return str(value)
    except ValueError as e:
        if isinstance(e, ConfigurationError):
            raise
        raise ConfigurationError(f"invalid value for {section}.{key}: {e}")


def _split_assignment(text: str, origin: str) -> Tuple[str, str, str]:
    if '=' not in text:
        raise ConfigurationError(f"{origin}: expected 'section.key = value', got '{text}'")
    name, value = (part.strip() for part in text.split('=', 1))
    if '.' not in name:
        raise ConfigurationError(f"{origin}: '{name}' is not of the form section.key")
    section, key = name.split('.', 1)
    if section not in SECTIONS:
        raise ConfigurationError(f"{origin}: unknown section '{section}', expected one of {sorted(SECTIONS)}")
    return section, key, value


def build_run_config(values: Dict[str, Dict[str, str]]) -> RunConfig:
    """Construct a RunConfig from raw string values per section, validating each section."""
    sections = {}
    for section, cls in SECTIONS.items():
        raw = values.get(section, {})
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown key(s) {', '.join(section + '.' + k for k in unknown)}")
        parsed = parse_boolean_none_values_from_kwargs(raw)
        kwargs = {key: _coerce(section, key, known[key].type, value) for key, value in parsed.items()}
        sections[section] = cls(**kwargs)
    return RunConfig(**sections)


def parse_run_config(text: str = '', overrides: Optional[Iterable[str]] = None, origin: str = '<config>') -> RunConfig:
    """Parse config file text and apply ``section.key=value`` overrides after it.

    Raises
    ------
    ConfigurationError
        On malformed lines, unknown sections or keys, and values that fail
        coercion or validation.
    """
    values: Dict[str, Dict[str, str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        section, key, value = _split_assignment(line, f"{origin}:{lineno}")
        values.setdefault(section, {})[key] = value
    for override in overrides or []:
        section, key, value = _split_assignment(override, '--set')
        values.setdefault(section, {})[key] = value
    return build_run_config(values)


def load_run_config(path: Optional[str] = None, overrides: Optional[Iterable[str]] = None) -> RunConfig:
    """Read a config file (or the ``run_config.txt`` in a directory); None gives the defaults."""
    if path is None:
        return parse_run_config('', overrides)
    if os.path.isdir(path):
        path = os.path.join(path, RUN_CONFIG_FILE)
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file {path} not found")
    with open(path) as f:
        text = f.read()
    return parse_run_config(text, overrides, origin=path)


def config_for_checkpoint(checkpoint: str,
                          config_path: Optional[str] = None,
                          overrides: Optional[Iterable[str]] = None) -> RunConfig:
    """Architecture for a checkpoint: ``config_path`` when given, else the echoed run config beside it."""
    if config_path is None:
        echoed = os.path.join(os.path.dirname(os.path.abspath(checkpoint)), RUN_CONFIG_FILE)
        if not os.path.isfile(echoed):
            logger.warning(f"no {RUN_CONFIG_FILE} next to {checkpoint}; using default architecture")
            return load_run_config(None, overrides)
        config_path = echoed
    return load_run_config(config_path, overrides)


ConfigSource = Union[RunConfig, str, None]


def resolve_run_config(source: ConfigSource, overrides: Optional[List[str]] = None) -> RunConfig:
    """Accept a RunConfig, a path or None, the way job programs pass configs."""
    if isinstance(source, RunConfig):
        return source if not overrides else parse_run_config(source.dumps(), overrides)
    return load_run_config(source, overrides)
