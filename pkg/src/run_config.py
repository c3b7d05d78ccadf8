"""
Run configuration: flat TOML file, CLI overrides, and the header written into every CSV.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import toml

from .core import InvalidParam, ModelParams, QubitDensityMatrix, TimeGrid
from .qubit_config import CODE_VERSION, DEFAULT_X, INITIAL_STATES, METHODS, REFERENCE, RUN_DEFAULTS

logger = logging.getLogger(__name__)

HEADER_PREFIX = '# '


class ConfigError(InvalidParam):
    """Bad configuration value; `flag` names the CLI flag (or file key) at fault."""

    def __init__(self, key, message):
        self.key = key
        self.flag = '--' + key.replace('_', '-')
        super().__init__(f"{self.flag}: {message}")


@dataclass(frozen=True)
class EngineResolution:
    """Discrete bath and thermal ensemble used by the oracle and functional engines."""
    n_modes: int
    band: float
    mmax: int
    thermal_window: float = None


_FLOAT_KEYS = ('x', 'beta_omega0', 'gamma0_over_omega0', 'tmax', 'dt', 'rho11', 'rho10_re',
               'rho10_im', 'band', 'step', 'thermal_window')
_INT_KEYS = ('n_modes', 'mmax', 'n_jobs')


@dataclass
class RunConfig:
    method: list = field(default_factory=lambda: list(RUN_DEFAULTS['method']))
    x: float = RUN_DEFAULTS['x']
    beta_omega0: float = RUN_DEFAULTS['beta_omega0']
    gamma0_over_omega0: float = RUN_DEFAULTS['gamma0_over_omega0']
    tmax: float = RUN_DEFAULTS['tmax']
    dt: float = RUN_DEFAULTS['dt']
    initial: str = RUN_DEFAULTS['initial']
    rho11: float = RUN_DEFAULTS['rho11']
    rho10_re: float = RUN_DEFAULTS['rho10_re']
    rho10_im: float = RUN_DEFAULTS['rho10_im']
    fidelity_initial: str = RUN_DEFAULTS['fidelity_initial']
    entropy_initial: str = RUN_DEFAULTS['entropy_initial']
    n_modes: int = RUN_DEFAULTS['n_modes']
    band: float = RUN_DEFAULTS['band']
    mmax: int = RUN_DEFAULTS['mmax']
    step: float = RUN_DEFAULTS['step']
    thermal_window: float = RUN_DEFAULTS['thermal_window']
    n_jobs: int = RUN_DEFAULTS['n_jobs']
    checkpoint_dir: str = RUN_DEFAULTS['checkpoint_dir']
    absolute_time: bool = RUN_DEFAULTS['absolute_time']

    def __post_init__(self):
        if isinstance(self.method, str):
            self.method = [self.method]
        self.method = [str(m) for m in self.method]
        for key in _FLOAT_KEYS:
            value = getattr(self, key)
            if value is not None:
                setattr(self, key, self._number(key, value, float))
        for key in _INT_KEYS:
            setattr(self, key, self._number(key, getattr(self, key), int))
        if self.checkpoint_dir is not None:
            self.checkpoint_dir = str(self.checkpoint_dir)
        self.absolute_time = bool(self.absolute_time)

    @staticmethod
    def _number(key, value, kind):
        if isinstance(value, bool):
            raise ConfigError(key, f"expected a number, got {value!r}")
        try:
            number = kind(value)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected a number, got {value!r}") from None
        if kind is int and number != value:
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return number

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, mapping, source='config file'):
        unknown = sorted(set(mapping) - set(cls.keys()))
        if unknown:
            raise ConfigError(unknown[0], f"unknown {source} key; valid keys: {', '.join(cls.keys())}")
        return cls(**mapping)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            mapping = toml.load(path)
        except (OSError, toml.TomlDecodeError) as exc:
            raise ConfigError('config', f"cannot read {path}: {exc}") from None
        logger.info(f"Loaded run config from {path}")
        return cls.from_mapping(mapping)

    def merged(self, overrides):
        """Copy with every non-None override applied (flags beat the file)."""
        given = {k: v for k, v in overrides.items() if v is not None and v != ()}
        unknown = sorted(set(given) - set(self.keys()))
        if unknown:
            raise ConfigError(unknown[0], "unknown option")
        if 'method' in given:
            given['method'] = list(given['method'])
        if 'x' in given:
            given.setdefault('beta_omega0', None)
        elif 'beta_omega0' in given:
            given['x'] = None
        return replace(self, **given)

    def validate(self):
        bad = [m for m in self.method if m not in METHODS]
        if bad or not self.method:
            raise ConfigError('method', f"pick one or more of {METHODS}, got {self.method}")
        if self.x is not None and self.beta_omega0 is not None:
            raise ConfigError('beta_omega0', "give either --x or --beta-omega0, not both")
        if self.x is not None and not 0.0 <= self.x < 1.0:
            raise ConfigError('x', f"must lie in [0, 1), got {self.x}")
        if self.beta_omega0 is not None and not self.beta_omega0 > 0:
            raise ConfigError('beta_omega0', f"must be positive, got {self.beta_omega0}")
        if not self.gamma0_over_omega0 > 0:
            raise ConfigError('gamma0_over_omega0', f"must be positive, got {self.gamma0_over_omega0}")
        if not (self.tmax > 0 and math.isfinite(self.tmax)):
            raise ConfigError('tmax', f"must be positive, got {self.tmax}")
        if not 0 < self.dt <= self.tmax:
            raise ConfigError('dt', f"must lie in (0, tmax], got {self.dt}")
        try:
            self.time_grid()
        except InvalidParam as exc:
            raise ConfigError('dt', str(exc)) from None
        for key in ('initial', 'fidelity_initial', 'entropy_initial'):
            if getattr(self, key) not in INITIAL_STATES:
                raise ConfigError(key, f"pick one of {INITIAL_STATES}, got {getattr(self, key)!r}")
        if 'custom' in (self.initial, self.fidelity_initial, self.entropy_initial) and self.rho11 is None:
            raise ConfigError('rho11', "a custom initial state needs --rho11")
        if self.n_modes < 3 or self.n_modes % 2 == 0:
            raise ConfigError('n_modes', f"must be odd and >= 3, got {self.n_modes}")
        if not 0 < self.band < 2.0:
            raise ConfigError('band', f"must lie in (0, 2) in units of omega0, got {self.band}")
        if self.mmax < 0:
            raise ConfigError('mmax', f"must be non-negative, got {self.mmax}")
        if self.step is not None and not self.step > 0:
            raise ConfigError('step', f"must be positive, got {self.step}")
        if self.thermal_window is not None and not self.thermal_window > 0:
            raise ConfigError('thermal_window', f"must be positive, got {self.thermal_window}")
        if self.n_jobs == 0:
            raise ConfigError('n_jobs', "must be non-zero (negative counts follow joblib)")
        try:
            for name in {self.initial, self.fidelity_initial, self.entropy_initial}:
                self.state(name)
        except ValueError as exc:
            raise ConfigError('rho11', str(exc)) from None
        return self

    @property
    def resolved_x(self):
        if self.x is not None:
            return self.x
        if self.beta_omega0 is not None:
            return math.exp(-self.beta_omega0)
        return DEFAULT_X

    def model_params(self):
        if self.beta_omega0 is not None:
            return ModelParams.from_beta_omega0(self.beta_omega0, self.gamma0_over_omega0)
        return ModelParams.from_x(self.resolved_x, self.gamma0_over_omega0)

    def time_grid(self):
        return TimeGrid.uniform(self.tmax, self.dt)

    def engine_resolution(self):
        """
        Bath and ensemble of the exact engines. A thermal run without --thermal-window runs on
        the thermal reference bath, since every mode of a wide band cannot be populated;
        --n-modes, --band and --mmax apply to thermal runs once a window is set.
        """
        if self.resolved_x == 0.0 or self.thermal_window is not None:
            return EngineResolution(self.n_modes, self.band, self.mmax, self.thermal_window)
        resolution = EngineResolution(
            REFERENCE['thermal_n_modes'], REFERENCE['thermal_band'],
            REFERENCE['thermal_mmax'], REFERENCE['thermal_window'],
        )
        ignored = [f"--{key.replace('_', '-')}" for key in ('n_modes', 'band', 'mmax')
                   if getattr(self, key) != RUN_DEFAULTS[key]]
        if ignored:
            logger.warning(f"{', '.join(ignored)} ignored at x > 0 without --thermal-window")
        logger.info(f"Thermal engines run on the reference bath: {resolution}")
        return resolution

    def state(self, name):
        if name == 'custom':
            return QubitDensityMatrix.from_entries(self.rho11, complex(self.rho10_re, self.rho10_im))
        return QubitDensityMatrix.named(name)

    def initial_state(self):
        return self.state(self.initial)

    def as_dict(self):
        # TOML has no null: unset options are left out and come back as defaults
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_toml(self):
        return toml.dumps(self.as_dict())

    def header_lines(self):
        lines = [f'code_version = "{CODE_VERSION}"'] + self.to_toml().splitlines()
        return [HEADER_PREFIX + line for line in lines if line.strip()]

    @classmethod
    def from_header(cls, text):
        """RunConfig from the '# ' comment block at the top of an emitted CSV."""
        body = []
        for line in text.splitlines():
            if not line.startswith(HEADER_PREFIX.rstrip()):
                break
            body.append(line[len(HEADER_PREFIX):] if line.startswith(HEADER_PREFIX) else '')
        mapping = toml.loads("\n".join(body))
        mapping.pop('code_version', None)
        return cls.from_mapping(mapping, source='header')
