# config.py - solver / flow configuration loader

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from dotenv import load_dotenv

from pylayersep.classes.errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_FILE = "solver_config.json"
CONFIG_ENV = "LAYERSEP_CONFIG"
LOG_LEVEL_ENV = "LAYERSEP_LOG_LEVEL"


@dataclass(frozen=True)
class SolverConfig:
    """Weights, penalty schedule and stopping rules of the layer separation solver.

    Fields left as None are resolved from the data by `resolve`.
    """
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    lambda3: Optional[float] = None
    lambda4: Optional[float] = None
    lambda5: Optional[float] = None
    lambda6: Optional[float] = None
    lambda_sparse: Optional[float] = None
    mu0: Optional[float] = None
    n: float = 1.1
    mu_max_factor: float = 1e7
    outer_tol: float = 0.1
    inner_tol: float = 1e-4
    max_inner: int = 200
    max_outer: int = 20
    dmin: float = -4.0
    dmax: float = 4.0
    max_step: float = 1.0
    cg_tol: float = 1e-8
    cg_maxiter: int = 500
    interpolation_order: int = 1
    jacobian_step: float = 1e-3
    divergence_window: int = 5
    objective_slack: float = 1e-3

    def __post_init__(self):
        for name in ('lambda1', 'lambda2', 'lambda3', 'lambda4', 'lambda5', 'lambda6', 'lambda_sparse'):
            value = getattr(self, name)
            if value is not None and (not math.isfinite(value) or value < 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {value}")
        if self.mu0 is not None and not self.mu0 > 0:
            raise ConfigError(f"mu0 must be > 0, got {self.mu0}")
        if not self.n > 1:
            raise ConfigError(f"n must be > 1, got {self.n}")
        if not self.mu_max_factor >= 1:
            raise ConfigError(f"mu_max_factor must be >= 1, got {self.mu_max_factor}")
        for name in ('outer_tol', 'inner_tol', 'cg_tol', 'max_step', 'jacobian_step'):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.objective_slack < 0:
            raise ConfigError(f"objective_slack must be >= 0, got {self.objective_slack}")
        for name in ('max_inner', 'max_outer', 'cg_maxiter', 'divergence_window'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.dmin < self.dmax:
            raise ConfigError(f"dmin must be < dmax, got [{self.dmin}, {self.dmax}]")
        if self.interpolation_order not in (1, 3):
            raise ConfigError(f"interpolation_order must be 1 or 3, got {self.interpolation_order}")

    @property
    def is_resolved(self):
        return all(getattr(self, name) is not None for name in
                   ('lambda1', 'lambda2', 'lambda3', 'lambda4', 'lambda5', 'lambda6', 'lambda_sparse', 'mu0'))

    @property
    def mu_max(self):
        return self.mu0 * self.mu_max_factor

    def resolve(self, num_views, num_pixels, spectral_norm):
        """Fill data-dependent defaults: λ₁=λ₃=λ₄=λ_S=1/√max(K,hw), λ₂=10λ₃, λ₅=λ₆=λ₃, μ⁰=1.25/‖I‖₂"""
        base = 1.0 / math.sqrt(max(num_views, num_pixels))
        lambda3 = self.lambda3 if self.lambda3 is not None else base
        defaults = {
            'lambda1': base,
            'lambda2': 10.0 * lambda3,
            'lambda3': lambda3,
            'lambda4': base,
            'lambda5': lambda3,
            'lambda6': lambda3,
            'lambda_sparse': base,
            # an all-zero stack has no spectral scale
            'mu0': 1.25 / spectral_norm if spectral_norm > 0 else 1.25,
        }
        updates = {name: value for name, value in defaults.items() if getattr(self, name) is None}
        return replace(self, **updates)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**_checked_keys(cls, data, 'solver'))


@dataclass(frozen=True)
class FlowConfig:
    """Parameters of the built-in coarse-to-fine correspondence matcher"""
    search_radius: int = 8
    patch_radius: int = 2
    levels: int = 3
    smoothness: float = 0.05
    degeneracy_threshold: float = 0.25
    median_size: int = 3

    def __post_init__(self):
        if self.search_radius < 1:
            raise ConfigError(f"search_radius must be >= 1, got {self.search_radius}")
        if self.patch_radius < 1:
            raise ConfigError(f"patch_radius must be >= 1, got {self.patch_radius}")
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if self.smoothness < 0 or self.degeneracy_threshold < 0:
            raise ConfigError("smoothness and degeneracy_threshold must be >= 0")
        if self.median_size < 1:
            raise ConfigError(f"median_size must be >= 1, got {self.median_size}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**_checked_keys(cls, data, 'flow'))


@dataclass(frozen=True)
class LayerSepConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    source: Optional[str] = None

    def to_dict(self):
        return {'solver': self.solver.to_dict(), 'flow': self.flow.to_dict()}

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))


def _checked_keys(cls, data, section):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}' config: {', '.join(unknown)}")
    return dict(data)


def config_from_dict(data, source=None):
    unknown = sorted(set(data) - {'solver', 'flow', 'note'})
    if unknown:
        raise ConfigError(f"unknown top-level config key(s): {', '.join(unknown)}")
    return LayerSepConfig(SolverConfig.from_dict(data.get('solver', {})),
                          FlowConfig.from_dict(data.get('flow', {})),
                          source)


def load_solver_config(path=None):
    """Load configuration: explicit path, then $LAYERSEP_CONFIG, then ./solver_config.json, then defaults"""
    load_dotenv()
    explicit = path or os.getenv(CONFIG_ENV)
    candidate = explicit or CONFIG_FILE

    if not os.path.exists(candidate):
        if explicit:
            raise ConfigError(f"configuration file '{candidate}' not found")
        logger.debug("no %s found, using built-in defaults", CONFIG_FILE)
        return LayerSepConfig()

    try:
        with open(candidate, 'r') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"error loading configuration '{candidate}': {e}") from e

    config = config_from_dict(data, source=candidate)
    logger.info("loaded configuration from %s", candidate)
    return config


def default_log_level():
    load_dotenv()
    return os.getenv(LOG_LEVEL_ENV, 'INFO').upper()
