import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Optional, Tuple

import yaml

from .core.absa import Aspect, BackendConfig, BackendKind
from .core.aggregate import RATING_SOURCES, FilterPolicy
from .core.corpus import Region
from .core.synthetic import SyntheticConfig
from .utils import ConfigError, ValidationError

DEFAULT_CONFIG_NAME = 'urgentcare-absa.yaml'
SECRET_KEYS = ('api_key', 'key', 'token', 'secret', 'password')
LOG_LEVELS = ('debug', 'info', 'warning', 'error')


@dataclass(frozen=True)
class RunConfig:
    """Typed, validated view of the merged configuration."""

    reviews: Tuple[Path, ...]
    pois: Optional[Path]
    cbg_profiles: Optional[Path]
    cbg_geometries: Optional[Path]
    cbg_join: Optional[Path]
    annotations: Optional[Path]
    keyword: str
    regions: FrozenSet[Region]
    backend: BackendConfig
    policy: FilterPolicy
    relaxed_finances: int
    rating_source: str
    output_dir: Path
    cache_dir: Path
    seed: int
    evaluate_backends: Tuple[str, ...] = ()
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    def relaxed_policy(self) -> FilterPolicy:
        return self.policy.with_threshold(Aspect.FINANCES, self.relaxed_finances)


class ConfigManager:
    """Manages configuration for a pipeline run: YAML file merged over defaults."""

    def __init__(self, config_file: Optional[Path] = None):
        if config_file is None and Path(DEFAULT_CONFIG_NAME).exists():
            config_file = Path(DEFAULT_CONFIG_NAME)
        self.config_file = Path(config_file) if config_file is not None else None
        self.base_dir = self.config_file.resolve().parent if self.config_file else Path.cwd()

        self._config = None
        self._load_config()

    @staticmethod
    def _get_default_config() -> Dict[str, Any]:
        """Return default configuration."""
        return {
            'inputs': {
                'reviews': [],
                'pois': None,
                'cbg_profiles': None,
                'cbg_geometries': None,
                'cbg_join': None,
                'annotations': None,
            },
            'filters': {
                'keyword': 'urgent care',
                'regions': ['DMV', 'FL'],
            },
            'backend': {
                'kind': 'lexicon',
                'model': 'openai/gpt-4o-mini',
                'base_url': 'https://openrouter.ai/api/v1',
                'api_key_env': 'OPENROUTER_API_KEY',
                'max_retries': 3,
                'request_timeout': 60,
                'rate_limit': 5.0,
                'temperature': 0.0,
                'max_workers': 8,
                'failure_threshold': 0.10,
                'lenient_fences': True,
            },
            'policy': {
                'min_per_aspect': 10,
                'relaxed_finances': 0,
            },
            'aggregate': {
                'rating_source': 'text',
            },
            'evaluate': {
                'backends': [],
            },
            'synthesize': {
                'n_facilities': 500,
                'finances_coverage': 1.0,
                'noise_sd': 0.05,
                'n_annotated': 400,
            },
            'output_dir': './run',
            'cache_dir': None,
            'seed': 42,
            'preferences': {
                'log_level': 'info',
            },
        }

    def _load_config(self):
        """Load configuration from file, merged over the defaults."""
        self._config = self._get_default_config()
        if self.config_file is None:
            return
        if not self.config_file.exists():
            raise ConfigError(f"config file not found: {self.config_file}")
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                user = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config file {self.config_file}: {e}")
        if not isinstance(user, dict):
            raise ConfigError(f"config file {self.config_file} must contain a mapping")
        self._config = self._merge_configs(self._config, user)

    def _merge_configs(self, default: Dict[str, Any], user: Dict[str, Any]) -> Dict[str, Any]:
        """Merge user config with default config."""
        result = default.copy()
        for key, value in user.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._merge_configs(result[key], value)
            else:
                result[key] = value
        return result

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value using dot notation (e.g., 'backend.model')."""
        keys = key.split('.')
        value = self._config

        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default

        return value

    def set(self, key: str, value: Any) -> bool:
        """Set configuration value using dot notation. Changes stay in memory."""
        keys = key.split('.')
        config = self._config

        for k in keys[:-1]:
            if k not in config or not isinstance(config[k], dict):
                config[k] = {}
            config = config[k]

        config[keys[-1]] = value
        return True

    def list_all(self) -> Dict[str, Any]:
        """Return all configuration."""
        return copy.deepcopy(self._config)

    def snapshot(self) -> Dict[str, Any]:
        """Configuration with secret-looking keys removed, for manifests and display."""
        def scrub(node):
            if isinstance(node, dict):
                return {k: scrub(v) for k, v in node.items() if k.lower() not in SECRET_KEYS}
            if isinstance(node, list):
                return [scrub(v) for v in node]
            return node
        return scrub(self._config)

    def masked(self) -> Dict[str, Any]:
        """Configuration with secret values replaced, for `config show`."""
        def mask(node):
            if isinstance(node, dict):
                return {k: ('***' if k.lower() in SECRET_KEYS and v else mask(v)) for k, v in node.items()}
            if isinstance(node, list):
                return [mask(v) for v in node]
            return node
        return mask(self._config)

    def get_api_key(self) -> Optional[str]:
        """API key from the environment variable named by backend.api_key_env."""
        return os.getenv(self.get('backend.api_key_env', 'OPENROUTER_API_KEY')) or None

    def resolve_path(self, value: Any) -> Optional[Path]:
        if value in (None, ''):
            return None
        path = Path(os.path.expanduser(str(value)))
        return path if path.is_absolute() else (self.base_dir / path)

    @staticmethod
    def write_default(path: Path, force: bool = False) -> bool:
        """Write the default configuration to `path`; False if it exists and not forced."""
        path = Path(path)
        if path.exists() and not force:
            return False
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(ConfigManager._get_default_config(), f, default_flow_style=False, indent=2)
        return True

    def to_run_config(self) -> RunConfig:
        """Build the typed run configuration; raises ConfigError on bad values."""
        reviews = self.get('inputs.reviews') or []
        if isinstance(reviews, (str, Path)):
            reviews = [reviews]

        regions = self.get('filters.regions') or []
        if isinstance(regions, str):
            regions = [r for r in regions.split(',') if r.strip()]
        try:
            region_set = frozenset(Region(str(r).strip().upper()) for r in regions)
        except ValueError as e:
            raise ConfigError(f"unknown region in filters.regions: {e}")
        if not region_set:
            raise ConfigError("filters.regions must name at least one region")

        keyword = str(self.get('filters.keyword') or '').strip()
        if not keyword:
            raise ConfigError("filters.keyword must not be empty")

        b = self.get('backend', {})
        try:
            backend = BackendConfig(
                backend_kind=BackendKind(str(b.get('kind', 'lexicon'))),
                model_name=str(b.get('model')),
                max_retries=int(b.get('max_retries')),
                request_timeout=float(b.get('request_timeout')),
                rate_limit=float(b.get('rate_limit')),
                temperature=float(b.get('temperature')),
                base_url=str(b.get('base_url')),
                api_key_env=str(b.get('api_key_env')),
                max_workers=int(b.get('max_workers')),
                failure_threshold=float(b.get('failure_threshold')),
                lenient_fences=bool(b.get('lenient_fences')),
            )
        except ValueError as e:
            raise ConfigError(f"invalid backend setting: {e}")
        except TypeError as e:
            raise ConfigError(f"incomplete backend setting: {e}")

        rating_source = str(self.get('aggregate.rating_source'))
        if rating_source not in RATING_SOURCES:
            raise ConfigError(f"aggregate.rating_source must be one of {', '.join(RATING_SOURCES)}")

        try:
            seed = int(self.get('seed'))
            relaxed = int(self.get('policy.relaxed_finances'))
        except (TypeError, ValueError):
            raise ConfigError("seed and policy.relaxed_finances must be integers")
        if relaxed < 0:
            raise ConfigError("policy.relaxed_finances must be >= 0")

        s = self.get('synthesize', {})
        try:
            synthetic = SyntheticConfig(
                seed=seed,
                n_facilities=int(s.get('n_facilities')),
                finances_coverage=float(s.get('finances_coverage')),
                noise_sd=float(s.get('noise_sd')),
                n_annotated=int(s.get('n_annotated')),
            )
        except (TypeError, ValueError, ValidationError) as e:
            raise ConfigError(f"invalid synthesize setting: {e}")

        output_dir = self.resolve_path(self.get('output_dir') or './run')
        cache_dir = self.resolve_path(self.get('cache_dir')) or output_dir / 'cache'

        return RunConfig(
            reviews=tuple(self.resolve_path(p) for p in reviews),
            pois=self.resolve_path(self.get('inputs.pois')),
            cbg_profiles=self.resolve_path(self.get('inputs.cbg_profiles')),
            cbg_geometries=self.resolve_path(self.get('inputs.cbg_geometries')),
            cbg_join=self.resolve_path(self.get('inputs.cbg_join')),
            annotations=self.resolve_path(self.get('inputs.annotations')),
            keyword=keyword,
            regions=region_set,
            backend=backend,
            policy=FilterPolicy.from_config(self.get('policy.min_per_aspect')),
            relaxed_finances=relaxed,
            rating_source=rating_source,
            output_dir=output_dir,
            cache_dir=cache_dir,
            seed=seed,
            evaluate_backends=tuple(str(x) for x in (self.get('evaluate.backends') or [])),
            synthetic=synthetic,
        )

    def validate_config(self) -> Dict[str, Any]:
        """Validate current configuration and return status."""
        issues = []
        run = None
        try:
            run = self.to_run_config()
        except Exception as e:
            issues.append(str(e))

        if run is not None:
            for label, path in (('inputs.pois', run.pois), ('inputs.cbg_profiles', run.cbg_profiles),
                                ('inputs.cbg_geometries', run.cbg_geometries), ('inputs.cbg_join', run.cbg_join),
                                ('inputs.annotations', run.annotations)):
                if path is not None and not path.exists():
                    issues.append(f"{label} not found: {path}")
            for path in run.reviews:
                if not path.exists():
                    issues.append(f"inputs.reviews entry not found: {path}")
            if run.backend.backend_kind is BackendKind.REMOTE and not self.get_api_key():
                issues.append(f"remote-llm backend needs the {run.backend.api_key_env} environment variable")
        if self.get('backend.api_key') or self.get('api_key'):
            issues.append("API keys in the config file are ignored; use the environment variable")
        if str(self.get('preferences.log_level')).lower() not in LOG_LEVELS:
            issues.append(f"preferences.log_level must be one of {', '.join(LOG_LEVELS)}")

        return {
            'valid': len(issues) == 0,
            'issues': issues,
            'config_file': str(self.config_file) if self.config_file else None,
            'api_key_env': self.get('backend.api_key_env'),
            'api_key_present': bool(self.get_api_key()),
        }
