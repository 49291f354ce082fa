import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from pydantic import ValidationError

from models.config import (
    HarnessConfig,
    ModelAlias,
    ProviderDialect,
    ProviderSettings,
    ResolvedConfig,
    default_providers,
)
from pipeline.errors import ConfigurationError
from utils.logging import get_pipeline_logger

logger = get_pipeline_logger("config")

ENV_PREFIX = "PRAGMABENCH_"
CONFIG_ENV_VAR = "PRAGMABENCH_CONFIG"
# Keys whose values are JSON objects when given through the environment
MAPPING_KEYS = {"dataset_paths", "providers", "model_aliases"}
COMMENT_KEY = "_comments"

LAYER_FLAG = "flag"
LAYER_ENV = "env"
LAYER_FILE = "file"
LAYER_DEFAULT = "default"


class ConfigManager:
    """
    Resolves HarnessConfig from four layers: flags > environment > file > defaults.

    Environment values use ``PRAGMABENCH_<KEY>``; the config file is JSON with
    ``${VAR}`` substitution and is chosen by ``--config`` or PRAGMABENCH_CONFIG.
    """

    def __init__(self, environ: Optional[Dict[str, str]] = None):
        self.environ = environ if environ is not None else os.environ

    def config_path(self, explicit: Optional[str] = None) -> Optional[Path]:
        chosen = explicit or self.environ.get(CONFIG_ENV_VAR)
        if not chosen:
            return None
        path = Path(chosen)
        if not path.exists():
            raise ConfigurationError(f"Configuration file {path} does not exist")
        return path

    def load_file(self, config_path: Optional[Path]) -> Dict[str, Any]:
        if config_path is None:
            return {}

        try:
            with open(config_path, "r", encoding="utf-8") as f:
                config_data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Invalid JSON in {config_path}: {e}")
        except OSError as e:
            raise ConfigurationError(f"Failed to read {config_path}: {e}")

        if not isinstance(config_data, dict):
            raise ConfigurationError(f"{config_path} must hold a JSON object")
        config_data.pop(COMMENT_KEY, None)
        return self._substitute_env_vars(config_data)

    def load_env(self) -> Dict[str, Any]:
        values: Dict[str, Any] = {}
        for key in HarnessConfig.model_fields:
            raw = self.environ.get(f"{ENV_PREFIX}{key.upper()}")
            if raw is None or raw == "":
                continue
            if key in MAPPING_KEYS:
                try:
                    values[key] = json.loads(raw)
                except json.JSONDecodeError as e:
                    raise ConfigurationError(
                        f"{ENV_PREFIX}{key.upper()} must be a JSON object: {e}"
                    )
            else:
                values[key] = raw
        return values

    def resolve(
        self,
        flags: Optional[Dict[str, Any]] = None,
        config_file: Optional[str] = None,
    ) -> ResolvedConfig:
        flag_values = {k: v for k, v in (flags or {}).items() if v is not None}
        unknown = sorted(set(flag_values) - set(HarnessConfig.model_fields))
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys: {', '.join(unknown)}")

        file_values = self.load_file(self.config_path(config_file))
        env_values = self.load_env()

        merged: Dict[str, Any] = {}
        sources: Dict[str, str] = {}
        for layer, values in (
            (LAYER_FILE, file_values),
            (LAYER_ENV, env_values),
            (LAYER_FLAG, flag_values),
        ):
            for key, value in values.items():
                merged[key] = value
                sources[key] = layer
        for key in HarnessConfig.model_fields:
            sources.setdefault(key, LAYER_DEFAULT)

        if "providers" in merged:
            merged["providers"] = self._merge_providers(merged["providers"])

        try:
            config = HarnessConfig.model_validate(merged)
        except ValidationError as e:
            raise ConfigurationError(self._format_errors(e, sources))

        return ResolvedConfig(config=config, sources=sources)

    @staticmethod
    def _merge_providers(configured: Any) -> Any:
        if not isinstance(configured, dict):
            return configured
        providers: Dict[str, Any] = dict(default_providers())
        providers.update(configured)
        return providers

    @staticmethod
    def _format_errors(error: ValidationError, sources: Dict[str, str]) -> str:
        error_details = []
        for item in error.errors():
            field = " -> ".join(str(x) for x in item["loc"])
            top = str(item["loc"][0]) if item["loc"] else ""
            layer = sources.get(top, LAYER_FILE)
            error_details.append(f"  {field} ({layer}): {item['msg']}")
        return "Configuration validation failed:\n" + "\n".join(error_details)

    def _substitute_env_vars(self, config_data: Dict[str, Any]) -> Dict[str, Any]:
        def substitute_value(value):
            if isinstance(value, str) and value.startswith("${") and value.endswith("}"):
                env_var = value[2:-1]
                env_value = self.environ.get(env_var)
                if env_value is None:
                    raise ConfigurationError(f"Environment variable {env_var} is not set")
                return env_value
            elif isinstance(value, dict):
                return {k: substitute_value(v) for k, v in value.items()}
            elif isinstance(value, list):
                return [substitute_value(item) for item in value]
            return value

        return substitute_value(config_data)


def resolve_model(config: HarnessConfig) -> Tuple[str, str]:
    """
    (provider id, provider model id) for the configured model.

    ``--model`` may name a preset from ``model_aliases``; an explicit provider
    wins over the preset's provider.
    """
    if not config.model:
        raise ConfigurationError("A model is required (--model)")

    alias: Optional[ModelAlias] = config.model_aliases.get(config.model)
    if alias is not None:
        return config.provider or alias.provider, alias.model

    if not config.provider:
        raise ConfigurationError("A provider is required (--provider)")
    return config.provider, config.model


def model_display_names(config: HarnessConfig) -> Dict[str, str]:
    """Provider model id -> preset display name, for report rows."""
    return {alias.model: name for name, alias in config.model_aliases.items()}


def provider_settings(config: HarnessConfig, provider_id: str) -> ProviderSettings:
    if provider_id not in config.providers:
        known = ", ".join(sorted(config.providers))
        raise ConfigurationError(f"Unknown provider '{provider_id}' (configured: {known})")
    return config.providers[provider_id]


def recorded_mock_mode(config: HarnessConfig, provider_id: str) -> Optional[str]:
    """Mock mode for the run manifest; only mock providers see sample tags in prompts."""
    if provider_settings(config, provider_id).dialect is ProviderDialect.MOCK:
        return config.mock
    if config.mock:
        logger.warning(f"Ignoring mock mode '{config.mock}' for provider '{provider_id}'")
    return None
