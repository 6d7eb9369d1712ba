# pace_config.py
"""
CLI configuration: a JSON config file merged with environment variables and
command-line flags (flags > environment > file > defaults).

Config file layout:
    {
      "n_agents": 4, "candidates_per_iter": 2, "max_iters": 1, "seed": 0, ...,
      "split_ratios": [0.4, 0.3, 0.3],
      "templates": "templates.json",
      "backend": {"kind": "mock", "mock_script": "script.json", ...}
    }
Relative paths resolve against the config file's directory.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field, ValidationError

from data_models import RunConfig
from llm_gateway import BackendConfig
from pace_errors import ConfigError
from pace_templates import TemplateSet

logger = logging.getLogger(__name__)

BASE_URL_ENV = "PACE_BASE_URL"

_RUN_KEYS = set(RunConfig.model_fields) - {"backend"}
_PATH_KEYS = ("cache_dir", "mock_script")

class CliConfig(BaseModel):
    """Run settings, backend settings and template path as one merged view"""
    run: RunConfig = Field(default_factory=RunConfig)
    templates_path: Optional[str] = Field(default=None, description="Template override file")

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> "CliConfig":
        """File values, then PACE_BASE_URL, then flag overrides"""
        raw: Dict[str, Any] = {}
        base_dir = Path.cwd()
        if path:
            try:
                with open(path, "r", encoding="utf-8") as handle:
                    raw = json.load(handle)
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read config file {path}: {e}") from e
            if not isinstance(raw, dict):
                raise ConfigError(f"config file {path} must hold a JSON object")
            base_dir = Path(path).resolve().parent

        unknown = sorted(set(raw) - _RUN_KEYS - {"backend", "templates"})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

        run_values = {key: value for key, value in raw.items() if key in _RUN_KEYS}
        backend_values = dict(raw.get("backend") or {})
        for key in _PATH_KEYS:
            if backend_values.get(key):
                backend_values[key] = str(base_dir / backend_values[key])
        templates_path = raw.get("templates")
        if templates_path:
            templates_path = str(base_dir / templates_path)

        if os.getenv(BASE_URL_ENV):
            backend_values["base_url"] = os.environ[BASE_URL_ENV]

        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key == "backend":
                backend_values["kind"] = value
            else:
                run_values[key] = value

        try:
            backend = BackendConfig(**backend_values)
            run = RunConfig(**run_values, backend=backend)
        except ValidationError as e:
            raise ConfigError(f"invalid configuration: {e}") from e

        logger.debug(f"Loaded config from {path or 'defaults'}: backend={backend.kind.value}")
        return cls(run=run, templates_path=templates_path)

    def templates(self) -> TemplateSet:
        if self.templates_path:
            return TemplateSet.from_file(self.templates_path)
        return TemplateSet()
