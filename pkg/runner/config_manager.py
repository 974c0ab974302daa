"""
Configuration manager module for handling run settings.

This module defines the ConfigManager class, which loads the environment
(thread cap, log level), parses an INI run config or a named experiment
preset, validates it into a FlowConfig and serialises the effective config
back to INI text.
"""

import configparser
import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic import ValidationError

from common_utils.errors import ConfigError
from common_utils.utils import get_experiment_preset_by_name
from schemas.flow import SECTION_KEYS, FlowConfig

KEY_SECTIONS = {key: section for section, keys in SECTION_KEYS.items() for key in keys}
NONE_VALUES = {"", "none", "null"}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines = {}
    section = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
        elif "=" in line and not line.startswith(("#", ";")):
            lines[(section, line.split("=", 1)[0].strip().lower())] = number
    return lines


class ConfigManager:
    def __init__(self, config_path=None, preset=None):
        load_dotenv()
        self.threads = os.getenv("PLATEAU_FLOW_THREADS")
        self.log_level = os.getenv("PLATEAU_FLOW_LOG_LEVEL", "INFO")
        self.config_path = Path(config_path) if config_path is not None else None

        if (config_path is None) == (preset is None):
            raise ConfigError("give exactly one of a config file or a preset name")
        if preset is not None:
            self.config = self.from_preset(preset)
        else:
            self.config = self.from_file(self.config_path)

    @staticmethod
    def from_preset(name: str) -> FlowConfig:
        values = get_experiment_preset_by_name(name)
        if values is None:
            raise ConfigError(f"unknown experiment preset '{name}'", key="preset")
        try:
            return FlowConfig(**values)
        except ValidationError as e:
            first = e.errors()[0]
            raise ConfigError(f"invalid preset '{name}': {first['msg']}", key=".".join(map(str, first["loc"])))

    @staticmethod
    def from_file(path: Path) -> FlowConfig:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text()
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text, source=str(path))
        except configparser.MissingSectionHeaderError as e:
            raise ConfigError(f"missing section header in {path}", line=e.lineno)
        except configparser.DuplicateOptionError as e:
            raise ConfigError(f"duplicate key in {path}", key=f"{e.section}.{e.option}", line=e.lineno)
        except configparser.DuplicateSectionError as e:
            raise ConfigError(f"duplicate section in {path}", key=e.section, line=e.lineno)
        except configparser.ParsingError as e:
            line = e.errors[0][0] if e.errors else None
            raise ConfigError(f"malformed config {path}", line=line)

        lines = _key_lines(text)
        values = {}
        for section in parser.sections():
            if section not in SECTION_KEYS:
                raise ConfigError(f"unknown section [{section}]", key=section)
            for key, raw in parser.items(section):
                if key not in SECTION_KEYS[section]:
                    raise ConfigError("unknown key", key=f"{section}.{key}", line=lines.get((section, key)))
                values[key] = None if raw.strip().lower() in NONE_VALUES else raw.strip()

        base = path.parent
        for key in ("curve_plus", "curve_minus"):
            if values.get(key) is not None and not Path(values[key]).is_absolute():
                values[key] = str(base / values[key])

        try:
            return FlowConfig(**values)
        except ValidationError as e:
            first = e.errors()[0]
            key = str(first["loc"][0]) if first["loc"] else None
            section = KEY_SECTIONS.get(key)
            raise ConfigError(
                f"invalid value: {first['msg']}",
                key=f"{section}.{key}" if section else key,
                line=lines.get((section, key)),
            )


def to_ini(config: FlowConfig) -> str:
    """INI text that parses back into an identical FlowConfig."""
    data = config.model_dump()
    out = []
    for section, keys in SECTION_KEYS.items():
        out.append(f"[{section}]")
        for key in keys:
            value = data[key]
            if value is None:
                text = "none"
            elif isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            out.append(f"{key} = {text}")
        out.append("")
    return "\n".join(out)
