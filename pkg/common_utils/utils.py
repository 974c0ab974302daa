"""
Utility functions for preset management.

Includes functions to retrieve curve presets and experiment presets from the
JSON files under storage/configs, and the current UTC date.
"""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path

CONFIGS_DIR = Path(__file__).resolve().parent.parent / "storage" / "configs"
CURVE_PRESETS_PATH = CONFIGS_DIR / "curve_presets.json"
EXPERIMENT_PRESETS_PATH = CONFIGS_DIR / "experiment_presets.json"


def get_curve_presets() -> dict:
    """Load the built-in boundary-curve presets."""
    try:
        with open(CURVE_PRESETS_PATH, "r") as f:
            presets_data = json.load(f)
        return presets_data.get("presets", {})
    except Exception as e:
        logging.error(f"Error loading curve presets: {e}")
        return {}


def get_curve_preset_by_name(preset_name: str) -> dict | None:
    """Get a curve preset by name, None when unknown."""
    preset = get_curve_presets().get(preset_name)
    if preset is None:
        logging.warning(f"Curve preset '{preset_name}' not found in presets data.")
    return preset


def get_experiment_presets() -> dict:
    """Load the built-in experiment presets (flat config dictionaries)."""
    try:
        with open(EXPERIMENT_PRESETS_PATH, "r") as f:
            presets_data = json.load(f)
        return presets_data.get("experiments", {})
    except Exception as e:
        logging.error(f"Error loading experiment presets: {e}")
        return {}


def get_experiment_preset_by_name(preset_name: str) -> dict | None:
    """Get an experiment preset by name, None when unknown."""
    preset = get_experiment_presets().get(preset_name)
    if preset is None:
        logging.warning(f"Experiment preset '{preset_name}' not found.")
    return preset


def current_date_utc() -> str:
    """
    Returns the current date (UTC) in format "YYYY-MM-DD HH:MM:SS".
    """
    return datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
