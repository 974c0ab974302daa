"""
Jinja2 rendering of the text artefacts: final_state.txt, state dumps and
the verify report. Templates are strict, so a missing field fails the
render instead of writing a blank value.
"""

from pathlib import Path

from jinja2 import Environment, FileSystemLoader, StrictUndefined

TEMPLATES_DIR = Path(__file__).parent / "templates"


def _float17(value) -> str:
    return "%.17g" % value


env = Environment(
    loader=FileSystemLoader(TEMPLATES_DIR),
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
    undefined=StrictUndefined,
)
env.filters["f17"] = _float17


def render_template(template_name: str, **fields) -> str:
    return env.get_template(template_name).render(**fields)
