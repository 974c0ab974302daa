import pytest

TINY_RUN = """\
[grid]
n_x = 8
n_theta = 12

[flow]
h = 0.02
t_max = {t_max}

[tolerances]
max_inner = 50

[curves]
{curves}

[output]
output_dir = {output_dir}
"""


@pytest.fixture
def write_ini(tmp_path):
    """Factory writing a small run config into tmp_path; returns its path."""

    def write(text=None, name="run.ini", t_max=0.04, curves="curve_preset = circles"):
        if text is None:
            text = TINY_RUN.format(t_max=t_max, curves=curves, output_dir=tmp_path / "out")
        path = tmp_path / name
        path.write_text(text)
        return path

    return write


@pytest.fixture
def in_tmp(tmp_path, monkeypatch):
    """Run from tmp_path so default log files stay out of the tree."""
    monkeypatch.chdir(tmp_path)
    return tmp_path
