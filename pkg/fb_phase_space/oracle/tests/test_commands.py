import json
from io import StringIO

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from fb_phase_space.oracle.references import TABLE_VERSION


def _build(**options) -> str:
    out = StringIO()
    call_command("build_reference_tables", stdout=out, **options)
    return out.getvalue()


def test_writes_table(tmp_path):
    output = tmp_path / "table.json"
    text = _build(zeta_min=1.0, zeta_max=1.2, zeta_count=2, angle_steps=4, output=str(output))
    assert "Best S =" in text
    assert "Reference table written to" in text
    table = json.loads(output.read_text(encoding="utf-8"))
    assert table["version"] == TABLE_VERSION
    assert len(table["chsh"]["scanned"]) == 2
    assert sum(table["born_weights"]["weights"].values()) == pytest.approx(1.0)


def test_empty_zeta_range():
    with pytest.raises(CommandError) as excinfo:
        _build(zeta_min=2.0, zeta_max=1.0)
    assert excinfo.value.returncode == 2


def test_bad_angle_grid(tmp_path):
    with pytest.raises(CommandError) as excinfo:
        _build(zeta_min=1.0, zeta_max=1.0, zeta_count=1, angle_steps=1, output=str(tmp_path / "t.json"))
    assert excinfo.value.returncode == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("", encoding="utf-8")
    with pytest.raises(CommandError) as excinfo:
        _build(zeta_min=1.0, zeta_max=1.0, zeta_count=1, angle_steps=2, output=str(blocker / "t.json"))
    assert excinfo.value.returncode == 3
