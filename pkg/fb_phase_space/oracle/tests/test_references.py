import json

import pytest

from fb_phase_space.exceptions import ReferenceTableError
from fb_phase_space.oracle.references import TABLE_VERSION
from fb_phase_space.oracle.references import born_weights
from fb_phase_space.oracle.references import load_reference_table
from fb_phase_space.oracle.references import reference_table_path
from fb_phase_space.oracle.references import write_reference_table
from fb_phase_space.simulation.tests.factories import SuperpositionSpecFactory


def test_path_follows_settings(settings, tmp_path):
    settings.ORACLE_REFERENCE_TABLE = str(tmp_path / "table.json")
    assert reference_table_path() == tmp_path / "table.json"


def test_born_weights_match_amplitudes():
    weights = born_weights(SuperpositionSpecFactory(c1=0.6))
    assert weights["positive"] == pytest.approx(0.36, abs=1e-6)
    assert weights["negative"] == pytest.approx(0.64, abs=1e-6)


class TestStoredTable:
    def test_round_trip(self, tmp_path):
        table = {"version": TABLE_VERSION, "chsh": {"best": {"s_value": 2.1}}}
        path = write_reference_table(table, tmp_path / "nested" / "table.json")
        assert path.exists()
        assert load_reference_table(path) == table

    def test_missing_table_is_not_computed(self, tmp_path):
        path = tmp_path / "absent.json"
        with pytest.raises(ReferenceTableError, match="build_reference_tables"):
            load_reference_table(path)
        assert not path.exists()

    def test_old_version_is_not_trusted(self, tmp_path):
        path = tmp_path / "table.json"
        path.write_text(json.dumps({"version": TABLE_VERSION - 1}), encoding="utf-8")
        with pytest.raises(ReferenceTableError, match="rebuild"):
            load_reference_table(path)
        assert json.loads(path.read_text(encoding="utf-8")) == {"version": TABLE_VERSION - 1}
