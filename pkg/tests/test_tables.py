import csv
import xml.etree.ElementTree as ET

import pytest

from blendmatch.harness import ConditionGrid, STUDY1_METHODS, run_study1, run_study2
from blendmatch.tables import (
    STUDY1_HEADER,
    STUDY2_HEADER,
    write_manifest,
    write_pooling_modes,
    write_tables,
)

SMALL_GRID = ConditionGrid(
    mechanisms=("mcar",),
    proportions=(0.25,),
    distributions=("normal",),
    correlations=(0.0, 0.7),
    methods=STUDY1_METHODS[:3],
)


@pytest.fixture(scope="module")
def study1_result():
    return run_study1(SMALL_GRID, n=120, nsim=3, seed=20)


@pytest.fixture(scope="module")
def study2_result():
    return run_study2(n=150, nsim=3, m=5, seed=21)


def read_csv(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        return next(reader), list(reader)


class TestStudy1Tables:
    def test_per_method_files_and_headers(self, study1_result, tmp_path):
        write_tables(study1_result.rows, tmp_path)
        for spec in SMALL_GRID.methods:
            header, rows = read_csv(tmp_path / f"table_{spec.label}.csv")
            assert tuple(header) == STUDY1_HEADER
            assert len(rows) == 2  # one per condition

    def test_full_grid_file_split(self, tmp_path):
        # 168-row output splits into 7 method files of 24 rows each
        from blendmatch.harness import Study1Row

        rows = [
            Study1Row(
                mech=c.mechanism, mis=c.mis, dist=c.dist, cor=c.cor, method=s.label,
                qbar=1.0, se=0.1, t=0.01, df=9.0, b=0.01, ci_lower=0.8, ci_upper=1.2,
                true=1.0, cov=0.95, bias=0.0, r2=0.1,
            )
            for s in STUDY1_METHODS
            for c in ConditionGrid().conditions()
        ]
        assert len(rows) == 168
        write_tables(rows, tmp_path)
        for spec in STUDY1_METHODS:
            _, data = read_csv(tmp_path / f"table_{spec.label}.csv")
            assert len(data) == 24
        _, long_rows = read_csv(tmp_path / "results.csv")
        assert len(long_rows) == 168

    def test_round_trip_full_precision(self, study1_result, tmp_path):
        write_tables(study1_result.rows, tmp_path)
        header, rows = read_csv(tmp_path / "results.csv")
        by_key = {(r.method, r.mech, r.mis, r.dist, r.cor): r for r in study1_result.rows}
        for row in rows:
            key = tuple(row[:5])
            source = by_key[key]
            values = dict(zip(header[5:], row[5:]))
            assert float(values["qbar"]) == source.qbar
            assert float(values["se"]) == source.se
            assert float(values["df"]) == source.df
            assert float(values["2.5%"]) == source.ci_lower
            assert float(values["97.5%"]) == source.ci_upper
            assert float(values["bias"]) == source.bias
            assert float(values["R2"]) == source.r2

    def test_figure_panels(self, study1_result, tmp_path):
        write_tables(study1_result.rows, tmp_path)
        for name, attr in (("figure2.csv", "bias"), ("figure3.csv", "cov"), ("figure4.csv", "r2")):
            header, rows = read_csv(tmp_path / name)
            assert header == ["condition", "method", "value"]
            assert len(rows) == len(study1_result.rows)
            values = sorted(float(r[2]) for r in rows)
            expected = sorted(getattr(r, attr) for r in study1_result.rows)
            assert values == expected

    def test_pooling_modes_file(self, study1_result, tmp_path):
        path = write_pooling_modes(study1_result.pooling_rows, tmp_path)
        header, rows = read_csv(path)
        assert header[:6] == ["mech", "mis", "dist", "cor", "method", "mode"]
        assert len(rows) == 2 * len(study1_result.rows)

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="no rows"):
            write_tables([], tmp_path)


class TestStudy2Tables:
    def test_table8_and_figure5(self, study2_result, tmp_path):
        write_tables(study2_result.rows, tmp_path)
        header, rows = read_csv(tmp_path / "table8.csv")
        assert tuple(header) == STUDY2_HEADER
        assert len(rows) == 12
        assert rows[0][0] == "pmm"
        header, rows = read_csv(tmp_path / "figure5.csv")
        assert header == ["blend", "se", "cov"]
        assert len(rows) == 11
        assert [float(r[0]) for r in rows] == [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0]

    def test_table8_round_trip(self, study2_result, tmp_path):
        write_tables(study2_result.rows, tmp_path)
        header, rows = read_csv(tmp_path / "table8.csv")
        for row, source in zip(rows, study2_result.rows):
            values = dict(zip(header, row))
            assert float(values["estimate"]) == source.estimate
            assert float(values["ssd"]) == source.ssd
            assert float(values["rmse"]) == source.rmse

    def test_figure5_svg_is_valid_xml(self, study2_result, tmp_path):
        write_tables(study2_result.rows, tmp_path)
        tree = ET.parse(tmp_path / "figure5.svg")
        root = tree.getroot()
        assert root.tag.endswith("svg")
        polylines = [el for el in root.iter() if el.tag.endswith("polyline")]
        assert len(polylines) == 2


class TestManifest:
    def test_deterministic_and_versioned(self, tmp_path):
        a = write_manifest(tmp_path / "a", {"command": "study2", "seed": 7, "nsim": 3})
        b = write_manifest(tmp_path / "b", {"command": "study2", "seed": 7, "nsim": 3})
        assert a.read_text() == b.read_text()
        text = a.read_text()
        assert "seed = 7" in text
        assert "numpy = " in text
