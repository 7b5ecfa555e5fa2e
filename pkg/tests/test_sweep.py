"""Tests for sweep configuration, execution, fitting, and artifacts."""

import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from bhstab.sweep import (
    A2_FIT_FLOOR,
    CorpusRow,
    ExponentFit,
    FamilySweep,
    SweepConfig,
    config_from_json,
    default_config,
    emit_report,
    fit_exponent,
    rows_from_csv,
    rows_to_csv,
    run_sweep,
)
from bhstab.special_functions import mu2_star


def synthetic_row(a2, deficit, family="synthetic", params="p=0", h=0.01, status="ok"):
    nan = math.nan
    return CorpusRow(
        family=family,
        params=params,
        h=h,
        area=nan,
        r_half=nan,
        boundary_length=nan,
        mu1=nan,
        mu2=nan,
        mu2_scaled=nan,
        bh_deficit=deficit,
        rayleigh_bound=nan,
        a2=a2,
        a2_oracle_gap=nan,
        outer_a_on_a=nan,
        outer_b_on_a=nan,
        outer_a_on_b=nan,
        outer_b_on_b=nan,
        ball_a=nan,
        ball_b=nan,
        sum_outer_sq=nan,
        deficit_quadrature=nan,
        ratio_deficit_outer=nan,
        ratio_asym_outer=nan,
        ratio_stability=(deficit / a2**3 if a2 > 0 else nan),
        orthogonality_residual=nan,
        status=status,
    )


class TestFamilySweep:
    def test_instances_cartesian_product(self):
        fam = FamilySweep(
            "perturbed_disk",
            fixed={"radius": 1.0},
            varied={"eps": (0.1, 0.2, 2), "mode": (2.0, 3.0, 2)},
        )
        specs = fam.instances()
        assert len(specs) == 4
        assert all(s.family == "perturbed_disk" for s in specs)
        combos = {(s.parameters["eps"], s.parameters["mode"]) for s in specs}
        assert combos == {(0.1, 2.0), (0.1, 3.0), (0.2, 2.0), (0.2, 3.0)}

    def test_single_step_keeps_start(self):
        fam = FamilySweep("disk", fixed={}, varied={"radius": (0.7, 5.0, 1)})
        specs = fam.instances()
        assert len(specs) == 1
        assert specs[0].parameters["radius"] == 0.7

    def test_no_varied_parameters_single_instance(self):
        fam = FamilySweep("disk", fixed={"radius": 1.0}, varied={})
        assert len(fam.instances()) == 1

    def test_invalid_steps_rejected(self):
        with pytest.raises(ValueError, match="steps"):
            FamilySweep("disk", fixed={}, varied={"radius": (0.5, 1.0, 0)})

    def test_reversed_range_rejected(self):
        with pytest.raises(ValueError, match="stop"):
            FamilySweep("disk", fixed={}, varied={"radius": (1.0, 0.5, 3)})


class TestSweepConfig:
    def test_empty_families_rejected(self):
        with pytest.raises(ValueError, match="family"):
            SweepConfig(families=(), resolutions=(1 / 64,))

    def test_empty_resolutions_rejected(self):
        fam = FamilySweep("disk", fixed={"radius": 1.0}, varied={})
        with pytest.raises(ValueError, match="resolution"):
            SweepConfig(families=(fam,), resolutions=())

    def test_bad_resolution_rejected(self):
        fam = FamilySweep("disk", fixed={"radius": 1.0}, varied={})
        with pytest.raises(ValueError, match="resolution"):
            SweepConfig(families=(fam,), resolutions=(2.0,))

    def test_bad_tolerance_rejected(self):
        fam = FamilySweep("disk", fixed={"radius": 1.0}, varied={})
        with pytest.raises(ValueError, match="tolerance"):
            SweepConfig(families=(fam,), resolutions=(1 / 64,), tol=0.0)

    def test_default_corpus_instance_count(self):
        cfg = default_config(resolutions=(1 / 64, 1 / 128))
        total = sum(len(f.instances()) for f in cfg.families)
        assert total == 28  # 9 separations + 8 necks + 8 perturbations + 3 references


class TestConfigFromJson:
    def test_round_trip(self):
        text = json.dumps(
            {
                "families": [
                    {
                        "family": "two_disks",
                        "fixed": {"radius": 1.0},
                        "varied": {"separation": {"start": 2.0, "stop": 3.0, "steps": 3}},
                    }
                ],
                "resolutions": [0.03125],
                "tol": 1e-7,
                "seed": 5,
                "out_dir": "x",
            }
        )
        cfg = config_from_json(text)
        assert cfg.tol == 1e-7
        assert cfg.seed == 5
        assert cfg.out_dir == "x"
        assert len(cfg.families[0].instances()) == 3

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            config_from_json('{"families": [], "resolutions": [0.1], "bogus": 1}')

    def test_missing_required_keys_rejected(self):
        with pytest.raises(ValueError, match="families"):
            config_from_json('{"resolutions": [0.1]}')

    def test_non_object_rejected(self):
        with pytest.raises(ValueError, match="object"):
            config_from_json("[1, 2]")


class TestRunSweep:
    @pytest.fixture(scope="class")
    @staticmethod
    def example_rows():
        cfg = SweepConfig(
            families=(
                FamilySweep(
                    "two_disks", fixed={"radius": 1.0}, varied={"separation": (2.0, 3.0, 3)}
                ),
            ),
            resolutions=(1 / 32,),
        )
        return run_sweep(cfg)

    def test_separation_family_row_count_and_deficits(self, example_rows):
        assert len(example_rows) == 3
        for row in example_rows:
            assert row.status == "ok"
            assert row.bh_deficit <= 0.5
            # Disjoint unions sit at the equality case up to discretization.
            assert row.bh_deficit <= 0.02 * mu2_star(2)

    def test_rows_ordered_by_family_params_resolution(self, example_rows):
        seps = [row.params for row in example_rows]
        assert seps == sorted(seps)

    def test_rerun_is_byte_identical(self, example_rows):
        cfg = SweepConfig(
            families=(
                FamilySweep(
                    "two_disks", fixed={"radius": 1.0}, varied={"separation": (2.0, 3.0, 3)}
                ),
            ),
            resolutions=(1 / 32,),
        )
        again = run_sweep(cfg)
        assert rows_to_csv(again) == rows_to_csv(example_rows)

    def test_instance_failure_recorded_and_sweep_continues(self):
        # A 0.1-radius disk at h = 1/16 is under-resolved and must fail
        # generation; the other instance still completes.
        cfg = SweepConfig(
            families=(
                FamilySweep("disk", fixed={"radius": 0.1}, varied={}),
                FamilySweep("disk", fixed={"radius": 1.0}, varied={}),
            ),
            resolutions=(1 / 16,),
        )
        rows = run_sweep(cfg)
        assert len(rows) == 2
        by_params = {r.params: r for r in rows}
        assert by_params["radius=0.1"].status.startswith("failed:")
        assert math.isnan(by_params["radius=0.1"].bh_deficit)
        assert by_params["radius=1"].status == "ok"

    def test_scaled_eigenvalue_bound_holds(self, example_rows):
        for row in example_rows:
            assert row.mu2_scaled <= mu2_star(2) * 1.05


class TestFitExponent:
    def test_recovers_synthetic_power_law(self):
        rng = np.random.default_rng(0)
        rows = [
            synthetic_row(a2=float(a), deficit=0.8 * float(a) ** 3, params=f"i={i}")
            for i, a in enumerate(rng.uniform(0.1, 0.9, size=12))
        ]
        fit = fit_exponent(rows)
        assert fit.slope == pytest.approx(3.0, abs=1e-9)
        assert math.exp(fit.intercept) == pytest.approx(0.8, rel=1e-9)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.min_ratio == pytest.approx(0.8, rel=1e-9)
        assert fit.n_rows == 12

    def test_min_ratio_is_one_sided_bound(self):
        rows = [
            synthetic_row(a2=a, deficit=c * a**3, params=f"i={i}")
            for i, (a, c) in enumerate([(0.1, 1.0), (0.2, 0.5), (0.4, 2.0), (0.6, 0.9), (0.8, 0.7)])
        ]
        fit = fit_exponent(rows)
        assert fit.min_ratio == pytest.approx(0.5, rel=1e-9)
        for r in rows:
            assert r.bh_deficit >= fit.min_ratio * r.a2**3 * (1 - 1e-12)

    def test_too_few_rows_rejected(self):
        rows = [synthetic_row(0.5, 0.1, params=f"i={i}") for i in range(4)]
        with pytest.raises(ValueError, match="at least 5"):
            fit_exponent(rows)

    def test_low_asymmetry_rows_do_not_qualify(self):
        rows = [synthetic_row(0.01, 0.1, params=f"i={i}") for i in range(8)]
        with pytest.raises(ValueError, match=str(A2_FIT_FLOOR)):
            fit_exponent(rows)

    def test_failed_rows_excluded(self):
        rows = [synthetic_row(0.5, 0.1, params=f"i={i}", status="failed: x") for i in range(8)]
        with pytest.raises(ValueError):
            fit_exponent(rows)


class TestCsvRoundTrip:
    def test_header_is_field_names(self):
        text = rows_to_csv([synthetic_row(0.5, 0.1)])
        header = text.splitlines()[0]
        assert header.split(",")[:4] == ["family", "params", "h", "area"]
        assert header.split(",")[-1] == "status"

    def test_round_trip_preserves_bytes(self):
        rows = [synthetic_row(0.5, 0.123456789012345), synthetic_row(0.25, 0.7e-9, params="p=1")]
        text = rows_to_csv(rows)
        assert rows_to_csv(rows_from_csv(text)) == text

    def test_wrong_header_rejected(self):
        with pytest.raises(ValueError, match="header"):
            rows_from_csv("a,b,c\n1,2,3\n")

    def test_malformed_line_rejected(self):
        text = rows_to_csv([synthetic_row(0.5, 0.1)])
        with pytest.raises(ValueError, match="malformed"):
            rows_from_csv(text + "too,few,fields\n")


class TestEmitReport:
    @pytest.fixture()
    def rows_and_fit(self):
        rng = np.random.default_rng(1)
        rows = [
            synthetic_row(a2=float(a), deficit=1.2 * float(a) ** 3, params=f"i={i}")
            for i, a in enumerate(rng.uniform(0.1, 0.9, size=7))
        ]
        rows.append(synthetic_row(0.01, 1e-4, params="i=99"))  # non-qualifying
        return rows, fit_exponent(rows)

    def test_writes_three_artifacts(self, rows_and_fit, tmp_path):
        rows, fit = rows_and_fit
        paths = emit_report(rows, fit, str(tmp_path), seed=3)
        csv_lines = (tmp_path / "corpus.csv").read_text().splitlines()
        assert len(csv_lines) == len(rows) + 1
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["seed"] == 3
        assert payload["tool"].startswith("bhstab ")
        assert payload["fit"]["slope"] == pytest.approx(3.0, abs=1e-9)
        assert payload["row_count"] == len(rows)
        assert set(paths) == {"csv", "json", "svg"}

    def test_json_round_trips_at_full_precision(self, rows_and_fit, tmp_path):
        rows, fit = rows_and_fit
        emit_report(rows, fit, str(tmp_path))
        text = (tmp_path / "report.json").read_text()
        payload = json.loads(text)
        assert json.loads(json.dumps(payload)) == payload
        assert payload["fit"]["min_ratio"] == pytest.approx(1.2, rel=1e-12)

    def test_svg_valid_xml_one_marker_per_qualifying_row(self, rows_and_fit, tmp_path):
        rows, fit = rows_and_fit
        emit_report(rows, fit, str(tmp_path))
        root = ET.fromstring((tmp_path / "scatter.svg").read_text())
        assert root.tag.endswith("svg")
        circles = root.findall(".//{http://www.w3.org/2000/svg}circle")
        qualifying = [r for r in rows if r.a2 > A2_FIT_FLOOR and r.bh_deficit > 0]
        assert len(circles) == len(qualifying)

    def test_reference_line_present(self, rows_and_fit, tmp_path):
        rows, fit = rows_and_fit
        emit_report(rows, fit, str(tmp_path))
        root = ET.fromstring((tmp_path / "scatter.svg").read_text())
        lines = root.findall(".//{http://www.w3.org/2000/svg}line")
        assert len(lines) >= 3  # reference line plus two axes

    def test_no_qualifying_rows_still_valid_svg(self, tmp_path):
        rows = [synthetic_row(0.01, 1e-5)]
        emit_report(rows, None, str(tmp_path))
        root = ET.fromstring((tmp_path / "scatter.svg").read_text())
        assert not root.findall(".//{http://www.w3.org/2000/svg}circle")
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["fit"] is None

    def test_io_failure_carries_path_context(self, rows_and_fit, tmp_path):
        rows, fit = rows_and_fit
        blocker = tmp_path / "blocked"
        blocker.write_text("a plain file where a directory is needed")
        with pytest.raises(OSError, match="blocked"):
            emit_report(rows, fit, str(blocker))

    def test_csv_emission_deterministic(self, rows_and_fit, tmp_path):
        rows, fit = rows_and_fit
        emit_report(rows, fit, str(tmp_path / "a"))
        emit_report(rows, fit, str(tmp_path / "b"))
        assert (tmp_path / "a" / "corpus.csv").read_bytes() == (
            tmp_path / "b" / "corpus.csv"
        ).read_bytes()
