"""Tests for grid domains: generation, measures, ball coverage, serialization.

Oracles: closed-form circle-circle intersection areas, a naive 4x4
supersampler without the fast-path classification, and refinement
sequences for the disk measure.
"""

import math

import numpy as np
import pytest

from bhstab.domain import (
    BallPair,
    GridDomain,
    ShapeSpec,
    ball_coverage,
    boundary_edge_length,
    centroid,
    from_text,
    generate,
    half_measure_radius,
    lens_area,
    measure,
    symdiff_ball,
    symdiff_ballpair,
    to_text,
    translate,
    union_coverage,
)


def disk(radius=1.0, h=1 / 64):
    return generate(ShapeSpec("disk", {"radius": radius}), h)


def two_disks(radius=1.0, separation=4.0, h=1 / 64):
    return generate(ShapeSpec("two_disks", {"radius": radius, "separation": separation}), h)


class TestShapeSpec:
    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            ShapeSpec("triangle", {})

    def test_missing_parameter_rejected(self):
        with pytest.raises(ValueError):
            ShapeSpec("disk", {})

    def test_unexpected_parameter_rejected(self):
        with pytest.raises(ValueError):
            ShapeSpec("disk", {"radius": 1.0, "twist": 2.0})

    def test_negative_size_rejected(self):
        with pytest.raises(ValueError):
            ShapeSpec("disk", {"radius": -1.0})
        with pytest.raises(ValueError):
            ShapeSpec("rectangle", {"width": 0.0, "height": 1.0})

    def test_perturbation_amplitude_capped(self):
        with pytest.raises(ValueError):
            ShapeSpec("perturbed_disk", {"radius": 1.0, "eps": 0.6, "mode": 2})

    def test_dumbbell_neck_narrower_than_disk(self):
        with pytest.raises(ValueError):
            ShapeSpec("dumbbell", {"radius": 1.0, "separation": 2.5, "neck_width": 1.0})

    def test_non_integer_mode_rejected(self):
        with pytest.raises(ValueError):
            ShapeSpec("perturbed_disk", {"radius": 1.0, "eps": 0.1, "mode": 2.5})


class TestGenerate:
    def test_disk_measure_converges_to_pi(self):
        errors = []
        for h in [1 / 64, 1 / 128, 1 / 256]:
            errors.append(abs(measure(disk(h=h)) - math.pi))
        assert errors[1] < 1e-3
        assert errors[0] > errors[1] > errors[2]

    def test_disk_measure_error_at_least_linear_in_h(self):
        errors = [abs(measure(disk(h=h)) - math.pi) for h in [1 / 32, 1 / 64, 1 / 128, 1 / 256]]
        assert all(a > b for a, b in zip(errors, errors[1:]))
        assert errors[-1] <= errors[0] / 8.0

    def test_two_disks_split_by_empty_gap(self):
        d = two_disks()
        x, y = d.inside_centers()
        assert (x < -1.0).any() and (x > 1.0).any()
        assert not ((x > -1.0) & (x < 1.0)).any()

    def test_aligned_unit_square_measure_exact(self):
        d = generate(ShapeSpec("rectangle", {"width": 1.0, "height": 1.0}), 1 / 100)
        assert measure(d) == 1.0
        assert int(np.count_nonzero(d.cells)) == 100 * 100

    def test_too_coarse_resolution_rejected(self):
        with pytest.raises(ValueError):
            generate(ShapeSpec("disk", {"radius": 1.0}), 1 / 8)

    def test_padding_rim_is_empty(self):
        d = disk()
        assert not d.cells[0].any() and not d.cells[-1].any()
        assert not d.cells[:, 0].any() and not d.cells[:, -1].any()

    @pytest.mark.parametrize(
        "spec",
        [
            ShapeSpec("ellipse", {"a": 1.0, "b": 0.6}),
            ShapeSpec("dumbbell", {"radius": 1.0, "separation": 2.5, "neck_width": 0.2}),
            ShapeSpec("perturbed_disk", {"radius": 1.0, "eps": 0.2, "mode": 3}),
        ],
        ids=lambda s: s.family,
    )
    def test_families_rasterize_with_plausible_measure(self, spec):
        d = generate(spec, 1 / 64)
        assert measure(d) > 0.0
        if spec.family == "ellipse":
            assert measure(d) == pytest.approx(math.pi * 0.6, abs=0.01)
        if spec.family == "dumbbell":
            neck_len = spec["separation"] - 2.0 * math.sqrt(
                spec["radius"] ** 2 - (spec["neck_width"] / 2.0) ** 2
            )
            expected = 2.0 * math.pi + spec["neck_width"] * neck_len
            assert measure(d) == pytest.approx(expected, abs=0.02)

    def test_dumbbell_neck_connects(self):
        d = generate(ShapeSpec("dumbbell", {"radius": 1.0, "separation": 2.5, "neck_width": 0.2}), 1 / 64)
        x, y = d.inside_centers()
        on_axis = np.abs(x) < 0.1
        assert on_axis.any()


class TestMeasureProperties:
    def test_translation_invariance_exact(self):
        d = disk()
        assert measure(translate(d, 7, -3)) == measure(d)

    def test_additivity_of_disjoint_union(self):
        # separation 4 puts the two disk centers on the cell lattice, so
        # each half reproduces the single-disk rasterization exactly.
        d_pair = two_disks(separation=4.0, h=1 / 64)
        d_one = disk(h=1 / 64)
        assert measure(d_pair) == pytest.approx(2.0 * measure(d_one), rel=1e-15)

    def test_half_measure_radius_two_unit_disks(self):
        assert half_measure_radius(two_disks(h=1 / 128)) == pytest.approx(1.0, abs=2e-3)

    def test_half_measure_radius_rejects_other_dimensions(self):
        with pytest.raises(ValueError):
            half_measure_radius(disk(), n_dim=3)

    def test_half_measure_radius_scaling(self):
        small = disk(radius=1.0, h=1 / 64)
        large = disk(radius=2.0, h=1 / 32)
        assert half_measure_radius(large) == 2.0 * half_measure_radius(small)

    def test_boundary_edge_length_of_square(self):
        d = generate(ShapeSpec("rectangle", {"width": 1.0, "height": 1.0}), 1 / 64)
        assert boundary_edge_length(d) == pytest.approx(4.0, abs=1e-12)

    def test_boundary_edge_length_of_disk_near_8r(self):
        # A staircase circle has total edge length 8r (4 per axis pair).
        assert boundary_edge_length(disk(h=1 / 128)) == pytest.approx(8.0, abs=0.1)


class TestLensArea:
    def test_concentric(self):
        assert lens_area(0.0, 1.0, 1.0) == pytest.approx(math.pi, rel=1e-15)

    def test_tangent_and_beyond(self):
        assert lens_area(2.0, 1.0, 1.0) == 0.0
        assert lens_area(5.0, 1.0, 1.0) == 0.0

    def test_vesica_piscis(self):
        expected = 2.0 * math.pi / 3.0 - math.sqrt(3.0) / 2.0
        assert lens_area(1.0, 1.0, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_contained_circle(self):
        assert lens_area(0.1, 2.0, 0.5) == pytest.approx(math.pi * 0.25, rel=1e-12)

    def test_matches_grid_quadrature(self):
        # Midpoint quadrature of the indicator of both disks.
        dist, r1, r2 = 1.3, 1.0, 0.8
        n = 2000
        xs = np.linspace(-1.0, dist + 1.0, n)
        ys = np.linspace(-1.0, 1.0, n)
        dx = xs[1] - xs[0]
        dy = ys[1] - ys[0]
        X, Y = np.meshgrid(xs, ys)
        both = (X**2 + Y**2 < r1**2) & ((X - dist) ** 2 + Y**2 < r2**2)
        quad = np.count_nonzero(both) * dx * dy
        assert lens_area(dist, r1, r2) == pytest.approx(quad, abs=5e-3)


class TestBallPair:
    def test_overlapping_pair_rejected(self):
        with pytest.raises(ValueError):
            BallPair((0.0, 0.0), (1.0, 0.0), 1.0)

    def test_tangent_pair_accepted(self):
        p = BallPair((-1.0, 0.0), (1.0, 0.0), 1.0)
        assert p.center_distance() == pytest.approx(2.0)

    def test_nonpositive_radius_rejected(self):
        with pytest.raises(ValueError):
            BallPair((0.0, 0.0), (3.0, 0.0), 0.0)


class TestCoverage:
    def naive_counts(self, d, centers, r):
        # Oracle: straight 4x4 supersampling of every inside cell, no
        # fast-path classification.
        x, y = d.inside_centers()
        offs = (np.arange(4) + 0.5) / 4.0 - 0.5
        count = 0
        for cx_cell, cy_cell in zip(x, y):
            sx = cx_cell + offs[:, None] * d.h
            sy = cy_cell + offs[None, :] * d.h
            hit = np.zeros((4, 4), bool)
            for (cx, cy) in centers:
                hit |= (sx - cx) ** 2 + (sy - cy) ** 2 < r * r
            count += int(np.count_nonzero(hit))
        return count

    def test_fast_path_matches_naive_supersampling(self):
        d = disk(h=1 / 32)
        centers = ((0.31, -0.17), (1.02, 0.55))
        r = 0.623
        x, y = d.inside_centers()
        fast = union_coverage(x, y, d.h, *centers, r)
        assert fast == self.naive_counts(d, centers, r) * d.h**2 / 16.0

    def test_single_ball_coverage_of_centered_disk(self):
        d = disk(h=1 / 128)
        x, y = d.inside_centers()
        cov = ball_coverage(x, y, d.h, (0.0, 0.0), 0.5)
        assert cov == pytest.approx(math.pi * 0.25, abs=2e-3)


class TestSymdiff:
    def test_exact_two_disk_cover_is_small(self):
        d = two_disks(h=1 / 64)
        p = BallPair((-2.0, 0.0), (2.0, 0.0), 1.0)
        value = symdiff_ballpair(d, p)
        assert 0.0 <= value <= 4.0 * d.h * (2.0 * 2.0 * math.pi)

    def test_disjoint_supports_add(self):
        d = disk(h=1 / 64)
        r = math.sqrt(0.5)
        p = BallPair((50.0, 0.0), (50.0 + 2.0 * r, 0.0), r)
        assert symdiff_ballpair(d, p) == pytest.approx(measure(d) + math.pi, rel=1e-12)
        assert symdiff_ballpair(d, p) == pytest.approx(2.0 * math.pi, abs=0.01)

    def test_translated_pair_matches_lens_oracle(self):
        d = two_disks(h=1 / 64)
        exact = BallPair((-2.0, 0.0), (2.0, 0.0), 1.0)
        delta = 0.1
        shifted = BallPair((-2.0 + delta, 0.0), (2.0 + delta, 0.0), 1.0)
        refined = symdiff_ballpair(d, exact)
        expected = 2.0 * 2.0 * (math.pi - lens_area(delta, 1.0, 1.0))
        assert abs(symdiff_ballpair(d, shifted) - expected) <= refined + 1e-9

    def test_single_ball_symdiff_of_matching_disk(self):
        d = disk(h=1 / 128)
        assert symdiff_ball(d, (0.0, 0.0), 1.0) <= 4.0 * d.h * (2.0 * math.pi)

    def test_value_translation_invariant_bitwise(self):
        d = two_disks(h=1 / 64)
        x, y = d.inside_centers(relative=True)
        xt, yt = translate(d, 5, 9).inside_centers(relative=True)
        assert union_coverage(x, y, d.h, (-2.0, 0.0), (2.0, 0.0), 1.0) == union_coverage(
            xt, yt, d.h, (-2.0, 0.0), (2.0, 0.0), 1.0
        )


class TestCentroid:
    def test_centered_disk(self):
        cx, cy = centroid(disk())
        assert abs(cx) < 1 / 64 and abs(cy) < 1 / 64

    def test_two_disk_midpoint(self):
        cx, cy = centroid(two_disks())
        assert abs(cx) < 1 / 64 and abs(cy) < 1 / 64

    def test_translation_equivariance(self):
        d = disk()
        cx, cy = centroid(d)
        tx, ty = centroid(translate(d, 1, 0))
        assert tx - cx == pytest.approx(d.h, abs=1e-12)
        assert ty == pytest.approx(cy, abs=1e-15)


class TestSerialization:
    def test_round_trip_bit_exact(self):
        d = generate(ShapeSpec("perturbed_disk", {"radius": 1.0, "eps": 0.2, "mode": 3}), 1 / 64)
        back = from_text(to_text(d))
        assert back.nx == d.nx and back.ny == d.ny
        assert back.h == d.h
        assert back.origin == d.origin
        assert np.array_equal(back.cells, d.cells)

    def test_round_trip_with_non_dyadic_cell_size(self):
        d = generate(ShapeSpec("rectangle", {"width": 1.0, "height": 1.0}), 1 / 100)
        back = from_text(to_text(d))
        assert back.h == d.h and back.origin == d.origin
        assert np.array_equal(back.cells, d.cells)

    def test_golden_text(self):
        cells = np.zeros((4, 4), dtype=bool)
        cells[1, 1] = True
        cells[2, 1] = True
        d = GridDomain(origin=(-1.0, -1.0), h=0.5, nx=4, ny=4, cells=cells)
        assert to_text(d) == "GRID 4 4 0.5 -1.0 -1.0\n....\n.#..\n.#..\n....\n"

    def test_parse_rejects_malformed_header(self):
        with pytest.raises(ValueError):
            from_text("MESH 2 2 0.5 0 0\n..\n..\n")

    def test_parse_rejects_bad_row(self):
        with pytest.raises(ValueError):
            from_text("GRID 2 2 0.5 0.0 0.0\n.#\n.x\n")

    def test_parse_rejects_truncated_body(self):
        with pytest.raises(ValueError):
            from_text("GRID 2 3 0.5 0.0 0.0\n.#\n..\n")


class TestGridDomainInvariants:
    def test_empty_domain_rejected(self):
        with pytest.raises(ValueError):
            GridDomain(origin=(0.0, 0.0), h=0.5, nx=3, ny=3, cells=np.zeros((3, 3), bool))

    def test_rim_violation_rejected(self):
        cells = np.zeros((3, 3), bool)
        cells[0, 0] = True
        with pytest.raises(ValueError):
            GridDomain(origin=(0.0, 0.0), h=0.5, nx=3, ny=3, cells=cells)

    def test_cells_immutable(self):
        d = disk()
        with pytest.raises(ValueError):
            d.cells[5, 5] = True
