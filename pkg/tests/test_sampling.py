import numpy as np
import pytest

from geoms import cube_mesh

from geowalk.errors import EmptyMeshError, SamplingQuotaError
from geowalk.mesh import TriangleMesh
from geowalk.sampling import (
    CATEGORY_BBOXES,
    DEFAULT_N_SURFACE,
    DEFAULT_N_VOLUME,
    DEFAULT_V_MAX,
    SamplerConfig,
    SeedPlan,
    category_balanced_order,
    reject_interior,
    resolve_bbox,
    sample_exterior_points,
    sample_surface_points,
    sample_velocities,
    sample_volume_points,
)
from geowalk.spatial import build_index

PLAN = SeedPlan(1234)


class TestVolume:
    def test_car_bbox_containment(self):
        lo, hi = resolve_bbox("car")
        config = SamplerConfig(bbox_min=lo, bbox_max=hi, n_volume=32768)
        pts = sample_volume_points(config, PLAN.stream("g", "volume_positions"))
        assert pts.shape == (32768, 3)
        assert (pts >= lo).all() and (pts <= hi).all()

    def test_zero_count(self):
        config = SamplerConfig(bbox_min=(0, 0, 0), bbox_max=(1, 1, 1), n_volume=0)
        pts = sample_volume_points(config, PLAN.stream("g", "volume_positions"))
        assert pts.shape == (0, 3)

    def test_unit_box_mean(self):
        config = SamplerConfig(bbox_min=(0, 0, 0), bbox_max=(1, 1, 1), n_volume=100_000)
        pts = sample_volume_points(config, PLAN.stream("g", "volume_positions"))
        # 3 sigma of the mean of U(0,1) at n=1e5 is ~0.0027
        assert np.abs(pts.mean(axis=0) - 0.5).max() < 0.01

    def test_defaults_match_configuration(self):
        config = SamplerConfig()
        assert config.n_volume == DEFAULT_N_VOLUME == 32768
        assert config.n_surface == DEFAULT_N_SURFACE == 4096
        assert config.v_max == DEFAULT_V_MAX == 2.0
        assert config.n_points == 36864

    def test_category_boxes(self):
        assert CATEGORY_BBOXES["car"] == ((-3.0, -1.5, 0.0), (4.2, 1.5, 2.5))
        assert CATEGORY_BBOXES["airplane"] == ((-3.0, -2.8, 0.0), (4.5, 2.8, 2.5))
        assert CATEGORY_BBOXES["watercraft"] == ((-4.0, -1.5, -1.0), (5.0, 1.5, 1.0))

    def test_unknown_category_uses_inflated_mesh_bbox(self, cube):
        lo, hi = resolve_bbox("other", cube)
        mlo, mhi = cube.bbox
        assert (lo[:2] < mlo[:2]).all() and (hi[:2] > mhi[:2]).all()
        assert lo[2] <= min(mlo[2], 0.0)


class TestSurface:
    def test_single_triangle(self):
        mesh = TriangleMesh(np.eye(3), np.array([[0, 1, 2]]))
        pts = sample_surface_points(mesh, 100, PLAN.stream("g", "surface_positions"))
        assert pts.shape == (100, 3)
        # all on the x+y+z=1 plane within the simplex
        assert np.abs(pts.sum(axis=1) - 1.0).max() < 1e-9
        assert (pts >= -1e-12).all()

    def test_area_weighting(self):
        verts = np.array(
            [[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 2], [3, 0, 2], [0, 1, 2]],
            dtype=float,
        )
        # areas 0.5 and 1.5 -> 25% / 75%
        mesh = TriangleMesh(verts, np.array([[0, 1, 2], [3, 4, 5]]))
        areas = mesh.triangle_areas()
        assert areas[1] == pytest.approx(3 * areas[0])
        pts = sample_surface_points(mesh, 100_000, PLAN.stream("g", "surface_positions"))
        frac_small = (pts[:, 2] < 1.0).mean()
        assert abs(frac_small - 0.25) < 0.01

    def test_points_lie_on_mesh(self, cube, cube_index):
        pts = sample_surface_points(cube, 500, PLAN.stream("g", "surface_positions"))
        _, dist, _ = cube_index.closest_point_batch(pts)
        assert dist.max() <= 1e-9

    def test_empty_mesh(self):
        mesh = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int))
        with pytest.raises(EmptyMeshError):
            sample_surface_points(mesh, 10, PLAN.stream("g", "surface_positions"))


class TestRejectInterior:
    def test_cube_pair(self, cube_index):
        pts = np.array([[0.0, 0, 0], [2.0, 0, 0]])
        kept = reject_interior(cube_index, pts)
        assert kept.tolist() == [[2.0, 0, 0]]

    def test_all_exterior_identity(self, cube_index, rng):
        pts = rng.uniform(2, 3, size=(50, 3))
        kept = reject_interior(cube_index, pts)
        assert np.array_equal(kept, pts)

    def test_survivor_fraction(self, cube_index):
        # box twice the cube: volume ratio 1/8
        config = SamplerConfig(bbox_min=(-1, -1, -1), bbox_max=(1, 1, 1), n_volume=10_000)
        pts = sample_volume_points(config, PLAN.stream("g", "volume_positions"))
        kept = reject_interior(cube_index, pts)
        survivor = len(kept) / len(pts)
        assert abs(survivor - (1 - 1 / 8)) < 0.02

    def test_quota_reached_exactly(self, cube_index):
        config = SamplerConfig(bbox_min=(-1, -1, -1), bbox_max=(1, 1, 1), n_volume=5000)
        pts = sample_exterior_points(cube_index, config, PLAN.stream("g", "volume_positions"))
        assert len(pts) == 5000
        assert not cube_index.contains_batch(pts).any()

    def test_quota_error_when_box_is_interior(self, cube_index):
        config = SamplerConfig(
            bbox_min=(-0.2, -0.2, -0.2), bbox_max=(0.2, 0.2, 0.2), n_volume=64
        )
        with pytest.raises(SamplingQuotaError):
            sample_exterior_points(cube_index, config, PLAN.stream("g", "volume_positions"))


class TestVelocities:
    def test_norm_bound_exact(self):
        v = sample_velocities(36864, 2.0, PLAN.stream("g", "velocities", 0))
        assert (np.linalg.norm(v, axis=1) <= 2.0).all()

    def test_zero_count(self):
        assert sample_velocities(0, 1.0, PLAN.stream("g", "velocities", 0)).shape == (0, 3)

    def test_uniform_ball_moment(self):
        v = sample_velocities(100_000, 1.0, PLAN.stream("g", "velocities", 0))
        # E[|v|] for a uniform unit ball is 3/4
        assert abs(np.linalg.norm(v, axis=1).mean() - 0.75) < 0.01

    def test_mean_direction_unbiased(self):
        v = sample_velocities(100_000, 1.0, PLAN.stream("g", "velocities", 1))
        assert np.abs(v.mean(axis=0)).max() < 0.01


class TestSeedPlan:
    def test_reproducible(self):
        a = SeedPlan(7).stream("geo", "velocities", 3).random(8)
        b = SeedPlan(7).stream("geo", "velocities", 3).random(8)
        assert np.array_equal(a, b)

    def test_keys_independent(self):
        base = SeedPlan(7).stream("geo", "velocities", 3).random(8)
        assert not np.array_equal(base, SeedPlan(8).stream("geo", "velocities", 3).random(8))
        assert not np.array_equal(base, SeedPlan(7).stream("geo2", "velocities", 3).random(8))
        assert not np.array_equal(base, SeedPlan(7).stream("geo", "positions", 3).random(8))
        assert not np.array_equal(base, SeedPlan(7).stream("geo", "velocities", 4).random(8))
        assert not np.array_equal(base, SeedPlan(7).stream("geo", "velocities").random(8))


class TestCategoryBalancedOrder:
    def test_three_balanced_categories(self):
        catalog = [
            ("c1", "car"), ("c2", "car"),
            ("a1", "airplane"), ("a2", "airplane"),
            ("w1", "watercraft"), ("w2", "watercraft"),
        ]
        order = category_balanced_order(catalog, epoch_seed=5)
        assert sorted(order) == sorted(g for g, _ in catalog)
        lookup = dict(catalog)
        for i in range(len(order) - 2):
            window = {lookup[g] for g in order[i : i + 3]}
            assert len(window) == 3

    def test_single_category_is_shuffle(self):
        catalog = [(f"g{i}", "car") for i in range(20)]
        order = category_balanced_order(catalog, epoch_seed=5)
        assert sorted(order) == sorted(g for g, _ in catalog)
        assert order != [g for g, _ in catalog]  # 1/20! chance of no-op shuffle

    def test_paper_scale_counts(self):
        catalog = (
            [(f"car{i}", "car") for i in range(7479)]
            + [(f"air{i}", "airplane") for i in range(4045)]
            + [(f"wc{i}", "watercraft") for i in range(1939)]
        )
        order = category_balanced_order(catalog, epoch_seed=0)
        assert len(order) == 13463
        assert len(set(order)) == 13463

    def test_deterministic(self):
        catalog = [(f"g{i}", "car" if i % 2 else "airplane") for i in range(30)]
        assert category_balanced_order(catalog, 9) == category_balanced_order(catalog, 9)
        assert category_balanced_order(catalog, 9) != category_balanced_order(catalog, 10)


class TestConfigValidation:
    def test_bad_bbox(self):
        with pytest.raises(ValueError):
            SamplerConfig(bbox_min=(1, 0, 0), bbox_max=(0, 1, 1))

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            SamplerConfig(n_volume=-1)
        with pytest.raises(ValueError):
            SamplerConfig(v_max=0.0)
        with pytest.raises(ValueError):
            SamplerConfig(tau=-1)
        with pytest.raises(ValueError):
            SamplerConfig(n_dyn=0)
