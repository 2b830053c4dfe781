import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpiforge.errors import InvalidRange, OutOfRange
from mpiforge.mpi import (
    ExposureCoeffs,
    Mpi,
    channel_count,
    init_planes,
    project_ascending,
    texture_index,
)
from support import identity_camera


def small_mpi(depths=(1.0, 2.0, 3.0), deltas=None, planes=None, k=1):
    depths = np.asarray(depths, dtype=float)
    D = len(depths) if planes is None else planes
    cam = identity_camera(size=(4, 4))
    return Mpi(
        np.full((D, 4, 4), 0.5),
        np.full((D // k, 4, 4, 3), 0.5),
        depths,
        cam,
        sharing_factor=k,
        depth_deltas=deltas,
    )


class TestInitPlanes:
    def test_depth_spacing(self):
        np.testing.assert_allclose(init_planes(1.0, 3.0, 3, "depth"), [1.0, 2.0, 3.0])

    def test_disparity_spacing(self):
        # invert linspace(1, 1/3, 3) by hand: disparities (1, 2/3, 1/3)
        np.testing.assert_allclose(
            init_planes(1.0, 3.0, 3, "disparity"), [1.0, 1.5, 3.0]
        )

    def test_two_planes_hit_endpoints(self):
        for spacing in ("depth", "disparity"):
            np.testing.assert_allclose(init_planes(1.0, 3.0, 2, spacing), [1.0, 3.0])

    def test_rejects_bad_range(self):
        with pytest.raises(InvalidRange):
            init_planes(3.0, 1.0, 4)
        with pytest.raises(InvalidRange):
            init_planes(2.0, 2.0, 4)

    def test_always_ascending(self):
        for spacing in ("depth", "disparity"):
            d = init_planes(0.7, 42.0, 33, spacing)
            assert np.all(np.diff(d) > 0)


class TestTextureIndex:
    def test_first_plane(self):
        assert texture_index(0, 12) == 0

    def test_last_plane_of_192(self):
        assert texture_index(191, 12, plane_count=192) == 15

    def test_group_boundary(self):
        assert texture_index(12, 12) == 1

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            texture_index(-1, 12)
        with pytest.raises(OutOfRange):
            texture_index(192, 12, plane_count=192)

    def test_channel_count_formula(self):
        assert channel_count(192, 12) == 240
        for d, k in [(4, 2), (12, 4), (96, 12), (192, 12)]:
            assert channel_count(d, k) == d + 3 * d // k

    def test_channel_count_requires_divisibility(self):
        with pytest.raises(InvalidRange):
            channel_count(10, 3)


class TestExposureCoeffs:
    def test_identity(self):
        e = ExposureCoeffs.identity(3)
        assert e.camera_count == 3
        e.validate()

    def test_rejects_nonpositive_gamma(self):
        with pytest.raises(Exception):
            ExposureCoeffs(np.zeros((2, 3)), np.array([[1.0] * 3, [0.0, 1.0, 1.0]]))

    def test_rejects_unpinned_reference(self):
        with pytest.raises(Exception):
            ExposureCoeffs(np.full((2, 3), 0.1), np.ones((2, 3)))


class TestDepthProjection:
    def test_zero_deltas_are_untouched(self):
        m = small_mpi()
        np.testing.assert_array_equal(m.refined_depths(), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(m.depth_deltas, np.zeros(3))

    def test_uniform_shift_does_not_clamp(self):
        m = small_mpi(deltas=[0.1, 0.1, 0.1])
        np.testing.assert_allclose(m.refined_depths(), [1.1, 2.1, 3.1])

    def test_overshooting_plane_yields_to_passive_neighbor(self):
        # plane at init 2 pushed to 3.2 past the unmoved plane at 3.0:
        # the mover is clamped to 3 - margin, the passive plane stays put
        m = small_mpi(deltas=[0.0, 1.2, 0.0])
        eps = m.order_margin
        np.testing.assert_allclose(m.refined_depths(), [1.0, 3.0 - eps, 3.0])

    def test_undershooting_plane_yields_to_passive_neighbor(self):
        m = small_mpi(deltas=[0.0, -1.2, 0.0])
        eps = m.order_margin
        np.testing.assert_allclose(m.refined_depths(), [1.0, 1.0 + eps, 3.0])

    def test_symmetric_collision_splits(self):
        m = small_mpi(deltas=[0.6, -0.6, 0.0])
        d = m.refined_depths()
        assert np.all(np.diff(d) >= m.order_margin * (1 - 1e-12))
        np.testing.assert_allclose(d[0] + d[1], 1.6 + 1.4, atol=1e-12)

    def test_projection_idempotent(self):
        m = small_mpi(deltas=[0.0, 1.2, 0.0])
        first = m.refined_depths()
        second = m.refined_depths()
        np.testing.assert_array_equal(first, second)

    def test_current_depths_raises_on_violation(self):
        m = small_mpi(deltas=[0.0, 1.2, 0.0])
        with pytest.raises(InvalidRange):
            m.current_depths()
        m.refined_depths()
        assert np.all(np.diff(m.current_depths()) > 0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(-5.0, 5.0), min_size=2, max_size=12),
    )
    def test_projection_always_ascending(self, deltas):
        n = len(deltas)
        init = np.linspace(1.0, 4.0, n)
        margin = 1e-4 * 3.0 / n
        d = project_ascending(init, np.array(deltas), margin)
        assert np.all(np.diff(d) > 0)
        assert np.all(np.diff(d) >= margin * (1 - 1e-9))

    def test_update_stream_keeps_order(self):
        rng = np.random.default_rng(0)
        m = small_mpi(depths=np.linspace(1, 4, 8), k=2)
        for _ in range(500):
            m.depth_deltas += rng.normal(scale=0.3, size=8)
            d = m.refined_depths()
            assert np.all(np.diff(d) > 0)


class TestMpiInvariants:
    def test_channel_count_property(self):
        m = small_mpi(depths=np.linspace(1, 4, 4), k=2)
        assert m.channel_count == 4 + 3 * 2

    def test_clamped_views(self):
        m = small_mpi()
        m.raw_alphas[0, 0, 0] = 1.7
        m.raw_alphas[0, 0, 1] = -0.3
        assert m.alphas[0, 0, 0] == 1.0
        assert m.alphas[0, 0, 1] == 0.0
        assert np.all((m.alphas >= 0) & (m.alphas <= 1))
        assert np.all((m.textures >= 0) & (m.textures <= 1))

    def test_rejects_bad_texture_shape(self):
        cam = identity_camera(size=(4, 4))
        with pytest.raises(Exception):
            Mpi(np.zeros((4, 4, 4)), np.zeros((3, 4, 4, 3)), np.linspace(1, 2, 4), cam, 2)

    def test_rejects_non_ascending_init(self):
        cam = identity_camera(size=(4, 4))
        with pytest.raises(InvalidRange):
            Mpi(np.zeros((2, 4, 4)), np.zeros((2, 4, 4, 3)), [2.0, 1.0], cam, 1)

    def test_padding_consistency(self):
        cam = identity_camera(size=(4, 4))
        m = Mpi.zeros(4, 2, cam, near=1.0, far=3.0, padding=2)
        assert m.canvas_size == (8, 8)
        with pytest.raises(Exception):
            Mpi(np.zeros((2, 6, 6)), np.zeros((2, 6, 6, 3)), [1.0, 2.0], cam, 1, padding=0)

    def test_snapshot_is_independent(self):
        m = small_mpi()
        s = m.snapshot()
        m.raw_alphas[0, 0, 0] = 9.0
        assert s.raw_alphas[0, 0, 0] == 0.5
