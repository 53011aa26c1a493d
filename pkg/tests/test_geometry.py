import math

import numpy as np
import pytest

from autolabel3d.core import AWAY, TOWARDS, Box3D, CameraIntrinsics, Keypoints3D
from autolabel3d.geometry import (BehindCameraError, DegenerateKeypointsError,
                                  PixelKeypoints, backproject, box_keypoints,
                                  direction_of, lift_keypoints, project,
                                  project_keypoints, yaw_from_keypoints)

K = CameraIntrinsics(fx=700.0, fy=700.0, cx=620.0, cy=187.0,
                     width=1242, height=375)


def random_boxes(n, seed=0):
    rng = np.random.default_rng(seed)
    boxes = []
    for _ in range(n):
        dims = (float(rng.uniform(3.5, 5.5)), float(rng.uniform(1.6, 2.0)),
                float(rng.uniform(1.4, 1.8)))
        # keep all keypoints in front of the camera
        z = max(float(rng.uniform(2, 80)), dims[0] / 2 + 0.3)
        center = (float(rng.uniform(-20, 20)), float(rng.uniform(-2, 2)), z)
        yaw = float(rng.uniform(-math.pi, math.pi))
        b = Box3D(center=center, dims=dims, yaw=yaw, direction="towards")
        boxes.append(Box3D(center=b.center, dims=b.dims, yaw=b.yaw,
                           direction=direction_of(b)))
    return boxes


class TestProject:
    def test_principal_point(self):
        assert project((0, 0, 10), K) == (620.0, 187.0)

    def test_unit_offset(self):
        u, v = project((1, 0, 1), K)
        assert (u, v) == (1320.0, 187.0)

    def test_behind_camera(self):
        with pytest.raises(BehindCameraError):
            project((0, 0, 0), K)

    def test_backproject_examples(self):
        assert backproject(620, 187, 10, K) == (0.0, 0.0, 10.0)
        with pytest.raises(BehindCameraError):
            backproject(620, 187, 0, K)

    def test_mutual_inverse(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = (rng.uniform(-30, 30), rng.uniform(-5, 5), rng.uniform(0.5, 90))
            u, v = project(p, K)
            q = backproject(u, v, p[2], K)
            assert np.allclose(p, q, atol=1e-9)
            assert project(q, K) == pytest.approx((u, v), abs=1e-9)


class TestBoxKeypoints:
    def test_heading_plus_x(self):
        b = Box3D(center=(0, 0, 10), dims=(4, 2, 1.5), yaw=0,
                  direction="towards")
        k = box_keypoints(b)
        assert k.front == pytest.approx((2, 0, 10))
        assert k.back == pytest.approx((-2, 0, 10))

    def test_heading_plus_z(self):
        b = Box3D(center=(0, 0, 10), dims=(4, 2, 1.5), yaw=-math.pi / 2,
                  direction="away")
        k = box_keypoints(b)
        assert k.front == pytest.approx((0, 0, 12), abs=1e-12)

    def test_roundtrip_with_own_direction(self):
        for b in random_boxes(100, seed=11):
            yaw = yaw_from_keypoints(box_keypoints(b), b.direction)
            assert yaw == pytest.approx(b.yaw, abs=1e-12)


class TestYawFromKeypoints:
    def test_towards_plus_x(self):
        k = Keypoints3D(front=(1, 0, 0), center=(0, 0, 0), back=(-1, 0, 0))
        assert yaw_from_keypoints(k, TOWARDS) == 0.0

    def test_towards_plus_z(self):
        k = Keypoints3D(front=(0, 0, 1), center=(0, 0, 0), back=(0, 0, -1))
        assert yaw_from_keypoints(k, TOWARDS) == pytest.approx(-math.pi / 2)

    def test_away_agrees_for_same_heading(self):
        k = Keypoints3D(front=(1, 0, 0), center=(0, 0, 0), back=(-1, 0, 0))
        assert yaw_from_keypoints(k, AWAY) == pytest.approx(0.0, abs=1e-15)

    def test_branch_equivalence_on_exact_keypoints(self):
        for b in random_boxes(300, seed=5):
            k = box_keypoints(b)
            t = yaw_from_keypoints(k, TOWARDS)
            a = yaw_from_keypoints(k, AWAY)
            delta = abs(math.remainder(t - a, 2 * math.pi))
            assert delta < 1e-12

    def test_degenerate(self):
        k = Keypoints3D(front=(0, 0, 0), center=(0, 0, 0), back=(0, 0, 0))
        with pytest.raises(DegenerateKeypointsError):
            yaw_from_keypoints(k, TOWARDS)

    def test_output_range(self):
        for b in random_boxes(100, seed=8):
            y = yaw_from_keypoints(box_keypoints(b), b.direction)
            assert -math.pi < y <= math.pi


class TestDirectionOf:
    def test_facing_camera(self):
        # heading (0,0,-1) means yaw = +pi/2
        b = Box3D(center=(0, 0, 10), dims=(4, 2, 1.5), yaw=math.pi / 2,
                  direction="towards")
        assert direction_of(b) == TOWARDS

    def test_facing_away(self):
        b = Box3D(center=(0, 0, 10), dims=(4, 2, 1.5), yaw=-math.pi / 2,
                  direction="towards")
        assert direction_of(b) == AWAY

    def test_perpendicular_tie_breaks_towards(self):
        # heading (1,0,0) at (0,0,10): dot(heading, -center) == 0
        b = Box3D(center=(0, 0, 10), dims=(4, 2, 1.5), yaw=0,
                  direction="towards")
        assert direction_of(b) == TOWARDS


class TestLiftKeypoints:
    def test_principal_point(self):
        pk = PixelKeypoints(front=(620, 187), center=(620, 187),
                            back=(620, 187), depths=(10, 10, 10),
                            direction=TOWARDS)
        k = lift_keypoints(pk, K)
        assert k.center == pytest.approx((0, 0, 10))

    def test_zero_depth_rejected(self):
        from autolabel3d.core import InvalidArgument
        with pytest.raises(InvalidArgument):
            PixelKeypoints(front=(0, 0), center=(0, 0), back=(0, 0),
                           depths=(0, 1, 1), direction=TOWARDS)

    def test_project_lift_roundtrip(self):
        for b in random_boxes(100, seed=21):
            pk = project_keypoints(b, K)
            k = lift_keypoints(pk, K)
            ref = box_keypoints(b)
            for got, want in ((k.front, ref.front), (k.center, ref.center),
                              (k.back, ref.back)):
                assert np.allclose(got, want, atol=1e-9)


def test_full_roundtrip_recovers_yaw():
    for b in random_boxes(500, seed=42):
        pk = project_keypoints(b, K)
        k = lift_keypoints(pk, K)
        yaw = yaw_from_keypoints(k, b.direction)
        assert abs(math.remainder(yaw - b.yaw, 2 * math.pi)) < 1e-9
