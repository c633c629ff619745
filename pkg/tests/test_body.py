import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from articrig.bike import BikePose8DoF, compose_bike
from articrig.body import (
    JOINT_NAMES,
    N_JOINTS,
    SMPL_PARENTS,
    BodyPose,
    Skeleton,
    canonical_axis_angle,
    contact_indices,
    default_skeleton,
    derive_pedal_angle,
    derive_steering_angle,
    extract_contact_joints,
    forward_kinematics,
    load_body_pose,
    load_skeleton,
    save_body_pose,
    save_skeleton,
    skeleton_from_json,
)
from articrig.errors import DegenerateGeometryError, SchemaError
from articrig.se3 import SE3, rot_y

from conftest import random_rotation

seeds = st.integers(0, 2**32 - 1)


def fk_oracle(skel, pose):
    """Recursive 4x4 forward kinematics using scipy rotations."""
    mats = [None] * N_JOINTS

    def local(k):
        M = np.eye(4)
        M[:3, :3] = Rotation.from_rotvec(np.array(pose.thetas[k])).as_matrix()
        if k > 0:
            M[:3, 3] = skel.rest_offsets[k]
        return M

    def world(k):
        if mats[k] is None:
            if k == 0:
                mats[k] = pose.global_.matrix @ local(0)
            else:
                mats[k] = world(skel.parents[k]) @ local(k)
        return mats[k]

    return np.array([world(k)[:3, 3] for k in range(N_JOINTS)])


def random_pose(rng, scale=1.0, with_global=True):
    th = rng.normal(size=(N_JOINTS, 3)) * scale
    g = SE3(random_rotation(rng), rng.normal(size=3)) if with_global else SE3.identity()
    return BodyPose(th, rng.normal(size=10), g)


class TestSkeleton:
    def test_default(self, skeleton):
        assert skeleton.joint_names == JOINT_NAMES
        assert skeleton.parents == SMPL_PARENTS
        assert skeleton.parents[0] == -1

    def test_joint_span(self, skeleton):
        # ankle to head joint; the skull and soles add the rest of the 1.7 m
        p = forward_kinematics(skeleton, BodyPose.rest())
        assert p[:, 1].max() - p[:, 1].min() == pytest.approx(1.52)

    def test_left_is_plus_z(self, skeleton):
        p = forward_kinematics(skeleton, BodyPose.rest())
        assert p[skeleton.index("L_Wrist"), 2] > 0 > p[skeleton.index("R_Wrist"), 2]
        assert p[skeleton.index("L_Hip"), 2] > 0

    def test_round_trip(self, tmp_path, skeleton):
        save_skeleton(skeleton, tmp_path / "s.json")
        back = load_skeleton(tmp_path / "s.json")
        assert back.joint_names == skeleton.joint_names and back.parents == skeleton.parents
        assert back.rest_offsets.tobytes() == skeleton.rest_offsets.tobytes()
        assert json.loads((tmp_path / "s.json").read_text())["parents"][0] is None

    def test_cycle_rejected(self, skeleton):
        payload = skeleton.to_json()
        payload["parents"][4] = 7  # knee under its own ankle
        with pytest.raises(SchemaError, match="L_Knee"):
            skeleton_from_json(payload)

    def test_second_root_rejected(self, skeleton):
        payload = skeleton.to_json()
        payload["parents"][5] = None
        with pytest.raises(SchemaError):
            skeleton_from_json(payload)

    def test_wrong_count(self, skeleton):
        payload = skeleton.to_json()
        for key in ("joint_names", "parents", "rest_offsets"):
            payload[key] = payload[key][:23]
        with pytest.raises(SchemaError, match="24"):
            skeleton_from_json(payload)

    def test_missing_key(self):
        with pytest.raises(SchemaError, match="rest_offsets"):
            skeleton_from_json({"joint_names": [], "parents": []})

    def test_descendants(self, skeleton):
        d = skeleton.descendants(skeleton.index("L_Elbow"))
        assert [JOINT_NAMES[i] for i in d] == ["L_Elbow", "L_Wrist", "L_Hand"]


class TestFK:
    def test_rest_is_cumulative_offsets(self, skeleton):
        p = forward_kinematics(skeleton, BodyPose.rest())
        for k in range(N_JOINTS):
            expect = np.zeros(3)
            j = k
            while j > 0:
                expect += skeleton.rest_offsets[j]
                j = skeleton.parents[j]
            np.testing.assert_allclose(p[k], expect, atol=1e-15)

    def test_matches_oracle(self, skeleton, rng):
        for _ in range(50):
            pose = random_pose(rng)
            np.testing.assert_allclose(forward_kinematics(skeleton, pose), fk_oracle(skeleton, pose), atol=1e-12)

    def test_pelvis_half_turn(self, skeleton):
        th = np.zeros((N_JOINTS, 3))
        th[0] = [0, math.pi, 0]
        p = forward_kinematics(skeleton, BodyPose(th))
        rest = forward_kinematics(skeleton, BodyPose.rest())
        np.testing.assert_allclose(p, rest @ rot_y(math.pi).T, atol=1e-12)

    def test_elbow_bend_is_local(self, skeleton):
        th = np.zeros((N_JOINTS, 3))
        th[skeleton.index("L_Elbow")] = [0, math.pi / 2, 0]
        p = forward_kinematics(skeleton, BodyPose(th))
        rest = forward_kinematics(skeleton, BodyPose.rest())
        moved = {skeleton.index("L_Wrist"), skeleton.index("L_Hand")}
        for k in range(N_JOINTS):
            if k in moved:
                assert np.linalg.norm(p[k] - rest[k]) > 0.1
            else:
                assert p[k].tobytes() == rest[k].tobytes()

    @settings(max_examples=30)
    @given(seeds, st.integers(1, N_JOINTS - 1))
    def test_subtree_locality(self, skeleton, seed, k):
        rng = np.random.default_rng(seed)
        pose = random_pose(rng)
        th = np.array(pose.thetas)
        th[k] += rng.normal(size=3)
        a = forward_kinematics(skeleton, pose)
        b = forward_kinematics(skeleton, pose.with_thetas(th))
        sub = set(skeleton.descendants(k)) - {k}
        for j in range(N_JOINTS):
            if j not in sub:
                assert a[j].tobytes() == b[j].tobytes()

    @settings(max_examples=30)
    @given(seeds)
    def test_global_equivariance(self, skeleton, seed):
        rng = np.random.default_rng(seed)
        pose = random_pose(rng, with_global=False)
        T = SE3(random_rotation(rng), rng.normal(size=3) * 5)
        moved = forward_kinematics(skeleton, pose.with_global(T))
        np.testing.assert_allclose(moved, T.apply(forward_kinematics(skeleton, pose)), atol=1e-9)

    def test_bone_lengths(self, skeleton, rng):
        lengths = np.linalg.norm(skeleton.rest_offsets, axis=1)
        for _ in range(100):
            p = forward_kinematics(skeleton, random_pose(rng, scale=2.0))
            for k in range(1, N_JOINTS):
                assert abs(np.linalg.norm(p[k] - p[skeleton.parents[k]]) - lengths[k]) < 1e-9


class TestContacts:
    def test_indices(self, skeleton):
        names = list(JOINT_NAMES)
        assert contact_indices(skeleton) == [names.index(n) for n in ("L_Wrist", "R_Wrist", "Pelvis", "L_Ankle", "R_Ankle")]
        assert contact_indices(skeleton) == [20, 21, 0, 7, 8]

    def test_rest_pelvis_is_translation(self, skeleton):
        pose = BodyPose.rest(SE3.from_translation([1.5, -2, 3]))
        c = extract_contact_joints(forward_kinematics(skeleton, pose), skeleton)
        np.testing.assert_array_equal(c.pelvis, [1.5, -2, 3])

    def test_translation_shifts_all(self, skeleton, rng):
        pose = random_pose(rng, with_global=False)
        shift = np.array([0.3, 2.0, -1.0])
        a = extract_contact_joints(forward_kinematics(skeleton, pose)).as_array()
        b = extract_contact_joints(forward_kinematics(skeleton, pose.with_global(SE3.from_translation(shift)))).as_array()
        np.testing.assert_allclose(b - a, np.tile(shift, (5, 1)), atol=1e-12)


class TestDerive:
    def test_pedal_examples(self):
        assert derive_pedal_angle([0.3, 1.0, 0.2], [-0.3, 1.0, -0.2]) == 0.0
        assert derive_pedal_angle([0.1, 1.5, 0.2], [0.1, 1.0, -0.2]) == pytest.approx(math.pi / 2)
        assert derive_pedal_angle([-1, -0.0, 0], [0, 0.0, 0]) == math.pi

    def test_steering_examples(self):
        assert derive_steering_angle([0.5, 1.2, 0.25], [0.5, 1.2, -0.25]) == 0.0
        assert derive_steering_angle([0.7, 1.2, 0.0], [0.3, 1.2, 0.0]) == pytest.approx(math.pi / 2)

    def test_degenerate(self):
        with pytest.raises(DegenerateGeometryError):
            derive_pedal_angle([0.1, 0.5, 0.3], [0.1, 0.5, -0.3])
        with pytest.raises(DegenerateGeometryError):
            derive_steering_angle([0.4, 1.3, 0.0], [0.4, 1.0, 0.0])

    def test_pedal_round_trip(self, toy_bike):
        for deg in np.arange(-170, 190, 10):
            th = math.radians(deg)
            _, kps = compose_bike(toy_bike, BikePose8DoF(theta_p=th))
            got = derive_pedal_angle(kps["pedal_L"], kps["pedal_R"])
            assert abs(math.remainder(got - th, 2 * math.pi)) < 1e-9

    def test_steering_round_trip(self, toy_bike):
        for deg in np.linspace(-80, 80, 17):
            th = math.radians(deg)
            _, kps = compose_bike(toy_bike, BikePose8DoF(theta_s=th))
            assert abs(derive_steering_angle(kps["handle_L"], kps["handle_R"]) - th) < 1e-9


class TestPoseIO:
    def test_zero_file_is_rest(self, tmp_path, skeleton):
        (tmp_path / "p.json").write_text(json.dumps({"thetas": [[0, 0, 0]] * 24}))
        pose = load_body_pose(tmp_path / "p.json")
        np.testing.assert_array_equal(forward_kinematics(skeleton, pose), forward_kinematics(skeleton, BodyPose.rest()))
        np.testing.assert_array_equal(pose.beta, np.zeros(10))

    def test_round_trip(self, tmp_path, rng):
        pose = random_pose(rng, scale=0.5)
        save_body_pose(pose, tmp_path / "p.json")
        back = load_body_pose(tmp_path / "p.json")
        assert back.thetas.tobytes() == pose.thetas.tobytes()
        assert back.beta.tobytes() == pose.beta.tobytes()
        assert back.global_.rotation.tobytes() == pose.global_.rotation.tobytes()
        assert back.global_.translation.tobytes() == pose.global_.translation.tobytes()

    def test_canonicalization_semantic(self, tmp_path, skeleton, rng):
        pose = random_pose(rng, scale=3.0)
        save_body_pose(pose, tmp_path / "p.json")
        back = load_body_pose(tmp_path / "p.json")
        assert np.all(np.linalg.norm(back.thetas, axis=1) <= math.pi + 1e-6)
        np.testing.assert_allclose(forward_kinematics(skeleton, back), forward_kinematics(skeleton, pose), atol=1e-9)

    def test_canonical_axis_angle(self):
        v = np.array([0.0, 0.0, 1.5 * math.pi])
        np.testing.assert_allclose(canonical_axis_angle(v), [0, 0, -0.5 * math.pi], atol=1e-15)
        small = np.array([0.1, 0.2, 0.3])
        assert canonical_axis_angle(small).tobytes() == small.tobytes()
        for _ in range(5):
            v = np.random.default_rng(0).normal(size=3) * 7
            np.testing.assert_allclose(
                Rotation.from_rotvec(canonical_axis_angle(v)).as_matrix(), Rotation.from_rotvec(v).as_matrix(), atol=1e-12
            )

    def test_23_joints(self, tmp_path):
        (tmp_path / "p.json").write_text(json.dumps({"thetas": [[0, 0, 0]] * 23}))
        with pytest.raises(SchemaError, match="23 joints"):
            load_body_pose(tmp_path / "p.json")

    @pytest.mark.parametrize(
        "payload",
        [
            {"thetas": [[0, 0, "NaN"]] + [[0, 0, 0]] * 23},
            {"thetas": [[0, 0, 0]] * 24, "beta": [0] * 9},
            {"thetas": [[0, 0, 0]] * 24, "global_rotation": [[2, 0, 0], [0, 1, 0], [0, 0, 1]]},
            {"thetas": [[0, 0, 0]] * 24, "global_translation": [0, 0]},
            {"beta": [0] * 10},
            [1, 2],
        ],
    )
    def test_schema_errors(self, tmp_path, payload):
        (tmp_path / "p.json").write_text(json.dumps(payload))
        with pytest.raises(SchemaError):
            load_body_pose(tmp_path / "p.json")

    def test_non_finite_in_file(self, tmp_path):
        (tmp_path / "p.json").write_text('{"thetas": [[Infinity, 0, 0]' + ", [0, 0, 0]" * 23 + "]}")
        with pytest.raises(SchemaError, match="non-finite"):
            load_body_pose(tmp_path / "p.json")

    def test_invalid_json(self, tmp_path):
        (tmp_path / "p.json").write_text("{")
        with pytest.raises(SchemaError):
            load_body_pose(tmp_path / "p.json")

    def test_pose_type_rejects_bad_shape(self):
        with pytest.raises(SchemaError):
            BodyPose(np.zeros((23, 3)))


def test_skeleton_is_a_tree(skeleton):
    for k in range(1, N_JOINTS):
        j, steps = k, 0
        while j != 0:
            j = skeleton.parents[j]
            steps += 1
            assert steps < N_JOINTS
    assert isinstance(skeleton, Skeleton)
