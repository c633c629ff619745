import math
from collections import Counter

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from articrig.errors import SplatFormatError, SplatLengthError
from articrig.se3 import SE3, rot_z
from articrig.splats import (
    GaussianSet,
    concat_gaussians,
    from_ply_bytes,
    load_splat,
    property_names,
    save_splat,
    to_ply_bytes,
    transform_gaussians,
)

from conftest import random_rotation


def make_set(rng, n, degree=3, scale=1.0):
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianSet(
        means=rng.normal(size=(n, 3)) * scale,
        rotations=q,
        log_scales=rng.normal(size=(n, 3)) - 3,
        sh_coeffs=rng.normal(size=(n, 3 * (degree + 1) ** 2)) * 0.5,
        opacities=rng.normal(size=n),
        sh_degree=degree,
    )


def covariance_oracle(gs):
    """Covariance from scipy's quaternion conversion (scalar-last)."""
    q = gs.rotations.astype(np.float64)
    R = Rotation.from_quat(q[:, [1, 2, 3, 0]]).as_matrix()
    S = np.exp(gs.log_scales.astype(np.float64))
    return np.einsum("nij,nj,nkj->nik", R, S**2, R)


def header_of(gs):
    raw = to_ply_bytes(gs)
    cut = raw.index(b"end_header\n") + len(b"end_header\n")
    return raw[:cut].decode(), raw[cut:]


class TestGaussianSet:
    def test_width_for_degree_three(self, rng):
        gs = make_set(rng, 4)
        assert gs.sh_coeffs.shape == (4, 48)

    def test_length_mismatch(self, rng):
        gs = make_set(rng, 3)
        with pytest.raises(ValueError, match="opacities"):
            gs.replace(opacities=np.zeros(2))

    def test_wrong_sh_width(self, rng):
        gs = make_set(rng, 3)
        with pytest.raises(ValueError):
            gs.replace(sh_coeffs=np.zeros((3, 47)))

    def test_bad_degree(self):
        with pytest.raises(ValueError):
            GaussianSet.empty(sh_degree=4)

    def test_quaternions_canonical_and_unit(self, rng):
        gs = make_set(rng, 50).replace(rotations=-rng.normal(size=(50, 4)) * 3)
        assert np.all(gs.rotations[:, 0] >= 0)
        np.testing.assert_allclose(np.linalg.norm(gs.rotations, axis=1), 1, atol=1e-6)

    def test_zero_quaternion_rejected(self, rng):
        with pytest.raises(ValueError):
            make_set(rng, 1).replace(rotations=np.zeros((1, 4)))


class TestPly:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        gs = make_set(rng, 3)
        save_splat(gs, tmp_path / "a.ply")
        back = load_splat(tmp_path / "a.ply")
        assert back.sh_degree == 3
        assert back.equals(gs)

    @pytest.mark.parametrize("degree", [0, 1, 2, 3])
    def test_round_trip_each_degree(self, rng, degree):
        gs = make_set(rng, 7, degree)
        assert from_ply_bytes(to_ply_bytes(gs)).equals(gs)

    def test_empty_set(self, tmp_path):
        save_splat(GaussianSet.empty(3), tmp_path / "e.ply")
        back = load_splat(tmp_path / "e.ply")
        assert len(back) == 0 and back.sh_degree == 3

    def test_degree_three_width(self, rng):
        back = from_ply_bytes(to_ply_bytes(make_set(rng, 2, 3)))
        assert back.sh_coeffs.shape[1] == 3 * 16

    def test_layout(self, rng):
        header, payload = header_of(make_set(rng, 2, 1))
        props = [line.split()[-1] for line in header.splitlines() if line.startswith("property")]
        assert props == property_names(1)
        assert props[:9] == ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        assert props[-8:] == ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
        assert "binary_little_endian" in header
        table = np.frombuffer(payload, "<f4").reshape(2, -1)
        np.testing.assert_array_equal(table[:, 3:6], 0)  # normals

    def test_special_float_payloads_survive(self):
        gs = GaussianSet(
            means=[[np.float32(1e-45), -0.0, np.float32(3.4e38)]],
            rotations=[[1, 0, 0, 0]],
            log_scales=[[-0.0, 1.5, np.float32(1.1754944e-38)]],
            sh_coeffs=[[0.1, 0.2, 0.3]],
            opacities=[np.float32(-7.25)],
        )
        assert from_ply_bytes(to_ply_bytes(gs)).equals(gs)

    def test_missing_property_named(self, rng):
        header, payload = header_of(make_set(rng, 1, 0))
        bad = header.replace("property float scale_1\n", "")
        with pytest.raises(SplatFormatError, match="scale_1"):
            from_ply_bytes(bad.encode() + payload[:-4])

    def test_extra_property_named(self, rng):
        header, payload = header_of(make_set(rng, 1, 0))
        bad = header.replace("end_header", "property float bogus\nend_header")
        with pytest.raises(SplatFormatError, match="bogus"):
            from_ply_bytes(bad.encode() + payload + b"\0\0\0\0")

    def test_missing_rest_coefficient_named(self, rng):
        header, payload = header_of(make_set(rng, 1, 1))
        bad = header.replace("property float f_rest_8\n", "")
        with pytest.raises(SplatFormatError, match="f_rest_8"):
            from_ply_bytes(bad.encode() + payload[:-4])

    def test_truncated_payload(self, rng):
        raw = to_ply_bytes(make_set(rng, 3))
        with pytest.raises(SplatLengthError):
            from_ply_bytes(raw[:-1])
        with pytest.raises(SplatLengthError):
            from_ply_bytes(raw + b"\0")

    def test_ascii_and_garbage_rejected(self, rng):
        header, payload = header_of(make_set(rng, 1, 0))
        with pytest.raises(SplatFormatError):
            from_ply_bytes(header.replace("binary_little_endian", "ascii").encode() + payload)
        with pytest.raises(SplatFormatError):
            from_ply_bytes(b"not a ply\n")
        with pytest.raises(SplatFormatError):
            from_ply_bytes(header.replace("property float opacity", "property double opacity").encode() + payload)

    def test_quaternions_normalized_on_load(self, rng):
        header, payload = header_of(make_set(rng, 1, 0))
        table = np.frombuffer(payload, "<f4").copy()
        table[-4:] = [-2.0, 0.0, 0.0, 0.0]
        back = from_ply_bytes(header.encode() + table.tobytes())
        np.testing.assert_array_equal(back.rotations[0], [1, 0, 0, 0])
        table[-4:] = [0.0, 3.0, 0.0, 4.0]
        back = from_ply_bytes(header.encode() + table.tobytes())
        np.testing.assert_allclose(back.rotations[0], [0, 0.6, 0, 0.8], atol=1e-7)


class TestTransform:
    def test_identity_bit_exact(self, rng):
        gs = make_set(rng, 20)
        assert transform_gaussians(gs, SE3.identity()).equals(gs)

    def test_quarter_turn_mean(self):
        gs = GaussianSet([[1, 0, 0]], [[1, 0, 0, 0]], [[0, 0, 0]], [[0, 0, 0]], [0.0])
        out = transform_gaussians(gs, SE3.from_rotation(rot_z(math.pi / 2)))
        np.testing.assert_allclose(out.means[0], [0, 1, 0], atol=1e-7)

    def test_translation_keeps_other_attributes(self, rng):
        gs = make_set(rng, 30)
        out = transform_gaussians(gs, SE3.from_translation([0.3, -1.2, 2.0]))
        for f in ("rotations", "log_scales", "sh_coeffs", "opacities"):
            assert getattr(out, f).tobytes() == getattr(gs, f).tobytes()
        np.testing.assert_allclose(out.means, gs.means + np.float32([0.3, -1.2, 2.0]), atol=1e-6)

    def test_covariance_conjugation(self, rng):
        gs = make_set(rng, 100)
        for _ in range(10):
            R = random_rotation(rng)
            out = transform_gaussians(gs, SE3(R, rng.normal(size=3)))
            expect = np.einsum("ij,njk,lk->nil", R, covariance_oracle(gs), R)
            np.testing.assert_allclose(covariance_oracle(out), expect, atol=1e-6)

    def test_scales_and_opacity_untouched(self, rng):
        gs = make_set(rng, 10)
        out = transform_gaussians(gs, SE3(random_rotation(rng), [1, 2, 3]))
        assert out.log_scales.tobytes() == gs.log_scales.tobytes()
        assert out.opacities.tobytes() == gs.opacities.tobytes()

    def test_composition(self, rng):
        gs = make_set(rng, 50)
        for _ in range(5):
            A = SE3(random_rotation(rng), rng.uniform(-1, 1, 3))
            B = SE3(random_rotation(rng), rng.uniform(-1, 1, 3))
            two = transform_gaussians(transform_gaussians(gs, A), B)
            one = transform_gaussians(gs, B @ A)
            for f in ("means", "log_scales", "sh_coeffs", "opacities"):
                np.testing.assert_allclose(getattr(two, f), getattr(one, f), atol=1e-6)
            # q and -q are the same rotation
            dots = np.abs(np.sum(two.rotations.astype(np.float64) * one.rotations, axis=1))
            np.testing.assert_allclose(dots, 1, atol=1e-6)

    def test_dc_only_drops_higher_bands(self, rng):
        gs = make_set(rng, 5)
        out = transform_gaussians(gs, SE3(random_rotation(rng), [0, 0, 0]), sh_mode="dc-only")
        np.testing.assert_array_equal(out.sh_coeffs[:, 3:], 0)
        np.testing.assert_array_equal(out.sh_coeffs[:, :3], gs.sh_coeffs[:, :3])
        with pytest.raises(ValueError):
            transform_gaussians(gs, SE3.identity(), sh_mode="bogus")

    def test_batch_independent(self, rng):
        gs = make_set(rng, 12)
        T = SE3(random_rotation(rng), rng.normal(size=3))
        whole = transform_gaussians(gs, T)
        a = transform_gaussians(GaussianSet(gs.means[:5], gs.rotations[:5], gs.log_scales[:5], gs.sh_coeffs[:5], gs.opacities[:5], 3), T)
        assert a.means.tobytes() == whole.means[:5].tobytes()
        assert a.sh_coeffs.tobytes() == whole.sh_coeffs[:5].tobytes()


class TestConcat:
    def test_single_is_identity(self, rng):
        a = make_set(rng, 3)
        assert concat_gaussians([a]) is a

    def test_two_sets(self, rng):
        a, b = make_set(rng, 2), make_set(rng, 3)
        c = concat_gaussians([a, b])
        assert len(c) == 5
        assert c.means[:2].tobytes() == a.means.tobytes()
        assert c.sh_coeffs[2:].tobytes() == b.sh_coeffs.tobytes()

    def test_mixed_degrees(self, rng):
        with pytest.raises(ValueError, match="mixed"):
            concat_gaussians([make_set(rng, 2, 1), make_set(rng, 2, 3)])

    def test_empty_is_neutral(self, rng):
        a = make_set(rng, 4)
        assert concat_gaussians([GaussianSet.empty(3), a, GaussianSet.empty(3)]).equals(a)

    def test_associative(self, rng):
        a, b, c = (make_set(rng, n) for n in (2, 3, 4))
        left = concat_gaussians([concat_gaussians([a, b]), c])
        right = concat_gaussians([a, concat_gaussians([b, c])])
        assert left.equals(right)

    def test_toy_parts_multiset(self, toy_bike):
        parts = list(toy_bike.parts().values())
        c = concat_gaussians(parts)
        assert len(c) == sum(len(p) for p in parts)

        def rows(gs):
            return Counter(
                np.concatenate([gs.means, gs.rotations, gs.log_scales, gs.sh_coeffs, gs.opacities[:, None]], 1)
                .tobytes()[i : i + 4 * 59]
                for i in range(0, len(gs) * 4 * 59, 4 * 59)
            )

        expect = Counter()
        for p in parts:
            expect.update(rows(p))
        assert rows(c) == expect
        assert Counter(c.opacities.tolist()) == Counter(sum((p.opacities.tolist() for p in parts), []))
