"""Gaussian-splat attribute sets: data model, PLY I/O and rigid transforms."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import sh
from .errors import SplatFormatError, SplatLengthError
from .fileio import atomic_write_bytes
from .se3 import SE3, quat_from_rot, quat_mul_batch

QUAT_TOL = 1e-6


def _canonical_quats(q):
    """Normalize only when off the unit sphere so unit inputs stay bit-exact,
    then flip to ``w >= 0``."""
    q = np.array(q, dtype=np.float32).reshape(-1, 4)
    if len(q):
        norms = np.linalg.norm(q.astype(np.float64), axis=1)
        if np.any(norms == 0) or not np.all(np.isfinite(norms)):
            raise ValueError("splat rotation quaternions must be finite and non-zero")
        off = np.abs(norms - 1.0) > QUAT_TOL
        if np.any(off):
            q[off] = (q[off].astype(np.float64) / norms[off, None]).astype(np.float32)
        neg = q[:, 0] < 0
        q[neg] = -q[neg]
    return q


@dataclass(frozen=True, eq=False)
class GaussianSet:
    """A table of ``N`` splats stored as float32 arrays.

    ``sh_coeffs`` uses the PLY layout (three DC terms, then the remaining
    coefficients channel by channel).  Quaternions are ``(w, x, y, z)``.
    """

    means: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    sh_coeffs: np.ndarray
    opacities: np.ndarray
    sh_degree: int = 0

    def __post_init__(self):
        sh.check_degree(self.sh_degree)
        n = len(np.asarray(self.means).reshape(-1, 3))
        width = 3 * sh.n_coeffs(self.sh_degree)
        fields = {
            "means": (np.asarray(self.means, dtype=np.float32).reshape(-1, 3)),
            "rotations": _canonical_quats(self.rotations),
            "log_scales": np.asarray(self.log_scales, dtype=np.float32).reshape(-1, 3),
            "sh_coeffs": np.asarray(self.sh_coeffs, dtype=np.float32).reshape(-1, width),
            "opacities": np.asarray(self.opacities, dtype=np.float32).reshape(-1),
        }
        for name, arr in fields.items():
            if len(arr) != n:
                raise ValueError(f"{name} has {len(arr)} rows, expected {n}")
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.means)

    @classmethod
    def empty(cls, sh_degree=0):
        w = 3 * sh.n_coeffs(sh_degree)
        z = np.zeros
        return cls(z((0, 3)), z((0, 4)), z((0, 3)), z((0, w)), z(0), sh_degree)

    def replace(self, **changes):
        kw = {
            "means": self.means,
            "rotations": self.rotations,
            "log_scales": self.log_scales,
            "sh_coeffs": self.sh_coeffs,
            "opacities": self.opacities,
            "sh_degree": self.sh_degree,
        }
        kw.update(changes)
        return GaussianSet(**kw)

    def equals(self, other):
        """Bit-exact equality on every attribute."""
        if self.sh_degree != other.sh_degree or len(self) != len(other):
            return False
        return all(
            getattr(self, f).tobytes() == getattr(other, f).tobytes()
            for f in ("means", "rotations", "log_scales", "sh_coeffs", "opacities")
        )


def property_names(sh_degree):
    n_rest = 3 * (sh.n_coeffs(sh_degree) - 1)
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(n_rest)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    return names


def _degree_from_rest(props):
    rest = [p for p in props if p.startswith("f_rest_")]
    counts = [3 * (sh.n_coeffs(L) - 1) for L in range(sh.MAX_DEGREE + 1)]
    if len(rest) in counts:
        return counts.index(len(rest))
    # name the first offending coefficient against the nearest valid layout
    target = next((c for c in counts if c > len(rest)), counts[-1])
    wanted = {f"f_rest_{i}" for i in range(target)}
    missing = sorted(wanted - set(rest), key=lambda p: int(p.split("_")[-1]))
    if missing and len(rest) < target:
        raise SplatFormatError(f"missing required property {missing[0]!r}")
    extra = [p for p in rest if p not in wanted]
    raise SplatFormatError(f"unexpected property {(extra or rest)[-1]!r}")


def to_ply_bytes(gs: GaussianSet) -> bytes:
    names = property_names(gs.sh_degree)
    n = len(gs)
    table = np.zeros((n, len(names)), dtype="<f4")
    table[:, 0:3] = gs.means
    table[:, 6 : 6 + gs.sh_coeffs.shape[1]] = gs.sh_coeffs
    k = 6 + gs.sh_coeffs.shape[1]
    table[:, k] = gs.opacities
    table[:, k + 1 : k + 4] = gs.log_scales
    table[:, k + 4 : k + 8] = gs.rotations
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")
    return ("\n".join(header) + "\n").encode("ascii") + table.tobytes()


def save_splat(gs: GaussianSet, path) -> None:
    atomic_write_bytes(path, to_ply_bytes(gs))


def _read_header(fh):
    lines = []
    while True:
        raw = fh.readline()
        if not raw:
            raise SplatFormatError("PLY header is not terminated by end_header")
        line = raw.decode("ascii", errors="replace").strip()
        lines.append(line)
        if line == "end_header":
            return lines


def from_ply_bytes(data: bytes) -> GaussianSet:
    fh = io.BytesIO(data)
    lines = _read_header(fh)
    if not lines or lines[0] != "ply":
        raise SplatFormatError("missing 'ply' magic line")
    fmt = None
    count = None
    props = []
    element = None
    for line in lines[1:-1]:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1] if len(parts) > 1 else None
        elif parts[0] == "element":
            if len(parts) != 3:
                raise SplatFormatError(f"malformed element line: {line!r}")
            element = parts[1]
            if element != "vertex":
                raise SplatFormatError(f"unexpected element {element!r}; only 'vertex' is allowed")
            try:
                count = int(parts[2])
            except ValueError:
                raise SplatFormatError(f"bad vertex count {parts[2]!r}") from None
        elif parts[0] == "property":
            if element != "vertex":
                raise SplatFormatError("property declared before 'element vertex'")
            if len(parts) != 3:
                raise SplatFormatError(f"unsupported property line: {line!r}")
            if parts[1] not in ("float", "float32"):
                raise SplatFormatError(f"property {parts[2]!r} has type {parts[1]!r}, expected float")
            props.append(parts[2])
        else:
            raise SplatFormatError(f"unrecognized header line: {line!r}")
    if fmt != "binary_little_endian":
        raise SplatFormatError(f"unsupported PLY format {fmt!r}; expected binary_little_endian")
    if count is None or count < 0:
        raise SplatFormatError("missing 'element vertex' declaration")

    degree = _degree_from_rest(props)
    expected = property_names(degree)
    for i, name in enumerate(expected):
        if i >= len(props):
            raise SplatFormatError(f"missing required property {name!r}")
        if props[i] != name:
            if props[i] in expected:
                raise SplatFormatError(f"missing required property {name!r} (found {props[i]!r} in its slot)")
            raise SplatFormatError(f"unexpected property {props[i]!r} (expected {name!r})")
    if len(props) > len(expected):
        raise SplatFormatError(f"unexpected property {props[len(expected)]!r}")

    payload = fh.read()
    row = 4 * len(expected)
    if len(payload) != row * count:
        raise SplatLengthError(
            f"payload holds {len(payload)} bytes, header declares {count} x {row} = {row * count}"
        )
    table = np.frombuffer(payload, dtype="<f4").reshape(count, len(expected))
    w = 3 * sh.n_coeffs(degree)
    k = 6 + w
    return GaussianSet(
        means=table[:, 0:3],
        rotations=table[:, k + 4 : k + 8],
        log_scales=table[:, k + 1 : k + 4],
        sh_coeffs=table[:, 6:k],
        opacities=table[:, k],
        sh_degree=degree,
    )


def load_splat(path) -> GaussianSet:
    return from_ply_bytes(Path(path).read_bytes())


def transform_gaussians(gs: GaussianSet, T: SE3, sh_mode="full") -> GaussianSet:
    """Rigidly move every splat by ``T``.

    Means are mapped by ``T``, orientations are left-multiplied by ``T``'s
    rotation and SH colour is rotated band by band.  Scales and opacities
    are untouched.  ``sh_mode="dc-only"`` zeroes the higher bands instead of
    rotating them.
    """
    if sh_mode not in ("full", "dc-only"):
        raise ValueError(f"unknown sh_mode {sh_mode!r}")
    R = T.rotation
    identity_rot = np.array_equal(R, np.eye(3))
    m = gs.means.astype(np.float64)
    # elementwise form: results must not depend on how splats are batched
    means = m[:, 0:1] * R[:, 0] + m[:, 1:2] * R[:, 1] + m[:, 2:3] * R[:, 2] + T.translation
    if identity_rot:
        rotations = gs.rotations
    else:
        rotations = quat_mul_batch(quat_from_rot(R), gs.rotations.astype(np.float64))
    coeffs = gs.sh_coeffs
    if sh_mode == "dc-only" and gs.sh_degree > 0:
        coeffs = coeffs.copy()
        coeffs[:, 3:] = 0.0
    elif not identity_rot and gs.sh_degree > 0 and len(gs):
        coeffs = sh.rotate_sh(coeffs, R, gs.sh_degree)
    return gs.replace(means=means, rotations=rotations, sh_coeffs=coeffs)


def concat_gaussians(sets) -> GaussianSet:
    sets = list(sets)
    if not sets:
        raise ValueError("concat_gaussians needs at least one set")
    degrees = {s.sh_degree for s in sets}
    if len(degrees) != 1:
        raise ValueError(f"cannot concatenate sets with mixed SH degrees {sorted(degrees)}")
    if len(sets) == 1:
        return sets[0]
    return GaussianSet(
        means=np.concatenate([s.means for s in sets]),
        rotations=np.concatenate([s.rotations for s in sets]),
        log_scales=np.concatenate([s.log_scales for s in sets]),
        sh_coeffs=np.concatenate([s.sh_coeffs for s in sets]),
        opacities=np.concatenate([s.opacities for s in sets]),
        sh_degree=sets[0].sh_degree,
    )


def covariances(gs: GaussianSet):
    """Per-splat 3x3 covariance ``R S S^T R^T`` in float64."""
    q = gs.rotations.astype(np.float64)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    R = np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=1,
    )
    s = np.exp(gs.log_scales.astype(np.float64))
    M = R * s[:, None, :]
    return M @ np.transpose(M, (0, 2, 1))
