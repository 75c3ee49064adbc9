"""
Motion Recordings and File Formats
==================================
``MotionRecording`` holds T frames of 3 x N_joints Cartesian coordinates.

Text format (``.motion``, ``.txt``):

    #motenc v1
    fps=60 joints=pelvis,left_hip,... label=walk subject=s01 trial=003
    <3 * N_joints floats per row, x of every joint, then y, then z>

Extra ``key=value`` pairs after ``trial`` are kept as provenance (seed,
config hash). Values are written with the shortest round-trip decimal.

Binary format (``.mrec``): magic b"MREC", u32 version, u32 header length,
u64 payload length, JSON header, little-endian float64 frames, CRC-32.
"""

import json
import logging
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from motenc.errors import DataError, ParseError
from motenc.skeleton import SkeletonSchema

log = logging.getLogger(__name__)

TEXT_MAGIC = "#motenc v1"
BINARY_MAGIC = b"MREC"
BINARY_VERSION = 1
BINARY_SUFFIX = ".mrec"
MOTION_SUFFIXES = (".motion", ".txt", BINARY_SUFFIX)
HEADER_KEYS = ("fps", "joints", "label", "subject", "trial")

_PREFIX = struct.Struct("<4sIIQ")
_CRC = struct.Struct("<I")


@dataclass
class MotionRecording:
    """
    One recording: frames T x 3 x N_joints in meters.

    Attributes:
        frames (np.ndarray): Coordinates, frame-major
        fps (int): Sampling rate
        schema (SkeletonSchema): Joint names and hierarchy
        label (str | None): Action name
        subject (str): Subject id
        trial (str): Trial id
        provenance (dict): Free-form key/value pairs (seed, config hash)
    """

    frames: np.ndarray
    fps: int
    schema: SkeletonSchema = field(default_factory=SkeletonSchema)
    label: str = None
    subject: str = "unknown"
    trial: str = "0"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        expected = (3, self.schema.num_joints)
        if self.frames.ndim != 3 or self.frames.shape[1:] != expected:
            raise DataError(
                f"frames must be T x {expected[0]} x {expected[1]}, got {self.frames.shape}"
            )
        if self.frames.shape[0] < 1:
            raise DataError("a recording needs at least one frame")
        if int(self.fps) != self.fps or self.fps <= 0:
            raise DataError(f"fps must be a positive integer, got {self.fps}")
        self.fps = int(self.fps)
        if not np.isfinite(self.frames).all():
            raise DataError(f"recording {self.recording_id} contains non-finite coordinates")

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def num_joints(self):
        return self.schema.num_joints

    @property
    def duration_s(self):
        return self.num_frames / self.fps

    @property
    def recording_id(self):
        return f"{self.subject}/{self.trial}"

    def replace(self, **changes):
        return replace(self, **changes)


def _check_token(key, value):
    text = str(value)
    if not text or any(c.isspace() for c in text) or "=" in text:
        raise DataError(f"{key} '{text}' must be non-empty without spaces or '='")
    return text


def _header_fields(rec):
    fields = {
        "fps": str(rec.fps),
        "joints": ",".join(_check_token("joint name", j) for j in rec.schema.joint_names),
        "label": _check_token("label", rec.label) if rec.label else "-",
        "subject": _check_token("subject", rec.subject),
        "trial": _check_token("trial", rec.trial),
    }
    for key, value in rec.provenance.items():
        fields[_check_token("key", key)] = _check_token(key, value)
    return fields


def _recording_from_header(path, fields, frames, schema, line):
    missing = [k for k in HEADER_KEYS if k not in fields]
    if missing:
        raise ParseError(path, line, f"header is missing {', '.join(missing)}")
    try:
        fps = int(fields["fps"])
    except ValueError:
        raise ParseError(path, line, f"fps '{fields['fps']}' is not an integer")
    names = tuple(fields["joints"].split(","))
    if schema is None:
        schema = SkeletonSchema.from_joint_names(names)
    elif schema.joint_names != names:
        raise DataError(f"{path}: joints do not match the configured skeleton schema")
    provenance = {k: v for k, v in fields.items() if k not in HEADER_KEYS}
    label = None if fields["label"] == "-" else fields["label"]
    try:
        return MotionRecording(frames, fps, schema, label, fields["subject"], fields["trial"], provenance)
    except DataError as e:
        raise ParseError(path, line, str(e))


# =============================================================================
# Text format
# =============================================================================

def save_motion_text(rec, path):
    fields = _header_fields(rec)
    lines = [TEXT_MAGIC, " ".join(f"{k}={v}" for k, v in fields.items())]
    for row in rec.frames.reshape(rec.num_frames, -1).tolist():
        lines.append(" ".join(map(repr, row)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_motion_text(path, schema=None):
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != TEXT_MAGIC:
        raise ParseError(path, 1, f"expected '{TEXT_MAGIC}' header line")
    if len(lines) < 2:
        raise ParseError(path, 2, "missing key=value header line")

    fields = {}
    for token in lines[1].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise ParseError(path, 2, f"header token '{token}' is not key=value")
        fields[key] = value
    if "joints" not in fields:
        raise ParseError(path, 2, "header is missing joints")
    num_joints = len(fields["joints"].split(","))
    width = 3 * num_joints

    rows = []
    for number, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        cells = line.split(" ")
        if len(cells) != width:
            raise ParseError(path, number, f"expected {width} fields, found {len(cells)}")
        try:
            values = [float(c) for c in cells]
        except ValueError:
            bad = next(c for c in cells if not _is_float(c))
            raise ParseError(path, number, f"non-numeric cell '{bad}'")
        if not np.isfinite(values).all():
            raise ParseError(path, number, "non-finite coordinate")
        rows.append(values)
    if not rows:
        raise ParseError(path, len(lines) + 1, "no frames")

    frames = np.asarray(rows, dtype=np.float64).reshape(len(rows), 3, num_joints)
    return _recording_from_header(path, fields, frames, schema, 2)


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


# =============================================================================
# Binary format
# =============================================================================

def save_motion_binary(rec, path):
    header = json.dumps(_header_fields(rec), sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.asarray(rec.frames, dtype="<f8").tobytes()
    body = _PREFIX.pack(BINARY_MAGIC, BINARY_VERSION, len(header), len(payload)) + header + payload
    Path(path).write_bytes(body + _CRC.pack(zlib.crc32(body)))


def load_motion_binary(path, schema=None):
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _PREFIX.size:
        raise ParseError(path, None, "file is shorter than the binary prefix")
    magic, version, header_len, payload_len = _PREFIX.unpack_from(data)
    if magic != BINARY_MAGIC:
        raise ParseError(path, None, f"not a binary motion file (magic {magic!r})")
    if version != BINARY_VERSION:
        raise ParseError(path, None, f"unsupported binary version {version}")
    total = _PREFIX.size + header_len + payload_len + _CRC.size
    if len(data) != total:
        raise ParseError(path, None, f"expected {total} bytes, found {len(data)}")
    (stored_crc,) = _CRC.unpack_from(data, total - _CRC.size)
    if zlib.crc32(data[:total - _CRC.size]) != stored_crc:
        raise ParseError(path, None, "CRC-32 mismatch, file is corrupted")

    start = _PREFIX.size
    fields = json.loads(data[start:start + header_len].decode("utf-8"))
    num_joints = len(fields.get("joints", "").split(","))
    values = np.frombuffer(data, dtype="<f8", count=payload_len // 8, offset=start + header_len)
    if values.size % (3 * num_joints):
        raise ParseError(path, None, "payload is not a whole number of frames")
    frames = values.astype(np.float64).reshape(-1, 3, num_joints)
    return _recording_from_header(path, fields, frames, schema, None)


# =============================================================================
# Dispatch
# =============================================================================

def save_motion_file(rec, path):
    """
    Write ``rec`` to ``path``; ``.mrec`` selects the binary format.

    Args:
        rec (MotionRecording): Recording to store
        path (str | Path): Target file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == BINARY_SUFFIX:
        save_motion_binary(rec, path)
    else:
        save_motion_text(rec, path)


def load_motion_file(path, schema=None):
    """
    Read a motion file.

    Args:
        path (str | Path): Motion file
        schema (SkeletonSchema): Expected schema; inferred from the joint list when None

    Returns:
        MotionRecording: Parsed recording

    Raises:
        ParseError: Malformed file, with the offending line number for text files
    """
    path = Path(path)
    if path.suffix == BINARY_SUFFIX:
        return load_motion_binary(path, schema)
    return load_motion_text(path, schema)
