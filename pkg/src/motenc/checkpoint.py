"""
Checkpoints
===========
Fixed little-endian binary layout so that a network survives a save/load
cycle bit for bit:

    magic      4 bytes   b"MTEC"
    version    u32
    header_len u32
    payload_len u64
    header     JSON (sorted keys): spec, metadata, tensor manifest
    payload    float64 little-endian, tensors in manifest order
    crc32      u32 over everything above

Masks of H-TE layers are stored next to the weights so a loaded network can
be checked for exact zeros at masked positions.
"""

import json
import logging
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from motenc.errors import (
    CheckpointChecksumError,
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from motenc.model import ArchitectureSpec, build_network

log = logging.getLogger(__name__)

MAGIC = b"MTEC"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sIIQ")
_CRC = struct.Struct("<I")


def _named_tensors(net):
    tensors = [(p.name, p.value) for p in net.parameters()]
    tensors += list(net.buffers())
    return tensors


def checkpoint_bytes(net):
    """Serialize ``net`` to the checkpoint byte layout."""
    tensors = _named_tensors(net)
    header = {
        "spec": net.spec.to_dict(),
        "metadata": net.metadata,
        "tensors": [{"name": name, "shape": list(value.shape)} for name, value in tensors],
    }
    header_blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.asarray(value, dtype="<f8").tobytes() for _, value in tensors)

    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_blob), len(payload)) + header_blob + payload
    return body + _CRC.pack(zlib.crc32(body))


def save_checkpoint(net, path):
    """
    Write ``net`` to ``path`` (atomically, via a temporary sibling file).

    Args:
        net (Network): Network to store
        path (str | Path): Target file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(checkpoint_bytes(net))
    os.replace(tmp, path)
    log.info("Saved %s checkpoint to %s", net.spec.kind, path)


def _crc_matches(data, end):
    (stored_crc,) = _CRC.unpack_from(data, end - _CRC.size)
    return zlib.crc32(data[:end - _CRC.size]) == stored_crc


def _looks_cut(data, header_len, payload_len):
    """A cut file still has a readable header whose manifest accounts for the declared payload."""
    header_end = _PREFIX.size + header_len
    if len(data) < header_end:
        return True
    try:
        header = json.loads(data[_PREFIX.size:header_end].decode("utf-8"))
        count = sum(int(np.prod(entry["shape"])) for entry in header["tensors"])
    except (ValueError, KeyError, TypeError):
        return False
    return 8 * count == payload_len


def network_from_bytes(data, source="<bytes>"):
    """Rebuild a network from checkpoint bytes; see ``load_checkpoint``."""
    if len(data) < _PREFIX.size:
        raise CheckpointTruncatedError(f"{source}: file is shorter than the checkpoint prefix")
    magic, version, header_len, payload_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointFormatError(f"{source}: not a checkpoint (magic {magic!r})")
    if len(data) < _PREFIX.size + _CRC.size:
        raise CheckpointTruncatedError(f"{source}: file ends before the checksum")

    # the prefix fields are only trusted once the trailing CRC covers them
    total = _PREFIX.size + header_len + payload_len + _CRC.size
    if not _crc_matches(data, len(data)):
        if version == FORMAT_VERSION:
            if len(data) < total and _looks_cut(data, header_len, payload_len):
                raise CheckpointTruncatedError(f"{source}: expected {total} bytes, found {len(data)}")
            if len(data) > total and _crc_matches(data, total):
                raise CheckpointFormatError(f"{source}: {len(data) - total} trailing bytes")
        raise CheckpointChecksumError(f"{source}: CRC-32 mismatch, file is corrupted")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{source}: format version {version}, this build reads version {FORMAT_VERSION}"
        )
    if len(data) != total:
        raise CheckpointFormatError(f"{source}: declared length {total} does not match {len(data)} bytes")

    header_end = _PREFIX.size + header_len
    try:
        header = json.loads(data[_PREFIX.size:header_end].decode("utf-8"))
        spec = ArchitectureSpec.from_dict(header["spec"])
        manifest = header["tensors"]
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointFormatError(f"{source}: unreadable header ({e})")

    net = build_network(spec)
    net.metadata = header.get("metadata", {})
    targets = dict(_named_tensors(net))

    offset = header_end
    for entry in manifest:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in targets or targets[name].shape != shape:
            raise CheckpointFormatError(f"{source}: tensor {name}{shape} does not fit the architecture")
        count = int(np.prod(shape))
        values = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        np.copyto(targets[name], values.reshape(shape))
        offset += 8 * count
    if offset != header_end + payload_len:
        raise CheckpointFormatError(f"{source}: payload length does not match the manifest")
    return net


def load_checkpoint(path):
    """
    Load a checkpoint.

    Args:
        path (str | Path): Checkpoint file

    Returns:
        Network: Rebuilt network with parameters, masks and metadata

    Raises:
        CheckpointFormatError: Wrong magic, trailing bytes, bad header
        CheckpointVersionError: Unsupported format version
        CheckpointTruncatedError: File shorter than declared
        CheckpointChecksumError: CRC-32 mismatch, including a damaged version or length field
    """
    path = Path(path)
    net = network_from_bytes(path.read_bytes(), source=str(path))
    log.info("Loaded %s checkpoint from %s", net.spec.kind, path)
    return net
