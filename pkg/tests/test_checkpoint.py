import struct
import zlib

import numpy as np
import pytest

from motenc.checkpoint import checkpoint_bytes, load_checkpoint, network_from_bytes, save_checkpoint
from motenc.errors import (
    CheckpointChecksumError,
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from motenc.model import ArchitectureSpec, build_network
from motenc.tensor import SeededRng
from motenc.training import TrainConfig, train_te
from motenc.windowing import make_window_pairs


@pytest.mark.parametrize("kind", ["S-TE", "C-TE", "H-TE"])
def test_round_trip_is_bit_exact(kind, make_spec, tmp_path):
    net = build_network(make_spec(kind), SeededRng(3))
    net.metadata = {"epoch": 4, "seed": 3, "loss_history": [0.5, 0.25, 0.1 + 0.2]}
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path)

    assert loaded.spec == net.spec
    assert loaded.metadata == net.metadata
    for a, b in zip(net.parameters(), loaded.parameters()):
        assert a.name == b.name
        np.testing.assert_array_equal(a.value, b.value)
    assert checkpoint_bytes(loaded) == path.read_bytes()


def test_classifier_round_trip():
    clf = build_network(ArchitectureSpec(kind="classifier", classifier_input=4, num_classes=3), SeededRng(0))
    loaded = network_from_bytes(checkpoint_bytes(clf))
    x = np.random.default_rng(0).normal(size=(2, 4))
    np.testing.assert_array_equal(loaded.forward(x).output, clf.forward(x).output)


def test_hierarchy_masks_are_stored(make_spec):
    net = build_network(make_spec("H-TE", delta_t=2), SeededRng(0))
    loaded = network_from_bytes(checkpoint_bytes(net))
    for original, restored in zip(net.layers[:3], loaded.layers[:3]):
        np.testing.assert_array_equal(original.mask, restored.mask)
        assert (restored.weights[restored.mask == 0] == 0.0).all()


def test_same_seed_training_gives_identical_bytes(make_spec, make_recording):
    pairs = make_window_pairs(make_recording(num_frames=20), 4)
    config = TrainConfig(lr=0.1, batch_size=5, epochs=2, seed=9)

    def run():
        net = build_network(make_spec(), SeededRng(9))
        train_te(net, pairs, config)
        return checkpoint_bytes(net)

    assert run() == run()


@pytest.fixture
def blob(make_spec):
    return checkpoint_bytes(build_network(make_spec(), SeededRng(0)))


def test_bad_magic(blob):
    with pytest.raises(CheckpointFormatError):
        network_from_bytes(b"XXXX" + blob[4:])


def _resealed(body):
    return body + struct.pack("<I", zlib.crc32(body))


def test_unsupported_version(blob):
    patched = _resealed(blob[:4] + struct.pack("<I", 99) + blob[8:-4])
    with pytest.raises(CheckpointVersionError):
        network_from_bytes(patched)


@pytest.mark.parametrize("offset", [4, 9, 12, 16])
def test_damaged_prefix_field_fails_checksum(blob, offset):
    corrupted = bytearray(blob)
    corrupted[offset] ^= 0x01
    with pytest.raises(CheckpointChecksumError):
        network_from_bytes(bytes(corrupted))


def test_sealed_length_mismatch_is_a_format_error(blob):
    (header_len,) = struct.unpack_from("<I", blob, 8)
    patched = _resealed(blob[:8] + struct.pack("<I", header_len + 1) + blob[12:-4])
    with pytest.raises(CheckpointFormatError, match="declared length"):
        network_from_bytes(patched)


@pytest.mark.parametrize("cut", [1, 100])
def test_truncated(blob, cut):
    with pytest.raises(CheckpointTruncatedError):
        network_from_bytes(blob[:-cut])


def test_shorter_than_prefix(blob):
    with pytest.raises(CheckpointTruncatedError):
        network_from_bytes(blob[:10])


def test_flipped_payload_byte_fails_checksum(blob):
    corrupted = bytearray(blob)
    corrupted[-20] ^= 0xFF
    with pytest.raises(CheckpointChecksumError):
        network_from_bytes(bytes(corrupted))


def test_trailing_bytes(blob):
    with pytest.raises(CheckpointFormatError):
        network_from_bytes(blob + b"\x00")


def test_errors_name_the_file(tmp_path, blob):
    path = tmp_path / "broken.ckpt"
    path.write_bytes(blob[:-3])
    with pytest.raises(CheckpointTruncatedError, match="broken.ckpt"):
        load_checkpoint(path)
