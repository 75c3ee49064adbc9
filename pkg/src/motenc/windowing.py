"""
Window Pairs
============
Training samples are (input window, target window) pairs cut from a
recording: frames t-dt+1..t as input and t+1..t+dt as target, zero-based,
for t in [dt-1, T-dt-1]. A recording of T frames yields T - 2*dt + 1 pairs.

Windows are 3 x N_joints x dt views into the recording frames (no copies).
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from motenc.errors import EvaluationError, ParameterError

log = logging.getLogger(__name__)


@dataclass
class WindowPair:
    """One training sample."""

    input: np.ndarray
    target: np.ndarray
    t: int
    recording_id: str
    label: str = None


@dataclass
class PairDataset:
    """All pairs of a recording set plus the recordings that yielded none."""

    pairs: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    pairs_per_recording: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.pairs)

    def summary(self):
        return {
            "pairs": len(self.pairs),
            "recordings": len(self.pairs_per_recording),
            "skipped_too_short": list(self.skipped),
        }


def frame_window(rec, start, delta_t):
    """Frames start..start+dt-1 as a 3 x J x dt view."""
    return rec.frames[start:start + delta_t].transpose(1, 2, 0)


def num_window_pairs(num_frames, delta_t):
    return max(0, num_frames - 2 * delta_t + 1)


def make_window_pairs(rec, delta_t, stride=1):
    """
    Cut a recording into window pairs.

    Args:
        rec (MotionRecording): Normalized recording
        delta_t (int): Window length in frames
        stride (int): Step between consecutive t

    Returns:
        list: WindowPair objects ordered by t; empty when T < 2 * dt
    """
    if delta_t < 1 or stride < 1:
        raise ParameterError(f"delta_t and stride must be >= 1, got {delta_t}, {stride}")
    pairs = []
    for t in range(delta_t - 1, rec.num_frames - delta_t, stride):
        pairs.append(WindowPair(
            input=frame_window(rec, t - delta_t + 1, delta_t),
            target=frame_window(rec, t + 1, delta_t),
            t=t,
            recording_id=rec.recording_id,
            label=rec.label,
        ))
    return pairs


def build_pair_dataset(recordings, delta_t, stride=1):
    """
    Window every recording.

    Recordings shorter than 2 * dt contribute nothing and are listed in
    ``skipped``.

    Returns:
        PairDataset: Pairs in recording order, then t order
    """
    dataset = PairDataset()
    for rec in recordings:
        pairs = make_window_pairs(rec, delta_t, stride)
        if not pairs:
            dataset.skipped.append(rec.recording_id)
            log.warning("Recording %s (%d frames) is too short for dt=%d", rec.recording_id,
                        rec.num_frames, delta_t)
            continue
        dataset.pairs.extend(pairs)
        dataset.pairs_per_recording[rec.recording_id] = len(pairs)
    return dataset


def shuffle_dataset(pairs, rng):
    """Uniform permutation of ``pairs`` drawn from ``rng``."""
    order = rng.permutation(len(pairs))
    return [pairs[i] for i in order]


def stack_inputs(pairs):
    return np.stack([p.input for p in pairs])


def stack_targets(pairs):
    return np.stack([p.target for p in pairs])


def mask_limb(window, limb, schema):
    """
    Zero every coordinate of a limb's joints over the whole window.

    Args:
        window (Tensor): 3 x J x dt (or B x 3 x J x dt)
        limb (str): Limb name in ``schema``
        schema (SkeletonSchema): Skeleton the window follows

    Returns:
        Tensor: Masked copy; other entries are bit-identical
    """
    joints = list(schema.limb_joints(limb))
    masked = np.array(window, dtype=np.float64, copy=True)
    masked[..., joints, :] = 0.0
    return masked


def sequence_windows(recording, delta_t, window_seconds=None, stride=1):
    """
    Input windows ending at every step of a recording (or of its first seconds).

    Time steps t run from dt-1 up to the last frame inside ``window_seconds``
    (at least one window).

    Returns:
        Tensor: steps x 3 x J x dt
    """
    if recording.num_frames < delta_t:
        raise EvaluationError(
            f"recording {recording.recording_id} has {recording.num_frames} frames, "
            f"a {delta_t}-frame window is needed"
        )
    limit = recording.num_frames
    if window_seconds is not None:
        limit = min(limit, max(int(round(window_seconds * recording.fps)), delta_t))
    steps = range(delta_t - 1, limit, stride)
    return np.stack([frame_window(recording, t - delta_t + 1, delta_t) for t in steps])


def iter_window_batches(recordings, delta_t, batch_size=256):
    """
    Yield every input window of every recording in batches of at most ``batch_size``.

    Batches are B x 3 x J x dt views into the recording frames, so memory
    does not grow with the number of recordings. Recordings shorter than dt
    are skipped.
    """
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    for rec in recordings:
        if rec.num_frames < delta_t:
            continue
        views = np.lib.stride_tricks.sliding_window_view(rec.frames, delta_t, axis=0)
        for start in range(0, len(views), batch_size):
            yield views[start:start + batch_size]
