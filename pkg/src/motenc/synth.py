"""
Synthetic Motion Generator
==========================
Procedural stand-in for motion-capture exports on the 24-joint SMPL skeleton.

Every action is a superposition of per-joint sinusoids around a rest pose plus
Gaussian jitter. Actions have disjoint dominant frequencies and move
different body parts:

    walk   1.0 Hz   legs swing forward/back, arms counter-swing
    wave   2.0 Hz   right forearm sways sideways
    box    1.5 Hz   both arms punch forward in antiphase
    squat  0.5 Hz   upper body and hips move down and up
    turn   0.25 Hz  whole body rotates about the vertical axis

Coordinates are meters, x lateral (left positive), y up, z forward.
"""

import logging

import numpy as np

from motenc.errors import ParameterError
from motenc.motion_io import MotionRecording
from motenc.skeleton import SMPL_JOINTS, SkeletonSchema

log = logging.getLogger(__name__)

ACTIONS = ("walk", "wave", "box", "squat", "turn")
JITTER_STD = 0.005
AMPLITUDE_SPREAD = 0.1

REST_POSE = {
    "pelvis": (0.0, 0.95, 0.0),
    "left_hip": (0.09, 0.87, 0.0), "right_hip": (-0.09, 0.87, 0.0),
    "spine1": (0.0, 1.05, 0.0),
    "left_knee": (0.10, 0.50, 0.0), "right_knee": (-0.10, 0.50, 0.0),
    "spine2": (0.0, 1.18, 0.0),
    "left_ankle": (0.10, 0.09, 0.0), "right_ankle": (-0.10, 0.09, 0.0),
    "spine3": (0.0, 1.25, 0.0),
    "left_foot": (0.11, 0.02, 0.12), "right_foot": (-0.11, 0.02, 0.12),
    "neck": (0.0, 1.45, 0.0),
    "left_collar": (0.07, 1.38, 0.0), "right_collar": (-0.07, 1.38, 0.0),
    "head": (0.0, 1.60, 0.02),
    "left_shoulder": (0.18, 1.40, 0.0), "right_shoulder": (-0.18, 1.40, 0.0),
    "left_elbow": (0.20, 1.12, 0.0), "right_elbow": (-0.20, 1.12, 0.0),
    "left_wrist": (0.21, 0.87, 0.0), "right_wrist": (-0.21, 0.87, 0.0),
    "left_hand": (0.21, 0.79, 0.0), "right_hand": (-0.21, 0.79, 0.0),
}

# action -> (frequency Hz, [(joint, axis, amplitude m, phase offset rad)])
_X, _Y, _Z = 0, 1, 2
_SINUSOIDS = {
    "walk": (1.0, [
        ("left_hip", _Z, 0.05, 0.0), ("right_hip", _Z, 0.05, np.pi),
        ("left_knee", _Z, 0.15, 0.0), ("right_knee", _Z, 0.15, np.pi),
        ("left_ankle", _Z, 0.25, 0.0), ("right_ankle", _Z, 0.25, np.pi),
        ("left_foot", _Z, 0.28, 0.0), ("right_foot", _Z, 0.28, np.pi),
        ("left_elbow", _Z, 0.04, np.pi), ("right_elbow", _Z, 0.04, 0.0),
        ("left_wrist", _Z, 0.08, np.pi), ("right_wrist", _Z, 0.08, 0.0),
        ("left_hand", _Z, 0.09, np.pi), ("right_hand", _Z, 0.09, 0.0),
    ]),
    "wave": (2.0, [
        ("right_elbow", _X, 0.08, 0.0),
        ("right_wrist", _X, 0.25, 0.0),
        ("right_hand", _X, 0.28, 0.0),
    ]),
    "box": (1.5, [
        ("left_elbow", _Z, 0.15, 0.0), ("right_elbow", _Z, 0.15, np.pi),
        ("left_wrist", _Z, 0.30, 0.0), ("right_wrist", _Z, 0.30, np.pi),
        ("left_hand", _Z, 0.33, 0.0), ("right_hand", _Z, 0.33, np.pi),
    ]),
}

_SQUAT_DEPTH = 0.30
_SQUAT_KNEE_FORWARD = 0.15
_TURN_ANGLE = np.pi / 2
_LOWER_LEG = ("left_ankle", "right_ankle", "left_foot", "right_foot")


def rest_pose():
    """3 x 24 rest pose in SMPL joint order."""
    return np.array([REST_POSE[name] for name in SMPL_JOINTS], dtype=np.float64).T


def _joint(name):
    return SMPL_JOINTS.index(name)


def _squat(frames, t, phase, amplitude):
    # 0 when standing, 1 at the bottom of the squat
    depth = amplitude * (1.0 - np.cos(2 * np.pi * 0.5 * t + phase)) / 2.0
    lowered = [i for i, name in enumerate(SMPL_JOINTS) if name not in _LOWER_LEG]
    frames[:, _Y, lowered] -= _SQUAT_DEPTH * depth[:, None]
    for knee in ("left_knee", "right_knee"):
        frames[:, _Z, _joint(knee)] += _SQUAT_KNEE_FORWARD * depth


def _turn(frames, t, phase, amplitude):
    angle = _TURN_ANGLE * amplitude * np.sin(2 * np.pi * 0.25 * t + phase)
    cos, sin = np.cos(angle)[:, None], np.sin(angle)[:, None]
    x, z = frames[:, _X, :].copy(), frames[:, _Z, :].copy()
    frames[:, _X, :] = cos * x + sin * z
    frames[:, _Z, :] = -sin * x + cos * z


def synth_generate(action, duration_s, fps, rng, subject="synth", trial="0"):
    """
    Generate one labeled recording.

    Args:
        action (str): walk, wave, box, squat or turn
        duration_s (float): Length in seconds
        fps (int): Sampling rate
        rng (SeededRng): Random source; the same seed gives the same recording

    Returns:
        MotionRecording: T = round(duration_s * fps) frames, label ``action``
    """
    if action not in ACTIONS:
        raise ParameterError(f"unknown action '{action}', expected one of {', '.join(ACTIONS)}")
    num_frames = int(round(duration_s * fps))
    if num_frames < 1 or fps <= 0:
        raise ParameterError(f"duration {duration_s} s at {fps} fps yields no frames")

    t = np.arange(num_frames) / fps
    phase = rng.uniform(0.0, 2 * np.pi)
    amplitude = rng.uniform(1.0 - AMPLITUDE_SPREAD, 1.0 + AMPLITUDE_SPREAD)
    frames = np.repeat(rest_pose()[None], num_frames, axis=0)

    if action in _SINUSOIDS:
        frequency, terms = _SINUSOIDS[action]
        for name, axis, size, offset in terms:
            frames[:, axis, _joint(name)] += amplitude * size * np.sin(2 * np.pi * frequency * t + phase + offset)
    elif action == "squat":
        _squat(frames, t, phase, amplitude)
    else:
        _turn(frames, t, phase, amplitude)

    frames += rng.normal(0.0, JITTER_STD, frames.shape)
    return MotionRecording(frames, int(fps), SkeletonSchema(), action, subject, str(trial))
