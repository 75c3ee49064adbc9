"""
Data Cleansing - Stage A
========================
Loads motion recordings and prepares them for windowing.

Cleansing logic:
1. Drop files that cannot be parsed or hold non-finite coordinates
2. Drop recordings whose fps is not a multiple of the target fps
3. Downsample to the target fps (120 Hz -> 60 Hz by default)
4. Normalize: subtract each frame's joint centroid, then the trial-mean pose
5. Generate a cleansing report
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from motenc.errors import DataError, ParameterError
from motenc.motion_io import MOTION_SUFFIXES, load_motion_file

log = logging.getLogger(__name__)


def normalize_recording(rec):
    """
    Remove translation and the trial-mean pose.

    Step 1 subtracts every frame's joint centroid from that frame (global
    rotation is kept). Step 2 subtracts the mean of the centered poses over the
    whole trial.

    Args:
        rec (MotionRecording): Recording

    Returns:
        MotionRecording: Normalized copy
    """
    frames = rec.frames
    if not np.isfinite(frames).all():
        raise DataError(f"recording {rec.recording_id} contains non-finite coordinates")
    centered = frames - frames.mean(axis=2, keepdims=True)
    normalized = centered - centered.mean(axis=0, keepdims=True)
    return rec.replace(frames=normalized)


def downsample(rec, target_fps):
    """
    Keep every (fps / target_fps)-th frame, starting at frame 0.

    Raises:
        ParameterError: If fps is not an integer multiple of target_fps
    """
    if target_fps <= 0 or rec.fps % target_fps:
        raise ParameterError(f"cannot downsample {rec.fps} Hz to {target_fps} Hz (non-integer ratio)")
    step = rec.fps // target_fps
    if step == 1:
        return rec
    return rec.replace(frames=rec.frames[::step].copy(), fps=target_fps)


def collect_motion_paths(paths):
    """
    Expand files and directories into a sorted list of motion files.

    Args:
        paths (list): Files or directories

    Returns:
        list: Paths of motion files, directories expanded recursively
    """
    found = []
    for entry in paths:
        entry = Path(entry)
        if entry.is_dir():
            found.extend(sorted(p for p in entry.rglob("*") if p.suffix in MOTION_SUFFIXES))
        elif entry.exists():
            found.append(entry)
        else:
            raise DataError(f"data path does not exist: {entry}")
    return found


class MotionCleanser:
    """
    Stage A of the pipeline: load, filter, downsample and normalize.

    ``stats`` counts removals per rule; ``dropped`` keeps (source, reason)
    rows for the report.
    """

    def __init__(self, target_fps=60, normalize=True, schema=None):
        self.target_fps = target_fps
        self.normalize = normalize
        self.schema = schema
        self.recordings = []
        self.dropped = []
        self.stats = {
            'initial_count': 0,
            'removed_unreadable': 0,
            'removed_fps_ratio': 0,
            'final_count': 0,
        }

    def _drop(self, source, rule, reason):
        self.stats[rule] += 1
        self.dropped.append({'source': str(source), 'reason': reason})
        log.warning("Dropped %s: %s", source, reason)

    def clean(self, recordings, sources=None):
        """
        Filter and normalize already loaded recordings.

        Args:
            recordings (list): MotionRecording objects
            sources (list): Names used in the report, defaults to recording ids

        Returns:
            list: Cleansed recordings, input order preserved
        """
        sources = sources or [r.recording_id for r in recordings]
        self.stats['initial_count'] += len(recordings)
        for source, rec in zip(sources, recordings):
            if self.target_fps and rec.fps % self.target_fps:
                self._drop(source, 'removed_fps_ratio',
                           f"{rec.fps} Hz is not a multiple of {self.target_fps} Hz")
                continue
            try:
                if self.target_fps:
                    rec = downsample(rec, self.target_fps)
                if self.normalize:
                    rec = normalize_recording(rec)
            except DataError as e:
                self._drop(source, 'removed_unreadable', str(e))
                continue
            self.recordings.append(rec)
        self.stats['final_count'] = len(self.recordings)
        return self.recordings

    def load(self, paths):
        """
        Load every motion file under ``paths`` and cleanse it.

        Unparseable files are dropped with their reason instead of aborting.
        """
        files = collect_motion_paths(paths)
        log.info("Loading %d motion files", len(files))
        loaded, sources = [], []
        for path in files:
            try:
                loaded.append(load_motion_file(path, self.schema))
                sources.append(path)
            except DataError as e:
                self.stats['initial_count'] += 1
                self._drop(path, 'removed_unreadable', str(e))
        return self.clean(loaded, sources)

    @property
    def retention_rate(self):
        if self.stats['initial_count'] == 0:
            return 0.0
        return self.stats['final_count'] / self.stats['initial_count'] * 100

    def summary_table(self):
        """Per-label recording and frame statistics."""
        rows = [
            {'label': r.label or '-', 'recording': r.recording_id, 'frames': r.num_frames}
            for r in self.recordings
        ]
        if not rows:
            return pd.DataFrame(columns=['label', 'recordings', 'frames_total', 'frames_min', 'frames_mean'])
        df = pd.DataFrame(rows)
        return df.groupby('label').agg(
            recordings=('recording', 'count'),
            frames_total=('frames', 'sum'),
            frames_min=('frames', 'min'),
            frames_mean=('frames', 'mean'),
        ).reset_index()

    def generate_report(self, output_path, provenance=None):
        """
        Write the cleansing report.

        Args:
            output_path (str | Path): Report file
            provenance (dict): seed / config hash lines for the header
        """
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        stats = self.stats

        lines = []
        lines.append("=" * 80)
        lines.append("DATA CLEANSING REPORT - MOTENC")
        lines.append("=" * 80)
        for key, value in (provenance or {}).items():
            lines.append(f"{key}: {value}")
        lines.append("")

        lines.append("-" * 80)
        lines.append("SUMMARY STATISTICS")
        lines.append("-" * 80)
        lines.append(f"Initial recordings:               {stats['initial_count']:,}")
        lines.append(f"Removed (unreadable/non-finite):  {stats['removed_unreadable']:,}")
        lines.append(f"Removed (fps ratio):              {stats['removed_fps_ratio']:,}")
        lines.append(f"Final recordings:                 {stats['final_count']:,}")
        lines.append(f"Retention rate:                   {self.retention_rate:.2f}%")
        lines.append("")

        lines.append("-" * 80)
        lines.append("CLEANSING LOGIC APPLIED")
        lines.append("-" * 80)
        lines.append(f"1. Downsampled to {self.target_fps} Hz (every fps/{self.target_fps}-th frame)")
        lines.append(f"2. Normalization {'on' if self.normalize else 'off'}: "
                     "per-frame centroid, then trial-mean pose")
        lines.append("")

        lines.append("-" * 80)
        lines.append("RECORDINGS PER LABEL")
        lines.append("-" * 80)
        lines.append(self.summary_table().to_string(index=False))
        lines.append("")

        if self.dropped:
            lines.append("-" * 80)
            lines.append("DROPPED RECORDINGS")
            lines.append("-" * 80)
            for row in self.dropped:
                lines.append(f"  {row['source']}: {row['reason']}")
            lines.append("")

        lines.append("=" * 80)
        lines.append("END OF REPORT")
        lines.append("=" * 80)
        output_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        log.info("Cleansing report saved to %s", output_path)
        return output_path
