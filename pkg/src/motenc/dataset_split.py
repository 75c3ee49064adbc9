"""
Train/Test Split - Stratified by Action
=======================================
Splits recordings per action label with a seeded rng, so every action
appears in both sets. Whole subjects can be held out for testing instead
(testing on an unseen subject).

A recording id (subject/trial) may appear in one set only; ``check_overlap``
enforces that before classification.
"""

import logging

import numpy as np
import pandas as pd

from motenc.errors import ParameterError, ValidationError

log = logging.getLogger(__name__)


def recordings_table(recordings):
    """One row per recording: position, id, label, subject, frames."""
    return pd.DataFrame(
        [
            {
                'position': i,
                'recording_id': r.recording_id,
                'label': r.label or '-',
                'subject': r.subject,
                'frames': r.num_frames,
            }
            for i, r in enumerate(recordings)
        ],
        columns=['position', 'recording_id', 'label', 'subject', 'frames'],
    )


def check_overlap(train, test):
    """
    Refuse train/test sets that share a recording id.

    Raises:
        ValidationError: Listing every shared id
    """
    shared = sorted({r.recording_id for r in train} & {r.recording_id for r in test})
    if shared:
        raise ValidationError([f"recording {rid} is in both train and test sets" for rid in shared])


class StratifiedSplitGenerator:
    """
    Per-label split of a recording list.

    ``stats`` holds the train/test counts per label after ``split``.
    """

    def __init__(self, recordings, rng):
        self.recordings = list(recordings)
        self.rng = rng
        self.df = recordings_table(self.recordings)
        self.stats = {}

    def _take(self, positions):
        return [self.recordings[p] for p in sorted(positions)]

    def split(self, test_fraction=0.25, holdout_subjects=None):
        """
        Split into (train, test).

        Args:
            test_fraction (float): Share of each label's recordings used for testing
            holdout_subjects (list): Subjects whose recordings form the test set;
                overrides ``test_fraction`` when given

        Returns:
            tuple: (train recordings, test recordings), each in input order
        """
        if not self.recordings:
            raise ParameterError("nothing to split: no recordings")

        if holdout_subjects:
            held = self.df['subject'].isin([str(s) for s in holdout_subjects])
            if not held.any():
                raise ParameterError(f"none of the holdout subjects {list(holdout_subjects)} occur in the data")
            test_positions = self.df.loc[held, 'position'].tolist()
        else:
            if not 0.0 < test_fraction < 1.0:
                raise ParameterError(f"test_fraction must lie in (0, 1), got {test_fraction}")
            test_positions = []
            for label, group in self.df.groupby('label', sort=True):
                positions = group['position'].to_numpy()
                count = int(round(test_fraction * len(positions)))
                if len(positions) >= 2:
                    count = min(max(count, 1), len(positions) - 1)
                else:
                    count = 0
                    log.warning("Label %s has a single recording, kept for training", label)
                order = self.rng.permutation(len(positions))
                test_positions.extend(positions[order[:count]].tolist())

        train_positions = sorted(set(self.df['position']) - set(test_positions))
        train, test = self._take(train_positions), self._take(test_positions)

        is_test = self.df['position'].isin(test_positions)
        counts = self.df.assign(split=np.where(is_test, 'test', 'train'))
        self.stats = counts.groupby(['label', 'split']).size().unstack(fill_value=0).to_dict('index')
        log.info("Split %d recordings into %d train / %d test", len(self.recordings), len(train), len(test))
        check_overlap(train, test)
        return train, test
