"""
Performance Visualizations
==========================
Static PNG charts for the evaluation reports:

- horizon error curves (one line per model / masked limb)
- sequence classification confusion matrix
- training loss per epoch
- latent trajectory (first three components)
"""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

log = logging.getLogger(__name__)

sns.set_style("whitegrid")
plt.rcParams['figure.figsize'] = (12, 8)
plt.rcParams['font.size'] = 11

DPI = 150


class PerformanceVisualizer:
    """Writes charts into ``output_dir``; every method returns the PNG path."""

    def __init__(self, output_dir='outputs/visualizations'):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.created = []

    def _save(self, fig, name):
        output_file = self.output_dir / name
        fig.tight_layout()
        fig.savefig(output_file, dpi=DPI, bbox_inches='tight')
        plt.close(fig)
        self.created.append(output_file)
        log.info("Saved chart %s", output_file)
        return output_file

    def plot_horizon_curves(self, reports, name='horizon_errors.png'):
        """
        Mean error against horizon, one line per report.

        Args:
            reports (list): HorizonReport objects
        """
        rows = []
        for report in reports:
            for ms, err in zip(report.horizons_ms, report.mean_errors):
                rows.append({'model': report.label, 'horizon_ms': ms, 'mean_error': err})
        df = pd.DataFrame(rows)

        fig, ax = plt.subplots(figsize=(10, 6))
        sns.lineplot(data=df, x='horizon_ms', y='mean_error', hue='model', marker='o', ax=ax)
        ax.set_xlabel('Prediction horizon (ms)', fontsize=13, weight='bold')
        ax.set_ylabel('Mean error per joint', fontsize=13, weight='bold')
        ax.set_title('Prediction Error by Horizon', fontsize=15, weight='bold', pad=15)
        return self._save(fig, name)

    def plot_confusion_matrix(self, matrix, name='confusion_matrix.png'):
        """Heatmap of a ConfusionMatrix with its overall rate in the title."""
        fig, ax = plt.subplots(figsize=(9, 8))
        sns.heatmap(matrix.counts, annot=True, fmt='d', cmap='Blues',
                    xticklabels=matrix.class_names, yticklabels=matrix.class_names,
                    cbar_kws={'label': 'Sequences'}, linewidths=1, linecolor='black', ax=ax)
        ax.set_xlabel('Predicted action', fontsize=13, weight='bold')
        ax.set_ylabel('True action', fontsize=13, weight='bold')
        ax.set_title(f'Sequence Classification (rate {matrix.rate:.1%})', fontsize=15, weight='bold', pad=15)
        return self._save(fig, name)

    def plot_loss_curve(self, loss_history, name='training_loss.png'):
        fig, ax = plt.subplots(figsize=(10, 6))
        epochs = np.arange(len(loss_history))
        ax.plot(epochs, loss_history, marker='o' if len(loss_history) <= 50 else None, color='steelblue')
        ax.set_yscale('log')
        ax.set_xlabel('Epoch', fontsize=13, weight='bold')
        ax.set_ylabel('Mean training loss', fontsize=13, weight='bold')
        ax.set_title('Training Loss', fontsize=15, weight='bold', pad=15)
        return self._save(fig, name)

    def plot_latent_trajectory(self, trajectory, name='latent_trajectory.png'):
        """3-D line through the first three components, colored by time."""
        values = trajectory.values
        if values.shape[1] < 3:
            values = np.pad(values, ((0, 0), (0, 3 - values.shape[1])))
        fig = plt.figure(figsize=(9, 8))
        ax = fig.add_subplot(projection='3d')
        ax.plot(values[:, 0], values[:, 1], values[:, 2], color='gray', linewidth=0.8)
        points = ax.scatter(values[:, 0], values[:, 1], values[:, 2], c=trajectory.steps, cmap='viridis', s=6)
        fig.colorbar(points, ax=ax, label='Frame', shrink=0.7)
        ax.set_xlabel('PC 1')
        ax.set_ylabel('PC 2')
        ax.set_zlabel('PC 3')
        title = trajectory.metadata.get('recording', 'recording')
        ax.set_title(f'Latent Trajectory - {title} (PCA)', fontsize=14, weight='bold')
        return self._save(fig, name)
