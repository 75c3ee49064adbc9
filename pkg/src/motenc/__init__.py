"""
motenc - temporal encoders for skeletal motion
==============================================
Predictive encoders (S-TE, C-TE, H-TE) trained to map a window of past poses
to the window that follows, plus the analyses built on them: horizon error
evaluation, limb masking, sequence classification, spike-triggered averages
and latent trajectories.
"""

__version__ = "1.0.0"
