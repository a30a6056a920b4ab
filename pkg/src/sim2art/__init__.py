"""sim2art: articulated-object understanding from point-cloud videos.

Part segmentation, joint parameters (type, axis, pivot) and per-frame motion
amounts are predicted from sequences of partial 3D point clouds by a
transformer trained purely on synthetic data.  The package also contains the
synthetic data generator and the evaluation harness.
"""

__version__ = "0.1.0"
