"""Dark-spot segmentation pipeline for SAR-like intensity rasters.

Stages: speckle filtering and tiling, superpixel segmentation, region
adjacency graph construction, per-region feature extraction and selection,
graph node classification with a deep GCN, and pixel-level evaluation.
"""

__version__ = "0.1.0"
