"""Lane-graph spatial occupancy prediction toolkit.

Library + CLI covering the full pipeline: procedural scenario generation,
lane-path roll-out and cell labeling, three occupancy predictors (UKF
forward propagation, a path-mixture baseline, and a learned fusion
network), and occupancy-grid likelihood / multimodality evaluation.
"""

__version__ = "0.1.0"
