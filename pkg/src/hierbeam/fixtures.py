"""The 10-beam evaluation scenario and a matching synthetic codebook."""
from __future__ import annotations

import numpy as np

from .codebook import CodebookTree, GainModel, Region

EDGES = [(1, 2), (1, 3), (1, 4), (2, 7), (2, 9), (3, 5), (3, 6), (4, 8), (4, 10)]

# arrival rates and loads are only given up to a multiplicative constant
BASE_LAMBDA = np.array([0.16, 0.09, 0.12, 0.09, 0.10, 0.10, 0.10, 0.10, 0.09, 0.09])
BASE_RHO = np.array([0.11, 0.20, 0.31, 0.20, 0.59, 0.59, 0.61, 0.61, 0.18, 0.18])
MEAN_FLOW_SIZE_BITS = 8e6

# Boxes: three depth-1 beams side by side leaving gaps covered only by the
# root, each split into two depth-2 beams on opposite corners.
_BOXES = {
    1: (0, 30, 0, 10),
    2: (1, 9, 1, 9), 3: (11, 19, 1, 9), 4: (21, 29, 1, 9),
    7: (1, 5, 1, 5), 9: (5, 9, 5, 9),
    5: (11, 15, 1, 5), 6: (15, 19, 5, 9),
    8: (21, 25, 1, 5), 10: (25, 29, 5, 9),
}
_GAIN_BY_DEPTH = (1e-10, 1e-9, 1e-8)
NOISE_POWER = 1e-12
BANDWIDTH = 1e6


def reference_tree(with_regions: bool = True) -> CodebookTree:
    regions = {k: Region(*b) for k, b in _BOXES.items()} if with_regions else None
    return CodebookTree.from_edges(EDGES, regions=regions)


def reference_codebook() -> tuple[CodebookTree, GainModel]:
    tree = reference_tree()
    gains = np.array([_GAIN_BY_DEPTH[d] for d in tree.depth])
    return tree, GainModel(gains, NOISE_POWER, BANDWIDTH)


def reference_traffic(factor: float = 1.0):
    """Traffic with ``r = lambda / rho`` at factor 1, arrivals scaled by ``factor``."""
    from .elastic import TrafficModel
    r = BASE_LAMBDA / BASE_RHO
    return TrafficModel(BASE_LAMBDA * factor, r)
