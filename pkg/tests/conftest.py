import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from driftbench.io_formats import DetectionSet, GroundTruthSet


def random_frame(rng: np.random.Generator, max_boxes=12, classes=2, size=64.0):
    """Random detections + ground truth for one frame."""
    n_det = int(rng.integers(0, max_boxes + 1))
    n_gt = int(rng.integers(0, max_boxes + 1))

    def boxes(n):
        x1 = rng.uniform(0, size * 0.8, n)
        y1 = rng.uniform(0, size * 0.8, n)
        w = rng.uniform(2.0, size * 0.3, n)
        h = rng.uniform(2.0, size * 0.3, n)
        return np.stack([x1, y1, x1 + w, y1 + h], axis=1)

    dets = DetectionSet(
        boxes(n_det), rng.integers(0, classes, n_det), rng.uniform(0.0, 1.0, n_det)
    )
    gts = GroundTruthSet(boxes(n_gt), rng.integers(0, classes, n_gt))
    return dets, gts


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
