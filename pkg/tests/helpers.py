"""Random tiny scenes shared by the metric tests."""

import numpy as np

from handforge.metrics import Detection, GroundTruth


def rect(h, w, y0, y1, x0, x1):
    m = np.zeros((h, w), bool)
    m[y0:y1, x0:x1] = True
    return m


def random_rect(rng, h, w):
    y0 = rng.integers(0, h)
    x0 = rng.integers(0, w)
    return rect(h, w, y0, rng.integers(y0 + 1, h + 1), x0, rng.integers(x0 + 1, w + 1))


def random_scene(rng, image_id=0, h=6, w=6, max_dets=3, max_gts=3):
    """1..max_gts rectangles; detections are mostly shifted copies of them."""
    gts = [GroundTruth(image_id, random_rect(rng, h, w)) for _ in range(rng.integers(1, max_gts + 1))]
    dets = []
    for _ in range(rng.integers(0, max_dets + 1)):
        if rng.random() < 0.6:
            m = np.roll(gts[rng.integers(len(gts))].mask, rng.integers(-1, 2), axis=int(rng.integers(2)))
        else:
            m = random_rect(rng, h, w)
        # a small score alphabet so ties occur
        dets.append(Detection(image_id, float(rng.choice([0.5, 0.7, 0.9, rng.random()])), mask=m))
    return dets, gts
