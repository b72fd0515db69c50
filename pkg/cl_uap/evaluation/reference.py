"""
Full-scale reference numbers.

mIoU percentages (and cosine similarities) measured with a ViT SAM image
encoder and 100 natural test images at 1024x1024. They are reporting aids
for full-scale runs only; nothing in the attacks or the evaluation reads
them, and the toy segmenter is not expected to match them.
"""

from __future__ import annotations

import math
from typing import Dict, Mapping

# Image-centric attack versus uniform noise at epsilon = 10/255
IMAGE_CENTRIC_MIOU = {
    "uniform_noise": 86.97,
    "image_dependent": 0.0,
    "image_agnostic": 59.50,
}

# Contrastive training with a single augmentation kind
AUGMENTATION_MIOU = {
    "crop_resize": 85.11,
    "cutout": 75.48,
    "uniform_noise": 81.14,
    "color_shift": 61.64,
    "add_image": 15.01,
}

NEGATIVES_MIOU = {1: 38.91, 2: 30.71, 5: 24.83, 10: 19.88, 20: 17.63, 50: 15.92, 100: 15.01}

TEMPERATURE_MIOU = {0.005: 64.61, 0.01: 60.58, 0.05: 22.78, 0.1: 15.01, 0.5: 13.28, 1.0: 13.48}

# Only the best cell of the weight sweep is on record
BEST_WEIGHT = 1.2
BEST_WEIGHT_MIOU = 14.21
WEIGHT_MIOU = {BEST_WEIGHT: BEST_WEIGHT_MIOU}

COSINE_SIMILARITY = {
    "positive": 0.87,
    "negative": 0.34,
    "adv_clean": 0.40,
    "random": 0.55,
}

SWEEP_REFERENCES: Dict[str, Mapping] = {
    "augmentation": AUGMENTATION_MIOU,
    "weight": WEIGHT_MIOU,
    "temperature": TEMPERATURE_MIOU,
    "negatives": NEGATIVES_MIOU,
}


def _key(kind: str, setting: str):
    if kind == "augmentation":
        return setting
    if kind == "negatives":
        return int(setting)
    return float(setting)


def reference_deltas(kind: str, table: Mapping[str, float]) -> Dict[str, float]:
    """
    Difference (measured - reference) for every setting that has a reference.

    Args:
        kind: Sweep kind.
        table: Setting label to measured mIoU, as from ``SweepResult.table()``.

    Returns:
        Setting label to delta in mIoU points; settings without a reference
        and NaN (failed) cells are left out.

    Examples:
        >>> reference_deltas("negatives", {"1": 38.91, "3": 30.0})
        {'1': 0.0}
    """
    references = SWEEP_REFERENCES.get(kind, {})
    deltas = {}
    for setting, measured in table.items():
        try:
            key = _key(kind, setting)
        except ValueError:
            continue
        if key in references and not math.isnan(measured):
            deltas[setting] = measured - references[key]
    return deltas
