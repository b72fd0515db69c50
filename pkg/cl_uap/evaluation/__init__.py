"""
Measurement battery for trained perturbations.

- miou: clean-versus-adversarial mIoU and the uniform-noise control
- analysis: cosine similarity diagnostics
- overlays: qualitative panels
- sweeps: ablation grids over the contrastive configuration
- reference: full-scale reference numbers
"""

from cl_uap.evaluation.analysis import CosineReport, cosine_analysis
from cl_uap.evaluation.miou import (
    REPORT_COLUMNS,
    EvalReport,
    PromptResult,
    evaluate_uap,
    random_noise_baseline,
    uniform_noise_uap,
)
from cl_uap.evaluation.overlays import OverlayPanel, emit_overlays
from cl_uap.evaluation.reference import reference_deltas
from cl_uap.evaluation.sweeps import (
    PRESET_GRIDS,
    SWEEP_COLUMNS,
    SWEEP_KINDS,
    SweepCell,
    SweepResult,
    SweepRunner,
    apply_setting,
    format_setting,
    parse_grid,
    sweep,
)

__all__ = [
    "CosineReport",
    "cosine_analysis",
    "REPORT_COLUMNS",
    "EvalReport",
    "PromptResult",
    "evaluate_uap",
    "random_noise_baseline",
    "uniform_noise_uap",
    "OverlayPanel",
    "emit_overlays",
    "reference_deltas",
    "PRESET_GRIDS",
    "SWEEP_COLUMNS",
    "SWEEP_KINDS",
    "SweepCell",
    "SweepResult",
    "SweepRunner",
    "apply_setting",
    "format_setting",
    "parse_grid",
    "sweep",
]
