"""
CL-UAP - Universal adversarial perturbations against prompt-guided segmenters.

This package provides a modular toolkit for:
- Generating image-agnostic perturbations by contrastive (InfoNCE) optimization
- Running the image-centric baseline attacks for comparison
- Evaluating perturbations with the clean-vs-adversarial mIoU protocol,
  ablation sweeps, cosine diagnostics and qualitative overlays
"""

__version__ = "0.1.0"
