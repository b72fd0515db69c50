"""
Qualitative overlay panels.

Each panel shows, left to right: the clean image with the prompt, the
adversarial image with the prompt, the clean mask and the adversarial mask.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import torch

from cl_uap.core.errors import ContractError
from cl_uap.core.ops import binarize_mask, clamp_pixels
from cl_uap.core.types import Prompt, Uap
from cl_uap.encoders.base import BaseSegmenter
from cl_uap.evaluation.plotting import pyplot

logger = logging.getLogger(__name__)

PANEL_TITLES = ("clean + prompt", "adversarial + prompt", "clean mask", "adversarial mask")


@dataclass
class OverlayPanel:
    """
    One written panel.

    Attributes:
        path: PNG file.
        image_id: Image identifier.
        prompt: Prompt drawn on the panel.
        clean_mask: Boolean clean mask.
        adv_mask: Boolean adversarial mask.
    """

    path: Path
    image_id: str
    prompt: Prompt
    clean_mask: torch.Tensor
    adv_mask: torch.Tensor

    @property
    def clean_area(self) -> int:
        return int(self.clean_mask.sum())

    @property
    def adv_area(self) -> int:
        return int(self.adv_mask.sum())


def _draw_prompt(axis, prompt: Prompt) -> None:
    if prompt.kind == "point":
        row, col = prompt.point
        axis.plot([col], [row], marker="*", color="lime", markersize=12, markeredgecolor="black")
    else:
        from matplotlib.patches import Rectangle

        r0, c0, r1, c1 = prompt.box
        axis.add_patch(
            Rectangle((c0 - 0.5, r0 - 0.5), c1 - c0, r1 - r0, fill=False, edgecolor="lime", linewidth=2)
        )


def _to_display(image: torch.Tensor):
    array = image.detach().to("cpu", torch.float32).clamp(0.0, 1.0).numpy()
    return array[:, :, 0] if array.shape[2] == 1 else array[:, :, :3]


def _resolve_prompts(
    prompts: Union[Sequence[Prompt], Sequence[Sequence[Prompt]]], n_images: int
) -> List[List[Prompt]]:
    if prompts and isinstance(prompts[0], Prompt):
        return [list(prompts) for _ in range(n_images)]
    if len(prompts) != n_images:
        raise ContractError(f"Got prompt lists for {len(prompts)} images, expected {n_images}")
    return [list(p) for p in prompts]


def emit_overlays(
    segmenter: BaseSegmenter,
    uap: Uap,
    images: Sequence[torch.Tensor],
    prompts: Union[Sequence[Prompt], Sequence[Sequence[Prompt]]],
    out_dir: Union[str, Path],
    ids: Optional[Sequence[str]] = None,
    clamp_adv: bool = True,
) -> List[OverlayPanel]:
    """
    Write one four-column panel per (image, prompt).

    Files are named ``<image index>_<id stem>_<prompt kind><prompt index>.png``.

    Args:
        segmenter: Frozen segmenter.
        uap: Perturbation.
        images: Images (a list or an ImageSource).
        prompts: Prompts used for every image, or one list per image.
        out_dir: Output directory.
        ids: Optional image identifiers used in file names.
        clamp_adv: Clamp adversarial images to [0, 1].

    Returns:
        Panels in (image, prompt) order.

    Raises:
        ContractError: Invalid prompts.
        OSError: Unwritable output directory.
    """
    images = list(images)
    per_image_prompts = _resolve_prompts(prompts, len(images))
    ids = list(ids) if ids is not None else [f"image_{i:04d}" for i in range(len(images))]
    height, width = segmenter.input_shape[0], segmenter.input_shape[1]
    for image_prompts in per_image_prompts:
        for prompt in image_prompts:
            prompt.validate(height, width)

    plt = pyplot()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    encoder = segmenter.encoder
    v = uap.data.to(device=encoder.device, dtype=encoder.dtype)

    panels: List[OverlayPanel] = []
    for number, (image, image_id, image_prompts) in enumerate(zip(images, ids, per_image_prompts)):
        image = image.to(device=encoder.device, dtype=encoder.dtype)
        with torch.no_grad():
            adversarial = image + v
            if clamp_adv:
                adversarial = clamp_pixels(adversarial)
            clean_features = encoder.encode(image)
            adv_features = encoder.encode(adversarial)

        for index, prompt in enumerate(image_prompts):
            with torch.no_grad():
                clean_mask = binarize_mask(segmenter.decode(clean_features, prompt)).cpu()
                adv_mask = binarize_mask(segmenter.decode(adv_features, prompt)).cpu()

            fig, axes = plt.subplots(1, 4, figsize=(12, 3.2))
            try:
                axes[0].imshow(_to_display(image), cmap="gray")
                _draw_prompt(axes[0], prompt)
                axes[1].imshow(_to_display(adversarial), cmap="gray")
                _draw_prompt(axes[1], prompt)
                axes[2].imshow(clean_mask.float().numpy(), cmap="gray", vmin=0, vmax=1)
                axes[3].imshow(adv_mask.float().numpy(), cmap="gray", vmin=0, vmax=1)
                for axis, title in zip(axes, PANEL_TITLES):
                    axis.set_title(title)
                    axis.axis("off")
                fig.tight_layout()
                path = out / f"{number:04d}_{Path(image_id).stem}_{prompt.kind}{index:02d}.png"
                fig.savefig(path, dpi=100)
            finally:
                plt.close(fig)

            panels.append(OverlayPanel(path, image_id, prompt, clean_mask, adv_mask))

    logger.info(f"Wrote {len(panels)} overlay panels to {out}")
    return panels
