"""
Clean-versus-adversarial mIoU protocol.

For every test image and sampled prompt the segmenter predicts a mask on
the clean image and on the perturbed image; the report averages the IoU of
the two masks and gives it in percent.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import torch

from cl_uap.config import EvalConfig
from cl_uap.core.errors import ConfigurationError
from cl_uap.core.ops import binarize_mask, clamp_pixels, iou, linf_project
from cl_uap.core.prompts import make_generator, sample_prompts
from cl_uap.core.types import Prompt, Uap
from cl_uap.data.corpus import ImageSource, check_disjoint
from cl_uap.encoders.base import BaseSegmenter

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("image_id", "prompt_kind", "row", "col", "iou")


@dataclass
class PromptResult:
    """
    IoU of one (image, prompt) pair.

    Attributes:
        image_id: Corpus identifier of the image.
        prompt: Prompt used for both passes.
        iou: IoU of clean and adversarial masks, in [0, 1].
        clean_area: Pixels in the clean mask.
        adv_area: Pixels in the adversarial mask.
    """

    image_id: str
    prompt: Prompt
    iou: float
    clean_area: int = 0
    adv_area: int = 0


@dataclass
class EvalReport:
    """
    Result of one evaluation run.

    Attributes:
        miou: Mean IoU in percent.
        per_image: One entry per (image, prompt) pair, in corpus order.
        config_hash: Hash of the EvalConfig used.
        uap_meta: Metadata of the evaluated perturbation.
        eval_config: The EvalConfig as a dictionary.
    """

    miou: float
    per_image: List[PromptResult] = field(default_factory=list)
    config_hash: str = ""
    uap_meta: Dict[str, str] = field(default_factory=dict)
    eval_config: Dict = field(default_factory=dict)

    @property
    def miou_rounded(self) -> float:
        """mIoU to two decimals, as reported in tables."""
        return round(self.miou, 2)

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write ``image_id,prompt_kind,row,col,iou`` rows; box rows carry the top-left corner."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for result in self.per_image:
                row, col = result.prompt.anchor
                writer.writerow([result.image_id, result.prompt.kind, row, col, repr(result.iou)])
        return path

    def to_dict(self) -> dict:
        """Summary dictionary (without per-image rows)."""
        return {
            "miou": self.miou,
            "miou_rounded": self.miou_rounded,
            "n_pairs": len(self.per_image),
            "config_hash": self.config_hash,
            "eval_config": self.eval_config,
            "uap_meta": self.uap_meta,
        }

    def save_summary(self, path: Union[str, Path]) -> Path:
        """Write ``to_dict`` as JSON."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        return path


def _train_identities(uap: Uap) -> Dict[str, List[str]]:
    raw = uap.meta.get("train_identities")
    if not raw:
        return {}
    try:
        return {"training": list(json.loads(raw))}
    except (TypeError, ValueError):
        logger.warning("Ignoring unreadable train_identities in UAP meta")
        return {}


def _evaluate_image(
    segmenter: BaseSegmenter,
    image: torch.Tensor,
    image_id: str,
    prompts: Sequence[Prompt],
    v: torch.Tensor,
    clamp_adv: bool,
) -> List[PromptResult]:
    encoder = segmenter.encoder
    with torch.no_grad():
        adversarial = image + v
        if clamp_adv:
            adversarial = clamp_pixels(adversarial)
        clean_features = encoder.encode(image)
        adv_features = encoder.encode(adversarial)
        results = []
        for prompt in prompts:
            prompt.validate(image.shape[0], image.shape[1])
            clean = binarize_mask(segmenter.decode(clean_features, prompt))
            adv = binarize_mask(segmenter.decode(adv_features, prompt))
            results.append(
                PromptResult(
                    image_id=image_id,
                    prompt=prompt,
                    iou=iou(clean, adv),
                    clean_area=int(clean.sum()),
                    adv_area=int(adv.sum()),
                )
            )
    return results


def evaluate_uap(
    segmenter: BaseSegmenter,
    uap: Uap,
    test_corpus: ImageSource,
    config: EvalConfig,
    exclude: Optional[Dict[str, Sequence[str]]] = None,
) -> EvalReport:
    """
    Measure how far a perturbation moves the segmenter's masks.

    Prompts are drawn sequentially from a generator seeded with
    ``config.seed``, then images are evaluated (optionally on a thread
    pool); the report keeps corpus order.

    Args:
        segmenter: Frozen segmenter.
        uap: Perturbation to evaluate.
        test_corpus: Held-out images; the first ``n_images`` are used.
        config: Evaluation protocol.
        exclude: Role name to image identities the test corpus must not share.
            Identities recorded under ``train_identities`` in the UAP meta are
            always checked.

    Returns:
        An EvalReport.

    Raises:
        ContractError: UAP shape differs from the segmenter input shape.
        ConfigurationError: Test corpus overlaps training or bank images.
    """
    config.validate()
    uap.check_shape(tuple(segmenter.input_shape))
    if len(test_corpus) == 0:
        raise ConfigurationError("Test corpus is empty")

    forbidden = dict(exclude or {})
    forbidden.update(_train_identities(uap))
    if forbidden:
        check_disjoint(test_corpus, forbidden)

    n_images = min(config.n_images, len(test_corpus))
    if n_images < config.n_images:
        logger.warning(f"Test corpus has {len(test_corpus)} images, fewer than n_images={config.n_images}")

    encoder = segmenter.encoder
    height, width = segmenter.input_shape[0], segmenter.input_shape[1]
    v = uap.data.to(device=encoder.device, dtype=encoder.dtype)
    ids = test_corpus.ids
    rng = make_generator(config.seed)

    jobs = []
    for index in range(n_images):
        image = test_corpus[index].to(device=encoder.device, dtype=encoder.dtype)
        prompts = sample_prompts(
            config.prompt_kind,
            config.prompts_per_image,
            height,
            width,
            rng,
            point_sampling=config.point_sampling,
            segmenter=segmenter,
            image=image,
        )
        jobs.append((image, ids[index], prompts))

    def run(job):
        image, image_id, prompts = job
        return _evaluate_image(segmenter, image, image_id, prompts, v, config.clamp_adv)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            batches = list(pool.map(run, jobs))
    else:
        batches = [run(job) for job in jobs]

    per_image = [result for batch in batches for result in batch]
    miou = math.fsum(r.iou for r in per_image) / len(per_image) * 100.0

    report = EvalReport(
        miou=miou,
        per_image=per_image,
        config_hash=config.config_hash(),
        uap_meta=dict(uap.meta),
        eval_config=config.to_dict(),
    )
    logger.info(f"mIoU = {report.miou_rounded:.2f}% over {len(per_image)} pairs ({n_images} images)")
    return report


def uniform_noise_uap(
    shape: Sequence[int],
    epsilon: float,
    seed: int,
    dtype: torch.dtype = torch.float32,
) -> Uap:
    """One Uniform(-epsilon, epsilon) draw as a Uap (all zeros when epsilon is 0)."""
    shape = tuple(int(s) for s in shape)
    if epsilon == 0:
        data = torch.zeros(shape, dtype=dtype)
    else:
        draw = torch.rand(shape, generator=make_generator(seed), dtype=torch.float64)
        data = linf_project(((2.0 * draw - 1.0) * epsilon).to(dtype), epsilon)
    return Uap(data=data, epsilon=epsilon, meta={"method": "uniform_noise", "seed": str(seed)})


def random_noise_baseline(
    segmenter: BaseSegmenter,
    test_corpus: ImageSource,
    config: EvalConfig,
    epsilon: float,
    seed: int,
    exclude: Optional[Dict[str, Sequence[str]]] = None,
) -> EvalReport:
    """
    Evaluate a single uniform-noise perturbation as the control row.

    Raises:
        ConfigurationError: Negative epsilon, or the errors of ``evaluate_uap``.
    """
    if epsilon < 0:
        raise ConfigurationError(f"epsilon must be non-negative, got {epsilon}")
    noise = uniform_noise_uap(segmenter.input_shape, epsilon, seed, dtype=segmenter.encoder.dtype)
    logger.info(f"Uniform noise baseline: epsilon={epsilon:.6f}, seed={seed}")
    return evaluate_uap(segmenter, noise, test_corpus, config, exclude=exclude)
