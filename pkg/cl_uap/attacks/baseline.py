"""
Image-centric baseline attacks.

The clean prediction of each (image, prompt) pair is computed once and
frozen as ground truth. The perturbation is then optimized to remove the
mask: formerly-masked logits are pushed below ``target_logit`` by a squared
hinge. The image-dependent attack uses a single image; the image-agnostic
attack visits a shuffled training corpus round-robin, one image per step.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from cl_uap.attacks.projected import LossTrace, ProjectedAdam, init_uap
from cl_uap.config import BaselineConfig
from cl_uap.core.errors import ConfigurationError, ContractError
from cl_uap.core.ops import binarize_mask, clamp_pixels
from cl_uap.core.prompts import make_generator, sample_prompts
from cl_uap.core.types import Prompt, Uap
from cl_uap.data.corpus import ImageSource
from cl_uap.encoders.base import BaseSegmenter, embed

logger = logging.getLogger(__name__)

BASELINE_TRACE_COLUMNS = ("loss", "linf")


class RemovalLoss(NamedTuple):
    """Mask removal loss value and whether the clean mask was empty."""

    value: torch.Tensor
    empty_mask: bool


def mask_removal_loss(
    adv_logits: torch.Tensor,
    clean_mask: torch.Tensor,
    target_logit: float = -10.0,
) -> RemovalLoss:
    """
    Mean over clean-mask pixels of ``max(adv_logits - target_logit, 0) ** 2``.

    Args:
        adv_logits: [H, W] logits on the adversarial image.
        clean_mask: [H, W] frozen clean mask.
        target_logit: Level at which a pixel counts as removed.

    Returns:
        RemovalLoss; an empty clean mask gives value 0 with ``empty_mask=True``.

    Raises:
        ContractError: If shapes differ.
    """
    if tuple(adv_logits.shape) != tuple(clean_mask.shape):
        raise ContractError(
            f"Logit shape {tuple(adv_logits.shape)} does not match mask shape {tuple(clean_mask.shape)}"
        )
    mask = clean_mask.to(torch.bool)
    if not bool(mask.any()):
        return RemovalLoss(value=(adv_logits * 0.0).sum(), empty_mask=True)
    excess = F.relu(adv_logits[mask] - target_logit)
    return RemovalLoss(value=(excess ** 2).mean(), empty_mask=False)


@dataclass
class _Target:
    """One frozen (image, prompts) training target."""

    image: torch.Tensor
    prompts: List[Prompt]
    clean_masks: List[torch.Tensor]
    clean_embedding: Optional[torch.Tensor] = None


class CleanMaskCache:
    """
    Clean masks keyed by (image key, prompt), computed on first request.

    Attributes:
        segmenter: Segmenter producing the masks.
    """

    def __init__(self, segmenter: BaseSegmenter):
        self.segmenter = segmenter
        self._masks: Dict[Tuple[str, Prompt], torch.Tensor] = {}
        self._embeddings: Dict[str, torch.Tensor] = {}

    def mask(self, key: str, image: torch.Tensor, prompt: Prompt, store: bool = True) -> torch.Tensor:
        """
        Clean mask of one (image, prompt) pair.

        With ``store=False`` a missing mask is computed but not kept; used for
        prompts that are never drawn again.
        """
        cache_key = (key, prompt)
        if cache_key in self._masks:
            return self._masks[cache_key]
        with torch.no_grad():
            mask = binarize_mask(self.segmenter.predict_mask(image, prompt))
        if store:
            self._masks[cache_key] = mask
        return mask

    def embedding(self, key: str, image: torch.Tensor) -> torch.Tensor:
        if key not in self._embeddings:
            with torch.no_grad():
                self._embeddings[key] = embed(self.segmenter.encoder.encode(image))
        return self._embeddings[key]

    def clear(self) -> None:
        self._masks.clear()
        self._embeddings.clear()

    def __len__(self) -> int:
        return len(self._masks)


def _removal_objective(
    segmenter: BaseSegmenter,
    v: torch.Tensor,
    target: _Target,
    config: BaselineConfig,
) -> Tuple[torch.Tensor, int]:
    adversarial = clamp_pixels(target.image + v)
    if config.loss_path == "features":
        adv_embedding = embed(segmenter.encoder.encode(adversarial))
        return adv_embedding @ target.clean_embedding, 0

    terms = []
    empty = 0
    features = segmenter.encoder.encode(adversarial)
    for prompt, clean_mask in zip(target.prompts, target.clean_masks):
        removal = mask_removal_loss(segmenter.decode(features, prompt), clean_mask, config.target_logit)
        terms.append(removal.value)
        empty += int(removal.empty_mask)
    return torch.stack(terms).mean(), empty


def _run_removal_attack(
    segmenter: BaseSegmenter,
    config: BaselineConfig,
    next_target: Callable[[int], _Target],
    trace: LossTrace,
    initial: Optional[Uap],
) -> ProjectedAdam:
    encoder = segmenter.encoder
    shape = tuple(segmenter.input_shape)
    if initial is None:
        initial = init_uap(shape, config.epsilon, config.init, config.seed, dtype=encoder.dtype)
    initial.check_shape(shape)

    opt = ProjectedAdam(
        initial.data.to(device=encoder.device, dtype=encoder.dtype),
        epsilon=config.epsilon,
        lr=config.lr,
        betas=config.adam_betas,
    )
    warned_empty = False
    for iteration in range(config.steps):
        target = next_target(iteration)
        opt.zero_grad()
        loss, empty = _removal_objective(segmenter, opt.v, target, config)
        if empty and not warned_empty:
            logger.warning(f"Empty clean mask at iteration {iteration}; its loss term is zero")
            warned_empty = True
        value = opt.step(loss, iteration)
        trace.record(iteration, loss=value, linf=opt.linf)
        if config.log_every and (iteration % config.log_every == 0 or iteration == config.steps - 1):
            logger.info(f"[baseline] step {iteration}/{config.steps} loss={value:.4f}")
    return opt


def _meta(config: BaselineConfig, mode: str, n_images: int, trace: LossTrace) -> Dict[str, str]:
    return {
        "method": "baseline",
        "mode": mode,
        "loss_path": config.loss_path,
        "seed": str(config.seed),
        "config_hash": config.config_hash(),
        "config": json.dumps(config.to_dict(), sort_keys=True),
        "train_images": str(n_images),
        "final_loss": repr(trace.final_loss),
    }


def attack_image_dependent(
    segmenter: BaseSegmenter,
    image: torch.Tensor,
    prompts: Optional[Sequence[Prompt]],
    config: BaselineConfig,
    trace: Optional[LossTrace] = None,
    initial: Optional[Uap] = None,
) -> Uap:
    """
    Optimize a perturbation that removes the masks of one image.

    Args:
        segmenter: Frozen segmenter.
        image: [H, W, C] training image.
        prompts: Prompts to attack; None draws ``prompts_per_image`` uniform
            points from a generator seeded with ``seed + 1``.
        config: Attack configuration.
        trace: Optional LossTrace filled with one row per step.
        initial: Optional starting perturbation.

    Raises:
        ContractError: Out-of-bounds prompts.
        DivergenceError: Non-finite loss.
    """
    config.validate()
    height, width = segmenter.input_shape[0], segmenter.input_shape[1]
    image = image.to(device=segmenter.encoder.device, dtype=segmenter.encoder.dtype)
    if prompts is None:
        prompts = sample_prompts("point", config.prompts_per_image, height, width, make_generator(config.seed + 1))
    prompts = list(prompts)
    if not prompts:
        raise ContractError("attack_image_dependent needs at least one prompt")
    for prompt in prompts:
        prompt.validate(height, width)

    cache = CleanMaskCache(segmenter)
    target = _Target(
        image=image,
        prompts=prompts,
        clean_masks=[cache.mask("image", image, p) for p in prompts],
        clean_embedding=cache.embedding("image", image) if config.loss_path == "features" else None,
    )
    trace = trace if trace is not None else LossTrace(columns=BASELINE_TRACE_COLUMNS)
    logger.info(f"Image-dependent attack: steps={config.steps}, prompts={len(prompts)}, loss={config.loss_path}")

    opt = _run_removal_attack(segmenter, config, lambda _: target, trace, initial)
    return opt.result(_meta(config, "image_dependent", 1, trace))


def attack_image_agnostic(
    segmenter: BaseSegmenter,
    train_corpus: ImageSource,
    config: BaselineConfig,
    trace: Optional[LossTrace] = None,
    initial: Optional[Uap] = None,
) -> Uap:
    """
    Optimize one perturbation over a training corpus, one image per step.

    The corpus is shuffled once with a generator seeded with ``seed`` and
    visited round-robin. Prompts come from a generator seeded with
    ``seed + 1``: fresh on every visit when ``resample_prompts`` is true,
    otherwise drawn at the first visit and reused. Clean masks of reused
    prompts are cached per (image, prompt); resampled ones are not kept.

    A single-image corpus ignores ``resample_prompts`` and follows the
    image-dependent schedule, so both attacks give the same perturbation
    for the same seed.

    Raises:
        ConfigurationError: Empty corpus.
        DivergenceError: Non-finite loss.
    """
    config.validate()
    n_images = len(train_corpus)
    if n_images == 0:
        raise ConfigurationError("Training corpus is empty")
    if n_images == 1:
        logger.warning("Image-agnostic attack on a single image degenerates to the image-dependent attack")
    resample = config.resample_prompts and n_images > 1

    encoder = segmenter.encoder
    height, width = segmenter.input_shape[0], segmenter.input_shape[1]
    order = torch.randperm(n_images, generator=make_generator(config.seed)).tolist()
    prompt_rng = make_generator(config.seed + 1)
    ids = train_corpus.ids
    fixed_prompts: Dict[int, List[Prompt]] = {}
    cache = CleanMaskCache(segmenter)

    def next_target(iteration: int) -> _Target:
        index = order[iteration % n_images]
        image = train_corpus[index].to(device=encoder.device, dtype=encoder.dtype)
        if resample or index not in fixed_prompts:
            fixed_prompts[index] = sample_prompts(
                "point", config.prompts_per_image, height, width, prompt_rng
            )
        prompts = fixed_prompts[index]
        key = ids[index]
        return _Target(
            image=image,
            prompts=prompts,
            clean_masks=[cache.mask(key, image, p, store=not resample) for p in prompts],
            clean_embedding=cache.embedding(key, image) if config.loss_path == "features" else None,
        )

    trace = trace if trace is not None else LossTrace(columns=BASELINE_TRACE_COLUMNS)
    logger.info(
        f"Image-agnostic attack: steps={config.steps}, images={n_images}, "
        f"resample_prompts={resample}, loss={config.loss_path}"
    )
    opt = _run_removal_attack(segmenter, config, next_target, trace, initial)
    return opt.result(_meta(config, "image_agnostic", n_images, trace))
