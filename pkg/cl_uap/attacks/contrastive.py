"""
Perturbation-centric UAP training with InfoNCE.

Each step feeds the raw perturbation v to the encoder as the anchor, an
augmented copy of v as the positive and rows of the frozen memory bank as
negatives, takes one Adam step on the InfoNCE loss and projects v back into
the epsilon-ball.
"""

from __future__ import annotations

import json
import logging
from typing import Optional, Sequence, Union

import torch

from cl_uap.attacks.projected import LossTrace, ProjectedAdam, init_uap
from cl_uap.augment import apply_augmentation
from cl_uap.config import CLConfig
from cl_uap.core.errors import ConfigurationError, ContractError, DivergenceError, InvalidValueError
from cl_uap.core.ops import is_normalized
from cl_uap.core.prompts import make_generator
from cl_uap.core.types import Uap
from cl_uap.data.corpus import ImageSource
from cl_uap.encoders.base import BaseEncoder, embed
from cl_uap.membank.bank import MemoryBank, sample_negatives

logger = logging.getLogger(__name__)

CL_TRACE_COLUMNS = ("loss", "pos_similarity", "neg_similarity_mean", "linf")


def infonce_loss(
    q: torch.Tensor,
    k_pos: torch.Tensor,
    k_negs: Union[torch.Tensor, Sequence[torch.Tensor]],
    tau: float,
) -> torch.Tensor:
    """
    InfoNCE loss of one anchor against one positive and K negatives.

    ``-log(exp(q.k+/tau) / (exp(q.k+/tau) + sum_i exp(q.k-_i/tau)))``,
    evaluated with the maximum logit subtracted before exponentiation.

    Args:
        q: Unit-norm anchor embedding [D].
        k_pos: Unit-norm positive embedding [D].
        k_negs: [K, D] tensor or sequence of unit-norm negatives.
        tau: Temperature.

    Returns:
        Scalar tensor, differentiable in q and k_pos.

    Raises:
        ContractError: Empty negatives, tau <= 0, or unnormalized inputs.

    Examples:
        >>> e1, e2 = torch.eye(2, dtype=torch.float64)
        >>> round(float(infonce_loss(e1, e1, [e2], 1.0)), 6)  # log(1 + 1/e)
        0.313262
    """
    if not tau > 0:
        raise ContractError(f"tau must be positive, got {tau}")
    if isinstance(k_negs, torch.Tensor):
        negatives = k_negs if k_negs.dim() == 2 else k_negs.unsqueeze(0)
    else:
        if len(k_negs) == 0:
            raise ContractError("infonce_loss needs at least one negative")
        negatives = torch.stack(list(k_negs))
    if negatives.shape[0] == 0:
        raise ContractError("infonce_loss needs at least one negative")

    if not (is_normalized(q) and is_normalized(k_pos)):
        raise ContractError("infonce_loss requires unit-norm anchor and positive")
    neg_norms = torch.linalg.vector_norm(negatives.detach().to(torch.float64), dim=1)
    if bool(((neg_norms - 1.0).abs() > 1e-6).any()):
        raise ContractError("infonce_loss requires unit-norm negatives")

    negatives = negatives.to(device=q.device, dtype=q.dtype)
    k_pos = k_pos.to(device=q.device, dtype=q.dtype)
    logits = torch.cat([(q @ k_pos).reshape(1), negatives @ q]) / tau
    shift = logits.max().detach()
    log_denominator = shift + torch.log(torch.exp(logits - shift).sum())
    return log_denominator - logits[0]


def train_uap_cl(
    encoder: BaseEncoder,
    aug_corpus: Optional[ImageSource],
    bank: MemoryBank,
    config: CLConfig,
    trace: Optional[LossTrace] = None,
    initial: Optional[Uap] = None,
) -> Uap:
    """
    Train a universal perturbation with the contrastive objective.

    Args:
        encoder: Frozen encoder.
        aug_corpus: Natural images for the add_image augmentation.
        bank: Memory bank built with the same encoder.
        config: Training configuration.
        trace: Optional LossTrace filled with one row per step.
        initial: Optional starting perturbation; defaults to ``init_uap``.

    Returns:
        The final perturbation, with the full configuration in its meta.

    Raises:
        ConfigurationError: Invalid config, bank/encoder mismatch or empty corpus.
        DivergenceError: Non-finite loss, with the iteration index.
    """
    config.validate()
    bank.check_fingerprint(encoder)
    if aug_corpus is None or len(aug_corpus) == 0:
        raise ConfigurationError("Augmentation corpus is empty")
    if config.K > bank.M:
        raise ConfigurationError(f"K={config.K} exceeds memory bank size M={bank.M}")

    shape = tuple(encoder.input_shape)
    augment = config.effective_augment()
    augment.validate(shape)

    if initial is None:
        initial = init_uap(shape, config.epsilon, config.init, config.seed, dtype=encoder.dtype)
    initial.check_shape(shape)

    trace = trace if trace is not None else LossTrace(columns=CL_TRACE_COLUMNS)
    rng = make_generator(config.seed)
    opt = ProjectedAdam(
        initial.data.to(device=encoder.device, dtype=encoder.dtype),
        epsilon=config.epsilon,
        lr=config.lr,
        betas=config.adam_betas,
    )

    logger.info(
        f"Training CL-UAP: steps={config.steps}, tau={config.tau}, K={config.K}, "
        f"augment={augment.kind}, M={bank.M}"
    )

    for iteration in range(config.steps):
        opt.zero_grad()
        try:
            q = embed(encoder.encode(opt.v))
            positive = apply_augmentation(augment, opt.v, rng, aug_corpus)
            if config.detach_positive:
                positive = positive.detach()
            k_pos = embed(encoder.encode(positive))
        except InvalidValueError as e:
            raise DivergenceError(iteration, str(e)) from e
        negatives = sample_negatives(bank, config.K, rng).to(device=q.device, dtype=q.dtype)

        loss = infonce_loss(q, k_pos, negatives, config.tau)
        with torch.no_grad():
            pos_similarity = float(q @ k_pos)
            neg_similarity = float((negatives @ q).mean())

        value = opt.step(loss, iteration)
        trace.record(
            iteration,
            loss=value,
            pos_similarity=pos_similarity,
            neg_similarity_mean=neg_similarity,
            linf=opt.linf,
        )

        if config.log_every and (iteration % config.log_every == 0 or iteration == config.steps - 1):
            logger.info(
                f"[cl] step {iteration}/{config.steps} loss={value:.4f} "
                f"q.k+={pos_similarity:.3f} mean q.k-={neg_similarity:.3f}"
            )

    meta = {
        "method": "cl",
        "seed": str(config.seed),
        "config_hash": config.config_hash(),
        "config": json.dumps(config.to_dict(), sort_keys=True),
        "augment": augment.kind,
        "tau": repr(config.tau),
        "K": str(config.K),
        "M": str(bank.M),
        "anchor_input": "raw",
        "detach_positive": str(config.detach_positive).lower(),
        "encoder_fingerprint": encoder.fingerprint(),
        "final_loss": repr(trace.final_loss),
    }
    uap = opt.result(meta)
    logger.info(f"CL-UAP done: final loss={trace.final_loss:.4f}, max|v|={uap.linf:.6f}")
    return uap
