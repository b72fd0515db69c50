"""
Tests for projected optimization, contrastive UAP training and the
image-centric baselines.
"""

import json
import math
from dataclasses import replace

import pytest
import torch

from cl_uap.attacks import (
    BASELINE_TRACE_COLUMNS,
    CL_TRACE_COLUMNS,
    LossTrace,
    ProjectedAdam,
    attack_image_agnostic,
    attack_image_dependent,
    infonce_loss,
    init_uap,
    mask_removal_loss,
    train_uap_cl,
)
from cl_uap.attacks.baseline import CleanMaskCache
from cl_uap.augment import AUGMENT_KINDS, AugmentSpec
from cl_uap.config import BaselineConfig, CLConfig
from cl_uap.core.errors import ConfigurationError, ContractError, DivergenceError
from cl_uap.core.ops import l2_normalize
from cl_uap.core.prompts import make_generator, sample_prompts
from cl_uap.core.types import DEFAULT_EPSILON, Prompt
from cl_uap.data.corpus import InMemoryCorpus
from cl_uap.encoders.toy import make_toy_segmenter
from tests.test_utils import gradient_check, infonce_oracle

BUDGET = DEFAULT_EPSILON + 1e-9


def _unit(generator, dim=16):
    return l2_normalize(torch.randn(dim, generator=generator, dtype=torch.float64))


@pytest.fixture
def recorded_caches(mocker):
    """Clean mask caches created by the baseline attacks, in creation order."""
    caches = []

    class RecordingCache(CleanMaskCache):
        def __init__(self, segmenter):
            super().__init__(segmenter)
            caches.append(self)

    mocker.patch("cl_uap.attacks.baseline.CleanMaskCache", RecordingCache)
    return caches


class TestInitAndTrace:
    """Tests for perturbation initialization and loss traces."""

    def test_zeros(self):
        """Zero init has the requested shape and no energy."""
        uap = init_uap((4, 4, 3), DEFAULT_EPSILON)
        assert uap.shape == (4, 4, 3)
        assert uap.linf == 0.0

    def test_uniform_within_budget(self):
        """Uniform init is seeded and inside the ball."""
        first = init_uap((8, 8, 3), DEFAULT_EPSILON, mode="uniform", seed=3)
        second = init_uap((8, 8, 3), DEFAULT_EPSILON, mode="uniform", seed=3)
        assert torch.equal(first.data, second.data)
        assert 0.0 < first.linf <= DEFAULT_EPSILON

    def test_unknown_mode(self):
        """Unknown init modes are refused."""
        with pytest.raises(ConfigurationError):
            init_uap((2, 2, 3), DEFAULT_EPSILON, mode="gaussian")

    def test_trace_csv(self, temp_dir):
        """Traces write a header and one row per iteration."""
        trace = LossTrace(columns=("loss", "linf"))
        trace.record(0, loss=2.0, linf=0.01)
        trace.record(1, loss=1.5, linf=0.02)
        path = trace.to_csv(temp_dir / "loss.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,loss,linf"
        assert lines[2] == "1,1.5,0.02"
        assert trace.initial_loss == 2.0
        assert trace.final_loss == 1.5

    def test_empty_trace(self):
        """An empty trace has NaN losses."""
        assert math.isnan(LossTrace().final_loss)


class TestProjectedAdam:
    """Tests for Adam followed by projection."""

    def test_projects_after_step(self):
        """A large learning rate still leaves v inside the ball."""
        opt = ProjectedAdam(torch.zeros(5), epsilon=0.1, lr=10.0)
        opt.zero_grad()
        opt.step(-opt.v.sum(), iteration=0)
        assert opt.linf <= 0.1
        assert torch.allclose(opt.v.detach(), torch.full((5,), 0.1))

    def test_projects_initial(self):
        """An over-budget initial tensor is projected on construction."""
        opt = ProjectedAdam(torch.full((3,), 5.0), epsilon=0.2, lr=0.1)
        assert opt.linf <= 0.2

    def test_nan_loss_diverges(self):
        """A NaN loss raises DivergenceError carrying the iteration."""
        opt = ProjectedAdam(torch.zeros(3), epsilon=0.1, lr=0.1)
        with pytest.raises(DivergenceError) as info:
            opt.step(opt.v.sum() * float("nan"), iteration=7)
        assert info.value.iteration == 7


class TestInfoNCE:
    """Tests for the InfoNCE loss."""

    def test_matches_high_precision_oracle(self):
        """1000 random instances agree with a 50-digit evaluation within 1e-9."""
        rng = make_generator(40)
        worst = 0.0
        for _ in range(1000):
            q = _unit(rng)
            k_pos = _unit(rng)
            negatives = torch.stack([_unit(rng) for _ in range(7)])
            tau = 0.05 + 0.95 * float(torch.rand(1, generator=rng, dtype=torch.float64))
            value = float(infonce_loss(q, k_pos, negatives, tau))
            expected = infonce_oracle(q.tolist(), k_pos.tolist(), negatives.tolist(), tau)
            worst = max(worst, abs(value - expected))
        assert worst < 1e-9

    def test_equal_similarities_give_log_two(self):
        """Positive and negative equally similar to q gives ln 2."""
        e1, e2, e3 = torch.eye(3, dtype=torch.float64)
        assert abs(float(infonce_loss(e1, e2, [e3], 0.1)) - math.log(2.0)) < 1e-12

    def test_orthogonal_negative(self):
        """q = k+ with an orthogonal negative at tau 1 gives ln(1 + 1/e)."""
        e1, e2 = torch.eye(2, dtype=torch.float64)
        assert abs(float(infonce_loss(e1, e1, [e2], 1.0)) - math.log(1.0 + math.exp(-1.0))) < 1e-12

    def test_small_tau_is_finite(self):
        """Max subtraction keeps tiny temperatures finite."""
        e1, e2 = torch.eye(2, dtype=torch.float64)
        value = float(infonce_loss(e1, e2, [e1], 1e-4))
        assert math.isfinite(value)
        assert abs(value - 1e4) < 1e-6

    def test_gradient_matches_finite_differences(self):
        """Gradients with respect to the raw anchor agree with central differences."""
        rng = make_generator(41)
        k_pos = _unit(rng)
        negatives = torch.stack([_unit(rng) for _ in range(7)])
        x = torch.randn(16, generator=rng, dtype=torch.float64)
        error = gradient_check(lambda z: infonce_loss(l2_normalize(z), k_pos, negatives, 0.1), x)
        assert error < 1e-3

    def test_loss_falls_as_positive_aligns(self):
        """Rotating the positive toward the anchor strictly lowers the loss."""
        e1, e2, e3 = torch.eye(3, dtype=torch.float64)
        losses = []
        for angle in torch.linspace(math.pi / 2, 0.0, 9, dtype=torch.float64):
            k_pos = torch.cos(angle) * e1 + torch.sin(angle) * e3
            losses.append(float(infonce_loss(e1, k_pos, [e2], 0.1)))
        assert all(later < earlier for earlier, later in zip(losses, losses[1:]))

    def test_contract_violations(self):
        """Empty negatives, non-positive tau and unnormalized inputs are refused."""
        e1, e2 = torch.eye(2, dtype=torch.float64)
        with pytest.raises(ContractError):
            infonce_loss(e1, e2, [], 0.1)
        with pytest.raises(ContractError):
            infonce_loss(e1, e2, [e2], 0.0)
        with pytest.raises(ContractError):
            infonce_loss(2 * e1, e2, [e2], 0.1)
        with pytest.raises(ContractError):
            infonce_loss(e1, e2, [3 * e2], 0.1)


class TestTrainUapCl:
    """Tests for contrastive UAP training."""

    def test_budget_and_trace(self, toy_segmenter, aug_corpus, small_bank, quick_cl_config):
        """Training respects the budget and records every step."""
        trace = LossTrace(columns=CL_TRACE_COLUMNS)
        uap = train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, quick_cl_config, trace=trace)
        assert uap.linf <= BUDGET
        assert uap.shape == (64, 64, 3)
        assert len(trace.rows) == quick_cl_config.steps
        assert all(math.isfinite(loss) for loss in trace.column("loss"))

    def test_bitwise_deterministic(self, toy_segmenter, aug_corpus, small_bank, quick_cl_config):
        """Same config, seed and corpus give an identical perturbation."""
        first = train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, quick_cl_config)
        second = train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, quick_cl_config)
        assert torch.equal(first.data, second.data)

    def test_seed_changes_result(self, toy_segmenter, aug_corpus, small_bank, quick_cl_config):
        """Different seeds draw different images and negatives."""
        other = replace(quick_cl_config, seed=1)
        first = train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, quick_cl_config)
        second = train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, other)
        assert not torch.equal(first.data, second.data)

    def test_meta(self, toy_segmenter, aug_corpus, small_bank, quick_cl_config):
        """Metadata records the method and full configuration."""
        uap = train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, quick_cl_config)
        assert uap.meta["method"] == "cl"
        assert uap.meta["anchor_input"] == "raw"
        assert uap.meta["config_hash"] == quick_cl_config.config_hash()
        assert CLConfig.from_dict(json.loads(uap.meta["config"])) == quick_cl_config

    def test_zero_learning_rate_keeps_initial(self, toy_segmenter, aug_corpus, small_bank):
        """One step at lr 0 returns the starting perturbation unchanged."""
        initial = init_uap((64, 64, 3), DEFAULT_EPSILON, mode="uniform", seed=5, dtype=toy_segmenter.encoder.dtype)
        config = CLConfig(K=2, steps=1, lr=0.0, log_every=0)
        uap = train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, config, initial=initial)
        assert torch.equal(uap.data, initial.data)

    def test_zero_learning_rate_from_zeros(self, toy_segmenter, aug_corpus, small_bank):
        """The default zero start stays zero at lr 0."""
        uap = train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, CLConfig(K=2, steps=1, lr=0.0, log_every=0))
        assert torch.equal(uap.data, torch.zeros_like(uap.data))

    def test_encoder_and_bank_untouched(self, toy_segmenter, aug_corpus, small_bank, quick_cl_config):
        """Training changes neither the encoder weights nor the bank rows."""
        fingerprint = toy_segmenter.encoder.fingerprint()
        checksum = small_bank.checksum()
        train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, quick_cl_config)
        assert toy_segmenter.encoder.fingerprint() == fingerprint
        assert small_bank.checksum() == checksum

    @pytest.mark.parametrize("kind", AUGMENT_KINDS)
    def test_every_augmentation(self, kind, toy_segmenter, aug_corpus, small_bank):
        """Each augmentation kind trains within budget."""
        config = CLConfig(K=3, steps=3, augment=AugmentSpec.default(kind), log_every=0)
        uap = train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, config)
        assert uap.linf <= BUDGET
        assert uap.meta["augment"] == kind

    def test_detach_positive(self, toy_segmenter, aug_corpus, small_bank):
        """Stopping gradients through the positive still trains."""
        config = CLConfig(K=3, steps=4, detach_positive=True, log_every=0)
        uap = train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, config)
        assert uap.meta["detach_positive"] == "true"
        assert uap.linf > 0.0

    def test_k_larger_than_bank(self, toy_segmenter, aug_corpus, small_bank):
        """K above M is a configuration error."""
        with pytest.raises(ConfigurationError):
            train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, CLConfig(K=small_bank.M + 1, steps=1))

    def test_bank_from_other_encoder(self, aug_corpus, small_bank):
        """A bank built with another encoder is refused."""
        with pytest.raises(ConfigurationError):
            train_uap_cl(make_toy_segmenter(99).encoder, aug_corpus, small_bank, CLConfig(K=2, steps=1))

    def test_empty_corpus(self, toy_segmenter, small_bank):
        """An empty augmentation corpus is refused."""
        with pytest.raises(ConfigurationError):
            train_uap_cl(toy_segmenter.encoder, InMemoryCorpus([]), small_bank, CLConfig(K=2, steps=1))

    def test_divergence(self, mocker, toy_segmenter, aug_corpus, small_bank):
        """A non-finite loss stops training with the failing iteration."""
        mocker.patch(
            "cl_uap.attacks.contrastive.infonce_loss",
            return_value=torch.tensor(float("nan")),
        )
        with pytest.raises(DivergenceError) as info:
            train_uap_cl(toy_segmenter.encoder, aug_corpus, small_bank, CLConfig(K=2, steps=3))
        assert info.value.iteration == 0

    def test_initial_shape_checked(self, toy_segmenter, aug_corpus, small_bank):
        """A starting perturbation of the wrong shape is refused."""
        with pytest.raises(ContractError):
            train_uap_cl(
                toy_segmenter.encoder, aug_corpus, small_bank, CLConfig(K=2, steps=1),
                initial=init_uap((32, 32, 3), DEFAULT_EPSILON),
            )


class TestMaskRemovalLoss:
    """Tests for the mask removal objective."""

    def test_matches_scalar_oracle(self):
        """The loss equals the mean squared hinge over masked pixels."""
        rng = make_generator(50)
        logits = torch.rand(8, 8, generator=rng, dtype=torch.float64) * 25.0 - 20.0
        mask = torch.rand(8, 8, generator=rng) > 0.5
        expected_terms = [
            max(value - (-10.0), 0.0) ** 2
            for value, keep in zip(logits.flatten().tolist(), mask.flatten().tolist())
            if keep
        ]
        expected = math.fsum(expected_terms) / len(expected_terms)
        result = mask_removal_loss(logits, mask, -10.0)
        assert abs(float(result.value) - expected) < 1e-9
        assert result.empty_mask is False

    def test_empty_mask(self):
        """An empty clean mask gives zero loss and reports it."""
        result = mask_removal_loss(torch.ones(4, 4, requires_grad=True), torch.zeros(4, 4, dtype=torch.bool))
        assert float(result.value) == 0.0
        assert result.empty_mask is True

    def test_shape_mismatch(self):
        """Logits and mask must have the same shape."""
        with pytest.raises(ContractError):
            mask_removal_loss(torch.zeros(4, 4), torch.zeros(3, 3, dtype=torch.bool))

    def test_gradient_matches_finite_differences(self):
        """Gradients agree with central differences away from the hinge."""
        rng = make_generator(51)
        logits = torch.rand(8, 8, generator=rng, dtype=torch.float64) * 10.0 - 5.0
        mask = torch.rand(8, 8, generator=rng) > 0.3
        error = gradient_check(lambda x: mask_removal_loss(x, mask, -10.0).value, logits)
        assert error < 1e-3


class TestImageCentricBaseline:
    """Tests for the image-dependent and image-agnostic baselines."""

    def test_image_dependent_reduces_loss(self, toy_segmenter, two_blob):
        """Attacking one image lowers its removal loss within budget."""
        trace = LossTrace(columns=BASELINE_TRACE_COLUMNS)
        config = BaselineConfig(steps=40, log_every=0)
        uap = attack_image_dependent(toy_segmenter, two_blob.image, [Prompt.at(20, 20)], config, trace=trace)
        assert uap.linf <= BUDGET
        assert trace.final_loss < trace.initial_loss
        assert uap.meta["mode"] == "image_dependent"

    def test_image_dependent_default_prompts(self, toy_segmenter, two_blob):
        """Without prompts the attack samples its own and runs."""
        uap = attack_image_dependent(toy_segmenter, two_blob.image, None, BaselineConfig(steps=2, log_every=0))
        assert uap.shape == (64, 64, 3)

    def test_out_of_bounds_prompt(self, toy_segmenter, two_blob):
        """Prompts outside the image are refused."""
        with pytest.raises(ContractError):
            attack_image_dependent(toy_segmenter, two_blob.image, [Prompt.at(99, 0)], BaselineConfig(steps=1))

    def test_image_agnostic_budget(self, toy_segmenter, aug_corpus):
        """The universal baseline stays within budget and records its corpus size."""
        config = BaselineConfig(mode="image_agnostic", steps=6, log_every=0)
        uap = attack_image_agnostic(toy_segmenter, aug_corpus, config)
        assert uap.linf <= BUDGET
        assert uap.meta["train_images"] == str(len(aug_corpus))

    def test_fixed_prompts_drawn_once_per_image(self, mocker, toy_segmenter, aug_corpus):
        """Without resampling each image gets prompts at its first visit only."""
        spy = mocker.patch("cl_uap.attacks.baseline.sample_prompts", wraps=sample_prompts)
        corpus = aug_corpus.subset(3)
        attack_image_agnostic(
            toy_segmenter, corpus, BaselineConfig(mode="image_agnostic", steps=9, resample_prompts=False, log_every=0)
        )
        assert spy.call_count == 3

    def test_resampled_prompts_every_visit(self, mocker, toy_segmenter, aug_corpus):
        """With resampling every step draws fresh prompts."""
        spy = mocker.patch("cl_uap.attacks.baseline.sample_prompts", wraps=sample_prompts)
        attack_image_agnostic(
            toy_segmenter, aug_corpus.subset(3), BaselineConfig(mode="image_agnostic", steps=9, log_every=0)
        )
        assert spy.call_count == 9

    def test_features_loss_path(self, toy_segmenter, aug_corpus):
        """The feature-space objective trains within budget."""
        config = BaselineConfig(mode="image_agnostic", steps=4, loss_path="features", log_every=0)
        uap = attack_image_agnostic(toy_segmenter, aug_corpus, config)
        assert uap.linf <= BUDGET
        assert uap.meta["loss_path"] == "features"

    def test_empty_corpus(self, toy_segmenter):
        """An empty training corpus is refused."""
        with pytest.raises(ConfigurationError):
            attack_image_agnostic(toy_segmenter, InMemoryCorpus([]), BaselineConfig(mode="image_agnostic"))

    def test_deterministic(self, toy_segmenter, aug_corpus):
        """Same seed gives bitwise-identical baseline perturbations."""
        config = BaselineConfig(mode="image_agnostic", steps=5, log_every=0)
        first = attack_image_agnostic(toy_segmenter, aug_corpus, config)
        second = attack_image_agnostic(toy_segmenter, aug_corpus, config)
        assert torch.equal(first.data, second.data)

    def test_single_image_agnostic_matches_dependent(self, toy_segmenter, two_blob):
        """On a one-image corpus both attacks produce the same perturbation."""
        dependent = attack_image_dependent(toy_segmenter, two_blob.image, None, BaselineConfig(steps=20, log_every=0))
        agnostic = attack_image_agnostic(
            toy_segmenter,
            InMemoryCorpus([two_blob.image], ["blob"]),
            BaselineConfig(mode="image_agnostic", steps=20, log_every=0),
        )
        assert torch.equal(agnostic.data, dependent.data)

    def test_resampled_masks_are_not_cached(self, recorded_caches, toy_segmenter, aug_corpus):
        """Fresh prompts on every visit leave the mask cache empty."""
        attack_image_agnostic(
            toy_segmenter, aug_corpus.subset(2), BaselineConfig(mode="image_agnostic", steps=30, log_every=0)
        )
        assert len(recorded_caches) == 1
        assert len(recorded_caches[0]) == 0

    def test_fixed_prompt_cache_is_bounded(self, recorded_caches, toy_segmenter, aug_corpus):
        """Reused prompts cache one mask per (image, prompt) however long training runs."""
        config = BaselineConfig(mode="image_agnostic", steps=30, resample_prompts=False, log_every=0)
        attack_image_agnostic(toy_segmenter, aug_corpus.subset(2), config)
        assert len(recorded_caches[0]) == 2

    def test_attack_leaves_encoder_untouched(self, toy_segmenter, aug_corpus):
        """The baseline never updates encoder weights."""
        fingerprint = toy_segmenter.encoder.fingerprint()
        attack_image_agnostic(toy_segmenter, aug_corpus, BaselineConfig(mode="image_agnostic", steps=5, log_every=0))
        assert toy_segmenter.encoder.fingerprint() == fingerprint


class TestCleanMaskCache:
    """Tests for the clean mask cache."""

    def test_recompute_after_clear_is_identical(self, toy_segmenter, two_blob):
        """Masks computed again after clearing match the first ones bitwise."""
        cache = CleanMaskCache(toy_segmenter)
        prompt = Prompt.at(20, 20)
        first = cache.mask("blob", two_blob.image, prompt).clone()
        assert len(cache) == 1
        cache.clear()
        assert len(cache) == 0
        assert torch.equal(cache.mask("blob", two_blob.image, prompt), first)

    def test_unstored_mask_not_kept(self, toy_segmenter, two_blob):
        """A mask requested without storing matches the stored one but is not kept."""
        cache = CleanMaskCache(toy_segmenter)
        prompt = Prompt.at(20, 20)
        unstored = cache.mask("blob", two_blob.image, prompt, store=False)
        assert len(cache) == 0
        assert torch.equal(cache.mask("blob", two_blob.image, prompt), unstored)
        assert len(cache) == 1
