"""
Command handlers.

Each handler runs inside an entered ExperimentManager and returns the
process exit status.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, List

from cl_uap.attacks.baseline import BASELINE_TRACE_COLUMNS, attack_image_agnostic, attack_image_dependent
from cl_uap.attacks.contrastive import CL_TRACE_COLUMNS, train_uap_cl
from cl_uap.attacks.projected import LossTrace
from cl_uap.core.errors import ConfigurationError
from cl_uap.core.prompts import make_generator, sample_prompts
from cl_uap.core.types import Prompt
from cl_uap.data.synthetic import synthetic_corpus, write_corpus
from cl_uap.evaluation.analysis import cosine_analysis
from cl_uap.evaluation.miou import evaluate_uap, random_noise_baseline
from cl_uap.evaluation.overlays import emit_overlays
from cl_uap.evaluation.reference import reference_deltas
from cl_uap.evaluation.sweeps import SweepRunner, parse_grid
from cl_uap.manager import BANK_FILE, ExperimentManager
from cl_uap.membank.bank import build_membank, save_membank

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_TOOLKIT_ERROR = 2
EXIT_PARTIAL = 3


def cmd_bank(manager: ExperimentManager) -> int:
    """Embed a corpus into a memory bank."""
    encoder = manager.segmenter().encoder
    corpus = manager.ingest("corpus")
    bank = build_membank(encoder, corpus, manager.run_config.bank_size)
    save_membank(bank, manager.out_dir / BANK_FILE)
    manager.write_json("bank.json", {"M": bank.M, "D": bank.D, "checksum": bank.checksum()})
    return EXIT_OK


def cmd_train_cl(manager: ExperimentManager) -> int:
    """Train a perturbation with the contrastive objective."""
    config = manager.run_config.cl_config()
    encoder = manager.segmenter().encoder
    aug_corpus = manager.ingest("aug_corpus")
    bank = manager.bank()

    trace = LossTrace(columns=CL_TRACE_COLUMNS)
    uap = train_uap_cl(encoder, aug_corpus, bank, config, trace=trace)
    manager.save_uap(uap, trace, train_identities=aug_corpus.identities + manager.training_identities()["bank"])
    return EXIT_OK


def cmd_train_baseline(manager: ExperimentManager) -> int:
    """
    Train the image-centric baseline.

    The image-dependent attack is meant to be measured on its own image, so
    only the image-agnostic perturbation records its training identities.
    """
    config = manager.run_config.baseline_config()
    segmenter = manager.segmenter()
    corpus = manager.ingest("train_corpus")
    trace = LossTrace(columns=BASELINE_TRACE_COLUMNS)

    if config.mode == "image_dependent":
        index = manager.run_config.baseline_image
        if index >= len(corpus):
            raise ConfigurationError(f"baseline_image={index} but the training corpus has {len(corpus)} images")
        uap = attack_image_dependent(segmenter, corpus[index], None, config, trace=trace)
        uap.meta["train_image"] = corpus.ids[index]
        manager.save_uap(uap, trace)
    else:
        uap = attack_image_agnostic(segmenter, corpus, config, trace=trace)
        manager.save_uap(uap, trace, train_identities=corpus.identities)
    return EXIT_OK


def cmd_eval(manager: ExperimentManager) -> int:
    """Measure clean-versus-adversarial mIoU on the test corpus."""
    run_config = manager.run_config
    segmenter = manager.segmenter()
    test_corpus = manager.ingest("test_corpus")
    config = run_config.eval_config()
    exclude = manager.training_identities()

    if run_config.noise:
        seed = run_config.seed if run_config.seed is not None else config.seed
        report = random_noise_baseline(
            segmenter, test_corpus, config, run_config.noise_epsilon, seed, exclude=exclude
        )
    else:
        report = evaluate_uap(segmenter, manager.uap(), test_corpus, config, exclude=exclude)
    manager.save_report(report)
    logger.info(f"mIoU: {report.miou_rounded:.2f}%")
    return EXIT_OK


def cmd_sweep(manager: ExperimentManager) -> int:
    """Run an ablation grid; partial failure returns EXIT_PARTIAL."""
    run_config = manager.run_config
    options = run_config.sweep
    segmenter = manager.segmenter()
    runner = SweepRunner(
        segmenter,
        manager.ingest("aug_corpus"),
        manager.bank(),
        manager.ingest("test_corpus"),
        run_config.eval_config(),
        manager.out_dir,
        exclude=manager.training_identities(),
    )
    grid = parse_grid(options.kind, options.grid)
    result = runner.run(options.kind, grid, run_config.cl_config(), seeds=options.seeds or None)

    for setting, delta in reference_deltas(options.kind, result.table()).items():
        logger.info(f"  {options.kind}={setting}: {delta:+.2f} points from the full-scale reference")
    return EXIT_PARTIAL if result.failed else EXIT_OK


def cmd_analyze(manager: ExperimentManager) -> int:
    """Cosine similarity diagnostics of a perturbation."""
    options = manager.run_config.analyze
    seed = manager.run_config.seed if manager.run_config.seed is not None else 0
    report = cosine_analysis(
        manager.segmenter().encoder,
        manager.uap(),
        manager.ingest("corpus"),
        weight=options.weight,
        draws=options.draws,
        seed=seed,
        pooled=options.pooled,
    )
    manager.write_json("analysis.json", report.to_dict())
    return EXIT_OK


def cmd_overlay(manager: ExperimentManager) -> int:
    """Write qualitative panels for the first images of a directory."""
    options = manager.run_config.overlay
    segmenter = manager.segmenter()
    images = manager.ingest("images").subset(options.n_images)
    height, width = segmenter.input_shape[0], segmenter.input_shape[1]
    rng = make_generator(options.seed)
    prompts: List[List[Prompt]] = [
        sample_prompts(options.prompt, options.prompts_per_image, height, width, rng) for _ in range(len(images))
    ]
    emit_overlays(segmenter, manager.uap(), images, prompts, manager.out_dir / "overlays", ids=images.ids)
    return EXIT_OK


def cmd_synth(manager: ExperimentManager) -> int:
    """Write a synthetic PNG corpus into ``<out_dir>/images``."""
    run_config = manager.run_config
    seed = run_config.seed if run_config.seed is not None else 0
    corpus = synthetic_corpus(run_config.synth.n, run_config.input_shape(), seed, name=run_config.synth.name)
    write_corpus(corpus, manager.out_dir / "images")
    return EXIT_OK


COMMAND_HANDLERS: Dict[str, Callable[[ExperimentManager], int]] = {
    "bank": cmd_bank,
    "train-cl": cmd_train_cl,
    "train-baseline": cmd_train_baseline,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
    "overlay": cmd_overlay,
    "synth": cmd_synth,
}
