#!/usr/bin/env python3
"""
CL-UAP - Complete Workflow Demo on the Toy Segmenter

This script walks through the whole pipeline without any checkpoint:
1. Generate synthetic augmentation, bank and held-out corpora
2. Build the memory bank of negative embeddings
3. Train a perturbation with the contrastive objective
4. Evaluate it against the uniform-noise control
5. Print the cosine diagnostics

Each step shows its output and processing time.
"""

import logging
import sys
import time
from datetime import datetime

from cl_uap.config import Config
from cl_uap.logging_config import setup_logging

# Configure logging first
config = Config.from_env()
setup_logging(config.log)
logger = logging.getLogger(__name__)

from cl_uap.attacks.contrastive import CL_TRACE_COLUMNS, train_uap_cl  # noqa: E402
from cl_uap.attacks.projected import LossTrace  # noqa: E402
from cl_uap.config import CLConfig, EvalConfig  # noqa: E402
from cl_uap.core.types import DEFAULT_EPSILON  # noqa: E402
from cl_uap.data.synthetic import synthetic_corpus  # noqa: E402
from cl_uap.encoders.toy import make_toy_segmenter  # noqa: E402
from cl_uap.evaluation.analysis import cosine_analysis  # noqa: E402
from cl_uap.evaluation.miou import evaluate_uap, random_noise_baseline  # noqa: E402
from cl_uap.membank.bank import build_membank  # noqa: E402


def print_section(title: str, icon: str = "⚡"):
    """Print a section header."""
    print(f"\n{'=' * 80}")
    print(f"{icon}  {title}")
    print(f"{'=' * 80}\n")


def demo_corpora(n_images: int = 20):
    """Step 1: Generate three disjoint synthetic corpora."""
    print_section("STEP 1: Generate Synthetic Corpora", icon="🖼")
    corpora = {
        "aug": synthetic_corpus(n_images, seed=1, name="aug"),
        "bank": synthetic_corpus(2 * n_images, seed=2, name="bank"),
        "test": synthetic_corpus(n_images, seed=3, name="test"),
    }
    for name, corpus in corpora.items():
        print(f"  {name:5s}: {len(corpus)} images, first id {corpus.ids[0]}")
    return corpora


def demo_bank(segmenter, corpora):
    """Step 2: Embed the bank corpus."""
    print_section("STEP 2: Build Memory Bank", icon="🏦")
    start_time = time.time()
    bank = build_membank(segmenter.encoder, corpora["bank"], len(corpora["bank"]))
    print(f"✓ M={bank.M}, D={bank.D}, checksum={bank.checksum()[:16]} in {time.time() - start_time:.2f}s")
    return bank


def demo_train(segmenter, corpora, bank, steps: int):
    """Step 3: Train a contrastive perturbation."""
    print_section("STEP 3: Train CL-UAP", icon="🎯")
    cl_config = CLConfig(K=32, steps=steps, log_every=max(steps // 5, 1))
    trace = LossTrace(columns=CL_TRACE_COLUMNS)

    start_time = time.time()
    uap = train_uap_cl(segmenter.encoder, corpora["aug"], bank, cl_config, trace=trace)
    print(f"✓ Trained {steps} steps in {time.time() - start_time:.2f}s")
    print(f"  Loss: {trace.initial_loss:.4f} -> {trace.final_loss:.4f}")
    print(f"  max|v| = {uap.linf:.6f} (budget {uap.epsilon:.6f})")
    return uap


def demo_evaluate(segmenter, corpora, uap):
    """Step 4: Compare against the uniform-noise control."""
    print_section("STEP 4: Evaluate mIoU", icon="📊")
    eval_config = EvalConfig(n_images=len(corpora["test"]))
    noise = random_noise_baseline(segmenter, corpora["test"], eval_config, DEFAULT_EPSILON, seed=0)
    attacked = evaluate_uap(segmenter, uap, corpora["test"], eval_config)
    print(f"  Uniform noise: {noise.miou_rounded:6.2f}%")
    print(f"  CL-UAP:        {attacked.miou_rounded:6.2f}%")
    return attacked


def demo_analyze(segmenter, corpora, uap):
    """Step 5: Cosine diagnostics."""
    print_section("STEP 5: Cosine Analysis", icon="🔍")
    report = cosine_analysis(segmenter.encoder, uap, corpora["test"], draws=20)
    for name, value in report.to_dict().items():
        print(f"  {name:10s}: {value}")


def main():
    """Run the complete workflow demo."""
    print("\n" + "=" * 80)
    print("  CL-UAP - COMPLETE WORKFLOW DEMO")
    print("=" * 80)
    print(f"\n  Date: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print(f"  Device: {config.device.device}\n")

    steps = int(sys.argv[1]) if len(sys.argv) > 1 else 500

    try:
        segmenter = make_toy_segmenter(0)
        corpora = demo_corpora()
        bank = demo_bank(segmenter, corpora)
        uap = demo_train(segmenter, corpora, bank, steps)
        demo_evaluate(segmenter, corpora, uap)
        demo_analyze(segmenter, corpora, uap)

        print_section("✅ DEMO COMPLETED", icon="✅")

    except KeyboardInterrupt:
        print("\n\n⚠ Demo interrupted by user")
    except Exception as e:
        logger.error(f"Demo failed: {e}", exc_info=True)
        print(f"\n✗ Demo failed: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
