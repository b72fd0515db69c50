"""
Command-line entry point.

Usage:
    python -m cl_uap synth --out runs/train --n 20 --seed 1
    python -m cl_uap bank --corpus runs/bank/images --m 20 --out runs/bank-run
    python -m cl_uap train-cl --aug-corpus runs/train/images --bank runs/bank-run/bank.mbk --out runs/cl
    python -m cl_uap eval --uap runs/cl/uap.uap --test-corpus runs/test/images --n 20 --out runs/eval
    python -m cl_uap sweep --kind temperature --grid 0.05,0.1,0.5 ...

Every flag has a config-file equivalent (``--config run.json``); flags
override file values.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from cl_uap.cli.commands import COMMAND_HANDLERS, EXIT_FAILURE, EXIT_TOOLKIT_ERROR
from cl_uap.cli.models import COMMANDS, RunConfig, load_run_config
from cl_uap.config import Config
from cl_uap.core.errors import UapToolkitError
from cl_uap.logging_config import setup_logging
from cl_uap.manager import ExperimentManager

logger = logging.getLogger(__name__)

# argparse keys that are not RunConfig fields
_PARSER_ONLY = ("config", "command")


def _seed_list(text: str) -> List[int]:
    try:
        return [int(token) for token in text.split(",") if token.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Invalid seed list '{text}'") from e


def _baseline_mode(text: str) -> str:
    return text if text.startswith("image_") else f"image_{text}"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--out", dest="out_dir", help="Run directory")
    parser.add_argument("--encoder", dest="model.variant", help="toy, vit_h, vit_l or vit_b")
    parser.add_argument("--checkpoint", dest="model.checkpoint_path", help="SAM checkpoint file")
    parser.add_argument("--device", dest="model.device", help="Torch device (default: UAP_DEVICE or cpu)")
    parser.add_argument("--toy-seed", dest="toy.seed", type=int, help="Toy segmenter weight seed")
    parser.add_argument("--dtype", dest="toy.dtype", choices=("float32", "float64"), help="Toy segmenter dtype")
    parser.add_argument("--log-level", dest="log_level", help="Override LOG_LEVEL")


def _add_cl_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--aug", dest="cl.augment", help="Augmentation kind (default add_image)")
    parser.add_argument("--weight", dest="cl.weight", type=float, help="add_image weight")
    parser.add_argument("--tau", dest="cl.tau", type=float, help="InfoNCE temperature")
    parser.add_argument("--k", dest="cl.K", type=int, help="Negatives per step")
    parser.add_argument("--eps", dest="cl.epsilon", type=float, help="L-infinity budget")
    parser.add_argument("--steps", dest="cl.steps", type=int)
    parser.add_argument("--lr", dest="cl.lr", type=float)
    parser.add_argument("--init", dest="cl.init", choices=("zeros", "uniform"))
    parser.add_argument("--detach-positive", dest="cl.detach_positive", action=argparse.BooleanOptionalAction)
    parser.add_argument("--log-every", dest="cl.log_every", type=int)
    parser.add_argument("--seed", dest="seed", type=int, help="Training seed")


def _add_eval_flags(parser: argparse.ArgumentParser, seed_flag: str = "--seed") -> None:
    parser.add_argument("--n", dest="eval.n_images", type=int, help="Test images used")
    parser.add_argument("--prompt", dest="eval.prompt_kind", choices=("point", "box"))
    parser.add_argument("--prompts-per-image", dest="eval.prompts_per_image", type=int)
    parser.add_argument(seed_flag, dest="eval.seed", type=int, help="Prompt sampling seed")
    parser.add_argument("--point-sampling", dest="eval.point_sampling", choices=("uniform", "foreground"))
    parser.add_argument("--workers", dest="eval.workers", type=int)
    parser.add_argument("--clamp-adv", dest="eval.clamp_adv", action=argparse.BooleanOptionalAction)


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subcommand per RunConfig command."""
    parser = argparse.ArgumentParser(
        prog="cl_uap",
        description="Universal adversarial perturbations against promptable segmenters",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    bank = subparsers.add_parser("bank", help="Build a memory bank of negative embeddings")
    _add_common(bank)
    bank.add_argument("--corpus", dest="paths.corpus", help="Bank image directory")
    bank.add_argument("--m", dest="bank_size", type=int, help="Bank size M")

    train_cl = subparsers.add_parser("train-cl", help="Train a perturbation with the contrastive objective")
    _add_common(train_cl)
    _add_cl_flags(train_cl)
    train_cl.add_argument("--aug-corpus", dest="paths.aug_corpus", help="Natural images for add_image")
    train_cl.add_argument("--bank", dest="paths.bank", help="Memory bank file")
    train_cl.add_argument("--test-corpus", dest="paths.test_corpus", help="Held-out directory to keep disjoint")

    baseline = subparsers.add_parser("train-baseline", help="Train the image-centric mask removal baseline")
    _add_common(baseline)
    baseline.add_argument(
        "--mode",
        dest="baseline.mode",
        type=_baseline_mode,
        choices=("image_dependent", "image_agnostic"),
        metavar="{dependent,agnostic}",
    )
    baseline.add_argument("--train-corpus", dest="paths.train_corpus", help="Training image directory")
    baseline.add_argument("--test-corpus", dest="paths.test_corpus", help="Held-out directory to keep disjoint")
    baseline.add_argument("--image-index", dest="baseline_image", type=int, help="Image of the dependent attack")
    baseline.add_argument("--eps", dest="baseline.epsilon", type=float)
    baseline.add_argument("--steps", dest="baseline.steps", type=int)
    baseline.add_argument("--lr", dest="baseline.lr", type=float)
    baseline.add_argument("--prompts-per-image", dest="baseline.prompts_per_image", type=int)
    baseline.add_argument("--target-logit", dest="baseline.target_logit", type=float)
    baseline.add_argument("--loss-path", dest="baseline.loss_path", choices=("mask_logits", "features"))
    baseline.add_argument("--resample-prompts", dest="baseline.resample_prompts", action=argparse.BooleanOptionalAction)
    baseline.add_argument("--init", dest="baseline.init", choices=("zeros", "uniform"))
    baseline.add_argument("--seed", dest="seed", type=int)

    evaluate = subparsers.add_parser("eval", help="Measure clean-versus-adversarial mIoU")
    _add_common(evaluate)
    _add_eval_flags(evaluate)
    evaluate.add_argument("--uap", dest="paths.uap", help="Perturbation file")
    evaluate.add_argument("--test-corpus", dest="paths.test_corpus", help="Held-out image directory")
    evaluate.add_argument("--noise", dest="noise", action="store_const", const=True, help="Uniform-noise control")
    evaluate.add_argument("--noise-eps", dest="noise_epsilon", type=float)
    evaluate.add_argument("--aug-corpus", dest="paths.aug_corpus", help="Training directory to keep disjoint")
    evaluate.add_argument("--train-corpus", dest="paths.train_corpus", help="Training directory to keep disjoint")
    evaluate.add_argument("--bank", dest="paths.bank", help="Bank whose sources must stay disjoint")

    sweep = subparsers.add_parser("sweep", help="Run an ablation grid")
    _add_common(sweep)
    _add_cl_flags(sweep)
    _add_eval_flags(sweep, seed_flag="--eval-seed")
    sweep.add_argument("--kind", dest="sweep.kind", choices=("augmentation", "weight", "temperature", "negatives"))
    sweep.add_argument("--grid", dest="sweep.grid", help="Comma-separated values (default: preset grid)")
    sweep.add_argument("--seeds", dest="sweep.seeds", type=_seed_list, help="Comma-separated training seeds")
    sweep.add_argument("--aug-corpus", dest="paths.aug_corpus")
    sweep.add_argument("--bank", dest="paths.bank")
    sweep.add_argument("--test-corpus", dest="paths.test_corpus")

    analyze = subparsers.add_parser("analyze", help="Cosine similarity diagnostics")
    _add_common(analyze)
    analyze.add_argument("--uap", dest="paths.uap")
    analyze.add_argument("--corpus", dest="paths.corpus")
    analyze.add_argument("--weight", dest="analyze.weight", type=float)
    analyze.add_argument("--draws", dest="analyze.draws", type=int)
    analyze.add_argument("--pooled", dest="analyze.pooled", action=argparse.BooleanOptionalAction)
    analyze.add_argument("--seed", dest="seed", type=int)

    overlay = subparsers.add_parser("overlay", help="Write qualitative panels")
    _add_common(overlay)
    overlay.add_argument("--uap", dest="paths.uap")
    overlay.add_argument("--images", dest="paths.images")
    overlay.add_argument("--prompt", dest="overlay.prompt", choices=("point", "box"))
    overlay.add_argument("--n", dest="overlay.n_images", type=int)
    overlay.add_argument("--prompts-per-image", dest="overlay.prompts_per_image", type=int)
    overlay.add_argument("--seed", dest="overlay.seed", type=int)

    synth = subparsers.add_parser("synth", help="Write a synthetic image corpus")
    _add_common(synth)
    synth.add_argument("--n", dest="synth.n", type=int)
    synth.add_argument("--name", dest="synth.name")
    synth.add_argument("--seed", dest="seed", type=int)

    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Dotted-key overrides for every flag that was given."""
    overrides = {key: value for key, value in vars(args).items() if key not in _PARSER_ONLY and value is not None}
    overrides["command"] = args.command
    return overrides


def run(config: RunConfig, ambient: Optional[Config] = None) -> int:
    """
    Execute one run.

    Inputs are checked before the run directory exists, so a refused run
    (missing inputs, overlapping corpora) leaves no outputs behind.

    Returns:
        0 on success, 2 for toolkit errors, 3 for a sweep with failed cells,
        1 for anything else.
    """
    manager = ExperimentManager(config, ambient)
    try:
        manager.guard()
        with manager:
            return COMMAND_HANDLERS[config.command](manager)
    except UapToolkitError as e:
        logger.error(f"'{config.command}' failed: {e}")
        return EXIT_TOOLKIT_ERROR
    except Exception as e:
        logger.exception(f"'{config.command}' failed unexpectedly: {e}")
        return EXIT_FAILURE


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, configure logging and run."""
    args = build_parser().parse_args(argv)
    ambient = Config.from_env()
    setup_logging(ambient.log, getattr(args, "log_level", None))

    try:
        config = load_run_config(args.config, overrides_from_args(args))
    except UapToolkitError as e:
        logger.error(str(e))
        return EXIT_TOOLKIT_ERROR
    return run(config, ambient)


if __name__ == "__main__":
    sys.exit(main())
