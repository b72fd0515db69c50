"""
Ablation sweeps over the contrastive training configuration.

Each cell of a grid trains a fresh perturbation from the base configuration
with one field changed, evaluates it on the held-out corpus and persists
both. Cells are independent: a failing cell is recorded and the sweep moves
on to the next one.

Typical usage:
    >>> runner = SweepRunner(segmenter, aug_corpus, bank, test_corpus, EvalConfig(), "runs/sweep")
    >>> result = runner.run("temperature", [0.05, 0.1, 0.5], CLConfig(steps=200))
    >>> result.to_csv("runs/sweep/sweep.csv")
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from cl_uap.attacks.contrastive import CL_TRACE_COLUMNS, train_uap_cl
from cl_uap.attacks.projected import LossTrace
from cl_uap.augment.spec import AUGMENT_KINDS, AugmentSpec
from cl_uap.config import CLConfig, EvalConfig
from cl_uap.core.errors import ConfigurationError
from cl_uap.data.corpus import ImageSource
from cl_uap.data.uap_io import save_uap
from cl_uap.encoders.base import BaseSegmenter
from cl_uap.evaluation.miou import evaluate_uap
from cl_uap.evaluation.plotting import pyplot
from cl_uap.membank.bank import MemoryBank

logger = logging.getLogger(__name__)

SWEEP_KINDS = ("augmentation", "weight", "temperature", "negatives")
SWEEP_COLUMNS = ("setting", "miou_percent")

PRESET_GRIDS: Dict[str, list] = {
    "augmentation": list(AUGMENT_KINDS),
    "weight": [round(0.2 + 0.1 * i, 1) for i in range(19)],
    "temperature": [0.005, 0.01, 0.05, 0.1, 0.5, 1.0],
    "negatives": [1, 2, 5, 10, 20, 50, 100],
}

Setting = Union[str, int, float]


def _check_kind(kind: str) -> None:
    if kind not in SWEEP_KINDS:
        raise ConfigurationError(f"Unknown sweep kind '{kind}'. Supported: {', '.join(SWEEP_KINDS)}")


def format_setting(setting: Setting) -> str:
    """Text form of a grid value as written to CSV and file names."""
    if isinstance(setting, float):
        return f"{setting:g}"
    return str(setting)


def parse_grid(kind: str, text: Optional[str]) -> List[Setting]:
    """
    Parse a comma-separated grid for a sweep kind.

    An empty or missing grid returns the kind's preset.

    Examples:
        >>> parse_grid("temperature", "0.05,0.1,0.5")
        [0.05, 0.1, 0.5]
        >>> parse_grid("negatives", "1,2,4")
        [1, 2, 4]

    Raises:
        ConfigurationError: Unknown kind, unparsable value or unknown augmentation.
    """
    _check_kind(kind)
    if not text or not text.strip():
        return list(PRESET_GRIDS[kind])

    values: List[Setting] = []
    for token in (t.strip() for t in text.split(",")):
        if not token:
            continue
        try:
            if kind == "augmentation":
                if token not in AUGMENT_KINDS:
                    raise ValueError(token)
                values.append(token)
            elif kind == "negatives":
                values.append(int(token))
            else:
                values.append(float(token))
        except ValueError as e:
            raise ConfigurationError(f"Invalid {kind} grid value '{token}'") from e
    if not values:
        raise ConfigurationError(f"Empty {kind} grid")
    return values


def apply_setting(base: CLConfig, kind: str, setting: Setting, input_shape: Sequence[int]) -> CLConfig:
    """
    Return ``base`` with the swept field set to ``setting``.

    The weight sweep always trains with the add_image augmentation.
    """
    _check_kind(kind)
    if kind == "augmentation":
        return replace(base, augment=AugmentSpec.default(str(setting), tuple(input_shape)))
    if kind == "weight":
        return replace(base, augment=AugmentSpec(kind="add_image"), weight=float(setting))
    if kind == "temperature":
        return replace(base, tau=float(setting))
    return replace(base, K=int(setting))


@dataclass
class SweepCell:
    """
    Outcome of one grid value.

    Attributes:
        setting: Grid value.
        mious: mIoU percent per seed, in seed order.
        error: Failure message when any seed failed.
    """

    setting: Setting
    mious: List[float] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def miou(self) -> float:
        """Seed-averaged mIoU percent, NaN for a failed cell."""
        if not self.ok or not self.mious:
            return math.nan
        return math.fsum(self.mious) / len(self.mious)


@dataclass
class SweepResult:
    """
    Table of (setting -> mIoU) for one sweep.

    Attributes:
        kind: Swept field.
        seeds: Training seeds averaged per cell.
        cells: One entry per grid value, in grid order.
        csv_path: Written CSV, once saved.
        plot_path: Written plot, or None when plotting failed.
    """

    kind: str
    seeds: List[int]
    cells: List[SweepCell] = field(default_factory=list)
    csv_path: Optional[Path] = None
    plot_path: Optional[Path] = None

    @property
    def failed(self) -> List[SweepCell]:
        return [c for c in self.cells if not c.ok]

    def table(self) -> Dict[str, float]:
        return {format_setting(c.setting): c.miou for c in self.cells}

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write ``setting,miou_percent`` rows; failed cells carry ``nan``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            for cell in self.cells:
                value = "nan" if not cell.ok else f"{cell.miou:.2f}"
                writer.writerow([format_setting(cell.setting), value])
        self.csv_path = path
        return path

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seeds": list(self.seeds),
            "cells": [
                {
                    "setting": format_setting(c.setting),
                    "miou": None if not c.ok else c.miou,
                    "per_seed": list(c.mious),
                    "error": c.error,
                }
                for c in self.cells
            ],
        }

    def plot(self, path: Union[str, Path]) -> Optional[Path]:
        """
        Plot mIoU against the setting.

        Returns:
            The written path, or None when plotting failed (logged as a warning).
        """
        path = Path(path)
        done = [c for c in self.cells if c.ok]
        try:
            plt = pyplot()
            fig, axis = plt.subplots(figsize=(6, 4))
            try:
                labels = [format_setting(c.setting) for c in done]
                values = [c.miou for c in done]
                if self.kind == "augmentation":
                    axis.bar(labels, values, color="tab:blue")
                else:
                    axis.plot([float(c.setting) for c in done], values, marker="o")
                    if self.kind in ("temperature", "negatives"):
                        axis.set_xscale("log")
                axis.set_xlabel(self.kind)
                axis.set_ylabel("mIoU (%)")
                axis.set_ylim(0, 100)
                axis.grid(alpha=0.3)
                fig.tight_layout()
                path.parent.mkdir(parents=True, exist_ok=True)
                fig.savefig(path, dpi=100)
            finally:
                plt.close(fig)
        except Exception as e:
            logger.warning(f"Plotting sweep failed, keeping CSV only: {e}")
            self.plot_path = None
            return None
        self.plot_path = path
        return path


class SweepRunner:
    """
    Train and evaluate one perturbation per (grid value, seed).

    Attributes:
        segmenter: Frozen segmenter; its encoder drives training.
        aug_corpus: Natural images for the add_image augmentation.
        bank: Memory bank built with the same encoder.
        test_corpus: Held-out evaluation images.
        eval_config: Evaluation protocol, shared by every cell.
        out_dir: Directory receiving the table, the plot and per-cell artefacts.
        exclude: Role name to image identities the test corpus must not share.
    """

    def __init__(
        self,
        segmenter: BaseSegmenter,
        aug_corpus: ImageSource,
        bank: MemoryBank,
        test_corpus: ImageSource,
        eval_config: EvalConfig,
        out_dir: Union[str, Path],
        exclude: Optional[Dict[str, Sequence[str]]] = None,
    ):
        self.segmenter = segmenter
        self.aug_corpus = aug_corpus
        self.bank = bank
        self.test_corpus = test_corpus
        self.eval_config = eval_config
        self.out_dir = Path(out_dir)
        self.exclude = exclude

    def _cell_dir(self, kind: str, setting: Setting, seed: int) -> Path:
        label = format_setting(setting).replace("/", "_")
        return self.out_dir / "cells" / f"{kind}_{label}" / f"seed_{seed}"

    def _run_cell(self, kind: str, setting: Setting, config: CLConfig, seed: int) -> float:
        cell_dir = self._cell_dir(kind, setting, seed)
        cell_dir.mkdir(parents=True, exist_ok=True)
        trace = LossTrace(columns=CL_TRACE_COLUMNS)
        uap = train_uap_cl(self.segmenter.encoder, self.aug_corpus, self.bank, config, trace=trace)
        save_uap(uap, cell_dir / "uap.uap")
        trace.to_csv(cell_dir / "loss.csv")
        report = evaluate_uap(self.segmenter, uap, self.test_corpus, self.eval_config, exclude=self.exclude)
        report.to_csv(cell_dir / "report.csv")
        report.save_summary(cell_dir / "summary.json")
        return report.miou

    def run(
        self,
        kind: str,
        grid: Sequence[Setting],
        base_config: CLConfig,
        seeds: Optional[Sequence[int]] = None,
    ) -> SweepResult:
        """
        Run the sweep and write ``sweep.csv``, ``sweep.json`` and ``sweep.png``.

        Args:
            kind: One of augmentation, weight, temperature, negatives.
            grid: Values of the swept field.
            base_config: Configuration shared by all cells.
            seeds: Training seeds averaged per cell; defaults to the base seed.

        Returns:
            A SweepResult; check ``failed`` for cells that raised.

        Raises:
            ConfigurationError: Unknown kind or empty grid.
        """
        _check_kind(kind)
        if not grid:
            raise ConfigurationError(f"Empty {kind} grid")
        seeds = list(seeds) if seeds else [base_config.seed]
        input_shape = tuple(self.segmenter.input_shape)
        result = SweepResult(kind=kind, seeds=seeds)

        logger.info(f"Starting {kind} sweep: {len(grid)} settings x {len(seeds)} seeds")
        for index, setting in enumerate(grid):
            cell = SweepCell(setting=setting)
            logger.info(f"--- {kind}={format_setting(setting)} ({index + 1}/{len(grid)}) ---")
            for seed in seeds:
                try:
                    config = replace(apply_setting(base_config, kind, setting, input_shape), seed=seed)
                    miou = self._run_cell(kind, setting, config, seed)
                except Exception as e:
                    cell.error = f"seed {seed}: {type(e).__name__}: {e}"
                    logger.warning(f"Sweep cell {kind}={format_setting(setting)} failed: {cell.error}")
                    break
                cell.mious.append(miou)
                logger.debug(f"    seed {seed}: mIoU = {miou:.2f}%")
            if cell.ok:
                logger.info(f"  {kind}={format_setting(setting)}: mIoU = {cell.miou:.2f}%")
            result.cells.append(cell)

        result.to_csv(self.out_dir / "sweep.csv")
        with open(self.out_dir / "sweep.json", "w", encoding="utf-8") as f:
            json.dump(result.to_dict(), f, indent=2)
        result.plot(self.out_dir / "sweep.png")

        if result.failed:
            logger.warning(f"{len(result.failed)} of {len(result.cells)} sweep cells failed")
        else:
            logger.info(f"Sweep complete: {len(result.cells)} settings")
        return result


def sweep(
    kind: str,
    grid: Optional[Sequence[Setting]],
    base_config: CLConfig,
    segmenter: BaseSegmenter,
    aug_corpus: ImageSource,
    bank: MemoryBank,
    test_corpus: ImageSource,
    eval_config: EvalConfig,
    out_dir: Union[str, Path],
    seeds: Optional[Sequence[int]] = None,
    exclude: Optional[Dict[str, Sequence[str]]] = None,
) -> SweepResult:
    """Functional form of ``SweepRunner.run``; a None grid uses the kind's preset."""
    _check_kind(kind)
    grid = list(grid) if grid else list(PRESET_GRIDS[kind])
    runner = SweepRunner(segmenter, aug_corpus, bank, test_corpus, eval_config, out_dir, exclude=exclude)
    return runner.run(kind, grid, base_config, seeds=seeds)
