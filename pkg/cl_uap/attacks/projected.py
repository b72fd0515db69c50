"""
Projected Adam on a single perturbation tensor, plus the loss trace both
attack loops record.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import torch

from cl_uap.core.errors import ConfigurationError, DivergenceError
from cl_uap.core.ops import linf_project
from cl_uap.core.prompts import make_generator
from cl_uap.core.types import Uap

logger = logging.getLogger(__name__)


def init_uap(
    shape: Sequence[int],
    epsilon: float,
    mode: str = "zeros",
    seed: int = 0,
    dtype: torch.dtype = torch.float32,
) -> Uap:
    """
    Initial perturbation: zeros, or i.i.d. Uniform(-epsilon, epsilon).

    Examples:
        >>> init_uap((2, 2, 3), 10 / 255).linf
        0.0
    """
    shape = tuple(int(s) for s in shape)
    if mode == "zeros":
        data = torch.zeros(shape, dtype=dtype)
    elif mode == "uniform":
        draw = torch.rand(shape, generator=make_generator(seed), dtype=torch.float64)
        data = linf_project(((2.0 * draw - 1.0) * epsilon).to(dtype), epsilon)
    else:
        raise ConfigurationError(f"Unknown init mode: '{mode}'")
    return Uap(data=data, epsilon=epsilon, meta={"init": mode, "seed": str(seed)})


@dataclass
class LossTrace:
    """
    Per-iteration record of an optimization run.

    Attributes:
        columns: Column names after 'iteration'.
        rows: One tuple per recorded iteration.
    """

    columns: Tuple[str, ...] = ("loss", "linf")
    rows: List[Tuple[float, ...]] = field(default_factory=list)

    def record(self, iteration: int, **values: float) -> None:
        """Append one row; every column must be given."""
        self.rows.append((float(iteration),) + tuple(float(values[c]) for c in self.columns))

    def column(self, name: str) -> List[float]:
        """All values of one column."""
        index = 1 + self.columns.index(name)
        return [row[index] for row in self.rows]

    @property
    def initial_loss(self) -> float:
        return self.column("loss")[0] if self.rows else math.nan

    @property
    def final_loss(self) -> float:
        return self.column("loss")[-1] if self.rows else math.nan

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write ``iteration,<columns>`` rows."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(("iteration",) + self.columns)
            for row in self.rows:
                writer.writerow([int(row[0])] + [repr(value) for value in row[1:]])
        return path


class ProjectedAdam:
    """
    Adam on one perturbation tensor followed by L-infinity projection.

    Example:
        >>> opt = ProjectedAdam(init.data, epsilon=10 / 255, lr=1e-2)
        >>> loss = objective(opt.v)
        >>> opt.step(loss, iteration=0)
    """

    def __init__(
        self,
        initial: torch.Tensor,
        epsilon: float,
        lr: float,
        betas: Tuple[float, float] = (0.9, 0.999),
    ):
        self.epsilon = epsilon
        self.v = linf_project(initial.detach().clone(), epsilon).requires_grad_(True)
        self.optimizer = torch.optim.Adam([self.v], lr=lr, betas=tuple(betas), weight_decay=0.0)

    def zero_grad(self) -> None:
        self.optimizer.zero_grad(set_to_none=True)

    def step(self, loss: torch.Tensor, iteration: int) -> float:
        """
        Backpropagate, take one Adam step and project.

        Returns:
            The loss value before the step.

        Raises:
            DivergenceError: If the loss or the gradient is non-finite.
        """
        value = float(loss.detach())
        if not math.isfinite(value):
            raise DivergenceError(iteration, f"loss={value}")
        if loss.requires_grad:
            loss.backward()
            grad = self.v.grad
            if grad is not None and not bool(torch.isfinite(grad).all()):
                raise DivergenceError(iteration, "non-finite gradient")
            self.optimizer.step()
        with torch.no_grad():
            self.v.copy_(linf_project(self.v, self.epsilon))
        return value

    @property
    def linf(self) -> float:
        return float(self.v.detach().abs().max())

    def result(self, meta: Dict[str, str]) -> Uap:
        """Final perturbation as a Uap."""
        return Uap(data=self.v.detach().clone(), epsilon=self.epsilon, meta=dict(meta))
