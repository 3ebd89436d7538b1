# -*- coding: utf-8 -*-
"""
Synthetic weight generator: row means drawn from a normal distribution, small
within-row noise around each mean.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.errors import ConfigError
from src.graph.model_graph import WeightTensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    rows: int
    cols: int
    mu: float = 0.0
    sigma: float = 1.0
    epsilon: float = 0.05
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"synthetic matrix needs positive dimensions, got {self.rows}x{self.cols}")
        if self.sigma < 0 or self.epsilon < 0:
            raise ConfigError(f"sigma and epsilon must be non-negative, got {self.sigma}, {self.epsilon}")


def gen_synthetic(spec: SyntheticSpec, rng: Optional[np.random.Generator] = None) -> WeightTensor:
    """
    Draw w_ij = m_i + eta_ij with m_i ~ N(mu, sigma) and eta_ij ~ N(0, epsilon)

    Args:
        spec: Shape and distribution parameters
        rng: Generator to draw from; a fresh one seeded with spec.seed when omitted

    Returns:
        WeightTensor without bias
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    row_means = rng.normal(spec.mu, spec.sigma, size=(spec.rows, 1))
    noise = rng.normal(0.0, spec.epsilon, size=(spec.rows, spec.cols))
    values = row_means + noise
    logger.debug(f"Generated synthetic {spec.rows}x{spec.cols} tensor (sigma {spec.sigma}, epsilon {spec.epsilon})")
    return WeightTensor(values)
