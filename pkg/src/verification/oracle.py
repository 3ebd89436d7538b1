# -*- coding: utf-8 -*-
"""
Oracle Module

Exhaustive row-permutation search for the smallest tile-vs-unstructured loss
difference on small matrices, and the function-preservation harness that
compares a model with its reparameterized counterpart.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import OracleLimitError, TopologyError
from src.graph.model_graph import WeightGraph
from src.pruning.importance import ImportanceCriterion, MatrixLike, TileShape, element_scores
from src.pruning.loss import report_for_mask
from src.pruning.mask import PrunePlan
from src.pruning.pruner import prune_scores
from src.reparam.permutation import Permutation
from src.reparam.tiletrans import row_sort_permutation
from src.verification.evaluator import evaluate, random_input

logger = logging.getLogger(__name__)

MAX_ORACLE_ROWS = 8


def _difference(scores: np.ndarray, order: Sequence[int], plan: PrunePlan) -> float:
    permuted = {0: scores[list(order)]}
    return report_for_mask(permuted, prune_scores(permuted, plan)).difference


def _search(scores: np.ndarray, plan: PrunePlan, first: int) -> Tuple[Tuple[int, ...], float]:
    """Lexicographically first argmin among permutations starting with row `first`"""
    rest = [i for i in range(scores.shape[0]) if i != first]
    best_order: Tuple[int, ...] = ()
    best = math.inf
    for tail in itertools.permutations(rest):
        order = (first,) + tail
        value = _difference(scores, order, plan)
        if value < best:
            best, best_order = value, order
    return best_order, best


def brute_force_best_perm(w: MatrixLike,
                          t: TileShape,
                          s: float,
                          c: ImportanceCriterion = ImportanceCriterion.L1,
                          workers: Optional[int] = None) -> Tuple[Permutation, float]:
    """
    Try every row permutation and keep the one with the smallest loss difference

    Args:
        w: Weight matrix with at most MAX_ORACLE_ROWS rows
        t: Tile shape
        s: Sparsity
        c: Importance criterion
        workers: Threads to split the search over (by leading row); None or 1 runs serially

    Returns:
        (permutation, difference); ties resolve to the lexicographically first permutation
    """
    scores = element_scores(w, c)
    rows = scores.shape[0]
    if rows > MAX_ORACLE_ROWS:
        raise OracleLimitError(f"brute force is limited to {MAX_ORACLE_ROWS} rows, got {rows}")
    plan = PrunePlan(t, s, c)
    if rows == 0:
        return Permutation.identity(0), 0.0

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(lambda first: _search(scores, plan, first), range(rows)))
    else:
        partial = [_search(scores, plan, first) for first in range(rows)]

    best_order, best = partial[0]
    for order, value in partial[1:]:
        if value < best:
            best_order, best = order, value
    logger.debug(f"Brute force over {math.factorial(rows)} permutations: best {best_order} -> {best}")
    return Permutation(best_order), best


@dataclass(frozen=True)
class PermutationComparison:
    """Loss differences of the optimal, heuristic and identity row orders"""

    brute_force: float
    heuristic: float
    identity: float
    best: Permutation
    heuristic_permutation: Permutation

    @property
    def heuristic_gap(self) -> float:
        return self.heuristic - self.brute_force


def compare_permutations(w: MatrixLike,
                         t: TileShape,
                         s: float,
                         c: ImportanceCriterion = ImportanceCriterion.L1,
                         workers: Optional[int] = None) -> PermutationComparison:
    scores = element_scores(w, c)
    plan = PrunePlan(t, s, c)
    best, brute = brute_force_best_perm(w, t, s, c, workers)
    heuristic = row_sort_permutation([w], c)
    return PermutationComparison(
        brute_force=brute,
        heuristic=_difference(scores, heuristic.to_list(), plan),
        identity=_difference(scores, range(scores.shape[0]), plan),
        best=best,
        heuristic_permutation=heuristic,
    )


@dataclass(frozen=True)
class PreservationResult:
    samples: int
    max_abs_error: float
    max_rel_error: float
    rtol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.rtol


def check_function_preservation(original: WeightGraph,
                                transformed: WeightGraph,
                                samples: int = 100,
                                seed: int = 0,
                                rtol: float = 1e-5,
                                shape: Optional[Sequence[int]] = None) -> PreservationResult:
    """
    Evaluate two models on the same random inputs and compare their outputs

    The relative error of each output element is taken against the original's
    magnitude, floored at 1e-12 times the largest original output so that
    exact zeros do not divide by zero.

    Args:
        original: Reference model
        transformed: Candidate model with the same architecture
        samples: Number of random inputs
        seed: Input seed
        rtol: Relative tolerance for the pass verdict
        shape: Shape of one input sample; inferred when omitted

    Returns:
        PreservationResult
    """
    if original.structure_dict() != transformed.structure_dict():
        raise TopologyError("candidate model does not share the original's architecture")
    x = random_input(original, shape, samples, seed)
    expected = evaluate(original, x)
    actual = evaluate(transformed, x)

    error = np.abs(actual - expected)
    floor = 1e-12 * max(1.0, float(np.max(np.abs(expected))) if expected.size else 1.0)
    relative = error / np.maximum(np.abs(expected), floor)
    result = PreservationResult(
        samples=samples,
        max_abs_error=float(error.max()) if error.size else 0.0,
        max_rel_error=float(relative.max()) if relative.size else 0.0,
        rtol=rtol,
    )
    level = logging.INFO if result.passed else logging.WARNING
    logger.log(level, f"Function preservation over {samples} inputs: max relative error "
                      f"{result.max_rel_error:.3e} (rtol {rtol}) -> {'pass' if result.passed else 'FAIL'}")
    return result


def heuristic_win_rate(comparisons: List[PermutationComparison]) -> float:
    """Fraction of cases where the heuristic order loses no more than the identity order"""
    if not comparisons:
        return 0.0
    return sum(1 for c in comparisons if c.heuristic <= c.identity) / len(comparisons)
