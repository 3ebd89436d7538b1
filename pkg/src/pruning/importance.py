# -*- coding: utf-8 -*-
"""
Importance Score Module

Element-level importance criteria and their aggregation into per-tile mean
scores. All scores are float64 so that sums are stable however the rows of a
weight matrix are later reordered.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from src.errors import ConfigError, ShapeError
from src.graph.model_graph import WeightGraph, WeightTensor

logger = logging.getLogger(__name__)

MatrixLike = Union[WeightTensor, np.ndarray]
ScoreSet = Dict[int, np.ndarray]


class ImportanceCriterion(str, Enum):
    """Magnitude-based importance criteria"""

    L1 = "l1"
    L2 = "l2"

    @classmethod
    def parse(cls, value: Union[str, "ImportanceCriterion"]) -> "ImportanceCriterion":
        try:
            return cls(value)
        except ValueError:
            choices = ", ".join(c.value for c in cls)
            raise ConfigError(f"unknown importance criterion {value!r} (choose from {choices})") from None

    def score(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if self == ImportanceCriterion.L1:
            return np.abs(values)
        return np.square(values)


@dataclass(frozen=True)
class TileShape:
    """Tile height a (rows) by width b (columns)"""

    a: int
    b: int

    def __post_init__(self):
        if int(self.a) < 1 or int(self.b) < 1:
            raise ConfigError(f"tile dimensions must be at least 1, got {self.a}x{self.b}")
        object.__setattr__(self, "a", int(self.a))
        object.__setattr__(self, "b", int(self.b))

    @classmethod
    def parse(cls, text: str) -> "TileShape":
        """Parse an 'AxB' string such as '16x16' or '256x1'"""
        parts = str(text).strip().lower().split("x")
        if len(parts) != 2:
            raise ConfigError(f"tile shape must look like AxB, got {text!r}")
        try:
            return cls(int(parts[0]), int(parts[1]))
        except ValueError:
            raise ConfigError(f"tile shape must look like AxB, got {text!r}") from None

    @property
    def area(self) -> int:
        return self.a * self.b

    def grid_dims(self, rows: int, cols: int) -> Tuple[int, int]:
        return -(-rows // self.a), -(-cols // self.b)

    def expand(self, tile_values: np.ndarray, rows: int, cols: int) -> np.ndarray:
        """Spread a per-tile array over a rows x cols matrix, truncating edge tiles"""
        tile_values = np.asarray(tile_values)
        if tile_values.shape != self.grid_dims(rows, cols):
            raise ShapeError(f"tile array {tile_values.shape} does not match grid "
                             f"{self.grid_dims(rows, cols)}")
        spread = np.repeat(np.repeat(tile_values, self.a, axis=0), self.b, axis=1)
        return spread[:rows, :cols]

    def __str__(self) -> str:
        return f"{self.a}x{self.b}"


UNSTRUCTURED = TileShape(1, 1)
ACCELERATOR_TILE_SHAPES = (TileShape(256, 1), TileShape(16, 16), TileShape(32, 32))


@dataclass(frozen=True)
class Tile:
    tile_row: int
    tile_col: int
    row_range: Tuple[int, int]
    col_range: Tuple[int, int]
    count: int
    mean: float


@dataclass(frozen=True, eq=False)
class TileGrid:
    """Partition of a score matrix into a x b tiles (edge tiles may be smaller)"""

    rows: int
    cols: int
    shape: TileShape
    sums: np.ndarray
    counts: np.ndarray

    @property
    def grid_rows(self) -> int:
        return int(self.sums.shape[0])

    @property
    def grid_cols(self) -> int:
        return int(self.sums.shape[1])

    @property
    def num_tiles(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def means(self) -> np.ndarray:
        return self.sums / self.counts

    def tiles(self) -> List[Tile]:
        """Row-major list of tiles with their extents and mean scores"""
        means = self.means
        result = []
        for r in range(self.grid_rows):
            for c in range(self.grid_cols):
                r0, c0 = r * self.shape.a, c * self.shape.b
                result.append(Tile(
                    tile_row=r,
                    tile_col=c,
                    row_range=(r0, min(r0 + self.shape.a, self.rows)),
                    col_range=(c0, min(c0 + self.shape.b, self.cols)),
                    count=int(self.counts[r, c]),
                    mean=float(means[r, c]),
                ))
        return result

    def expand(self, tile_values: np.ndarray) -> np.ndarray:
        """Spread a per-tile array over each tile's element extent"""
        return self.shape.expand(tile_values, self.rows, self.cols)


def _as_matrix(w: MatrixLike) -> np.ndarray:
    data = w.data if isinstance(w, WeightTensor) else np.asarray(w)
    if data.ndim != 2:
        raise ShapeError(f"expected a 2D weight matrix, got shape {data.shape}")
    return data


def element_scores(w: MatrixLike, criterion: ImportanceCriterion = ImportanceCriterion.L1) -> np.ndarray:
    """Importance score of every element of a weight matrix, as float64"""
    return ImportanceCriterion.parse(criterion).score(_as_matrix(w))


def tile_scores(scores: np.ndarray, shape: TileShape) -> TileGrid:
    """
    Aggregate an element score matrix into tiles

    Args:
        scores: 2D element scores
        shape: Tile shape

    Returns:
        TileGrid with ceil(rows/a) x ceil(cols/b) tiles; each mean divides by the
        tile's true element count
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ShapeError(f"expected a 2D score matrix, got shape {scores.shape}")
    rows, cols = scores.shape
    grid_rows, grid_cols = shape.grid_dims(rows, cols)
    if rows == 0 or cols == 0:
        empty = np.zeros((grid_rows, grid_cols))
        return TileGrid(rows, cols, shape, empty, empty.astype(np.int64))

    row_starts = np.arange(0, rows, shape.a)
    col_starts = np.arange(0, cols, shape.b)
    sums = np.add.reduceat(np.add.reduceat(scores, row_starts, axis=0), col_starts, axis=1)
    row_sizes = np.diff(np.append(row_starts, rows))
    col_sizes = np.diff(np.append(col_starts, cols))
    counts = np.outer(row_sizes, col_sizes).astype(np.int64)
    return TileGrid(rows, cols, shape, sums, counts)


def score_set(source: Any, criterion: ImportanceCriterion = ImportanceCriterion.L1) -> ScoreSet:
    """
    Element scores for a set of weight matrices

    Args:
        source: A WeightGraph, a mapping of layer id to matrix, or a sequence of matrices
            (keyed by position)
        criterion: Importance criterion

    Returns:
        Ordered mapping of layer id to float64 score matrix
    """
    if isinstance(source, WeightGraph):
        items: Sequence[Tuple[int, MatrixLike]] = list(source.weights().items())
    elif isinstance(source, Mapping):
        items = list(source.items())
    elif isinstance(source, WeightTensor) or (isinstance(source, np.ndarray) and source.ndim == 2):
        items = [(0, source)]
    else:
        items = list(enumerate(source))
    return {int(layer_id): element_scores(w, criterion) for layer_id, w in items}
