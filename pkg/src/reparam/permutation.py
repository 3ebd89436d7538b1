# -*- coding: utf-8 -*-
"""
Row permutations used as function-preserving reparameterizations.

forward[i] is the source index placed at destination i, so applying a
permutation to a matrix is the gather m[forward].
"""

from typing import Iterable, List, Union

import numpy as np

from src.errors import InvariantError, ShapeError


class Permutation:
    """A bijection on {0, ..., n-1}"""

    def __init__(self, forward: Union[Iterable[int], np.ndarray]):
        forward = np.array(list(forward) if not isinstance(forward, np.ndarray) else forward,
                           dtype=np.int64)
        if forward.ndim != 1:
            raise InvariantError(f"permutation must be 1-dimensional, got shape {forward.shape}")
        if not np.array_equal(np.sort(forward), np.arange(forward.size)):
            raise InvariantError(f"not a bijection on 0..{forward.size - 1}: {forward.tolist()}")
        forward.flags.writeable = False
        self.forward = forward

    @classmethod
    def identity(cls, size: int) -> "Permutation":
        return cls(np.arange(size))

    @classmethod
    def descending(cls, keys: np.ndarray) -> "Permutation":
        """Order indices by descending key; equal keys keep ascending index order"""
        keys = np.asarray(keys, dtype=np.float64)
        return cls(np.argsort(-keys, kind="stable"))

    @property
    def size(self) -> int:
        return int(self.forward.size)

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.forward, np.arange(self.size)))

    def inverse(self) -> "Permutation":
        return Permutation(np.argsort(self.forward, kind="stable"))

    def expand(self, block: int) -> "Permutation":
        """Permutation over n * block indices that moves whole contiguous blocks"""
        if block == 1:
            return self
        offsets = np.arange(block, dtype=np.int64)
        return Permutation((self.forward[:, None] * block + offsets[None, :]).ravel())

    def permute_rows(self, matrix: np.ndarray) -> np.ndarray:
        if matrix.shape[0] != self.size:
            raise ShapeError(f"cannot permute {matrix.shape[0]} rows with a size-{self.size} permutation")
        return matrix[self.forward]

    def permute_cols(self, matrix: np.ndarray, block: int = 1) -> np.ndarray:
        if matrix.shape[1] != self.size * block:
            raise ShapeError(f"cannot permute {matrix.shape[1]} columns in blocks of {block} "
                             f"with a size-{self.size} permutation")
        return matrix[:, self.expand(block).forward]

    def permute_vector(self, vector: np.ndarray, block: int = 1) -> np.ndarray:
        if vector.shape[0] != self.size * block:
            raise ShapeError(f"cannot permute a length-{vector.shape[0]} vector in blocks of {block} "
                             f"with a size-{self.size} permutation")
        return vector[self.expand(block).forward]

    def to_list(self) -> List[int]:
        return [int(i) for i in self.forward]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.forward, other.forward)

    def __hash__(self) -> int:
        return hash(self.forward.tobytes())

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        shown = self.to_list() if self.size <= 12 else self.to_list()[:12] + ["..."]
        return f"Permutation({shown})"
