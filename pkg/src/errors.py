# -*- coding: utf-8 -*-
"""
Exception hierarchy shared by every tilewise module.

Each exception class carries the process exit code the command-line driver
reports when the error aborts a run.
"""

from typing import Optional


class TilewiseError(Exception):
    """Base exception for tilewise errors"""

    exit_code = 4

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self) -> str:
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class ConfigError(TilewiseError):
    """Invalid run configuration or command-line flags"""

    exit_code = 2


class DataError(TilewiseError):
    """Problems with model, mask, or plan data"""

    exit_code = 3


class ManifestParseError(DataError):
    """Malformed manifest or unsupported format version"""
    pass


class ShapeError(DataError):
    """Tensor, blob, or mask dimensions do not line up"""
    pass


class TopologyError(DataError):
    """Cycles, dangling edges, unreachable nodes, or width mismatches"""
    pass


class OracleLimitError(DataError):
    """Exhaustive search requested beyond its row limit"""
    pass


class InvariantError(TilewiseError):
    """Internal invariant violation"""

    exit_code = 4
