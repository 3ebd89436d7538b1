# -*- coding: utf-8 -*-
"""
Run Configuration Module

Parses and validates everything a pipeline run needs: model paths, tile
shapes, sparsity lists or ranges, criterion, transform mode, output paths and
the seed. Thread limits come from the TILEWISE_THREADS environment variable.
"""

import logging
import os
from dataclasses import asdict, dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.errors import ConfigError
from src.pruning.importance import ACCELERATOR_TILE_SHAPES, ImportanceCriterion, TileShape

logger = logging.getLogger(__name__)

THREADS_ENV = "TILEWISE_THREADS"
TRANSFORM_MODES = ("none", "row", "column")
TILE_PRESETS = {"accelerator": ACCELERATOR_TILE_SHAPES}


def parse_tiles(text: str) -> List[TileShape]:
    """Parse 'AxB', a comma list of them, or a preset name"""
    text = str(text).strip().lower()
    if text in TILE_PRESETS:
        return list(TILE_PRESETS[text])
    shapes = [TileShape.parse(part) for part in text.split(",") if part.strip()]
    if not shapes:
        raise ConfigError("no tile shape given")
    return shapes


def _decimal(text: str) -> Decimal:
    try:
        return Decimal(text.strip())
    except InvalidOperation:
        raise ConfigError(f"not a number: {text!r}") from None


def parse_sparsities(text: str) -> List[float]:
    """
    Parse a sparsity list "0.1,0.5" or an inclusive range "START:STOP:STEP"

    Range values are generated in decimal arithmetic, so "0:1:0.1" yields
    exactly 0.0, 0.1, ..., 1.0.

    Returns:
        Sorted, de-duplicated sparsities, each within [0, 1]
    """
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"sparsity range must look like START:STOP:STEP, got {text!r}")
        start, stop, step = (_decimal(p) for p in parts)
        if step <= 0:
            raise ConfigError(f"sparsity step must be positive, got {step}")
        values = []
        current = start
        while current <= stop:
            values.append(round(float(current), 10))
            current += step
    else:
        values = [round(float(_decimal(p)), 10) for p in text.split(",") if p.strip()]

    if not values:
        raise ConfigError(f"no sparsity values in {text!r}")
    for value in values:
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"sparsity must lie in [0, 1], got {value}")
    return sorted(set(values))


def parse_shape(text: Optional[str]) -> Optional[Tuple[int, ...]]:
    if text is None or not str(text).strip():
        return None
    try:
        shape = tuple(int(part) for part in str(text).split(","))
    except ValueError:
        raise ConfigError(f"input shape must be comma-separated integers, got {text!r}") from None
    if any(d < 1 for d in shape):
        raise ConfigError(f"input shape dimensions must be positive, got {text!r}")
    return shape


def thread_count(environ: Optional[Dict[str, str]] = None) -> int:
    """Worker threads allowed by TILEWISE_THREADS (default 1)"""
    environ = os.environ if environ is None else environ
    raw = environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return threads


@dataclass
class RunConfig:
    """Validated configuration of one CLI run"""

    command: str
    model: str
    tiles: List[TileShape] = field(default_factory=lambda: [TileShape(16, 16)])
    sparsities: List[float] = field(default_factory=lambda: [0.5])
    criterion: ImportanceCriterion = ImportanceCriterion.L1
    transform: str = "none"
    report: Optional[str] = None
    mask_out: Optional[str] = None
    model_out: Optional[str] = None
    plan_out: Optional[str] = None
    plan_in: Optional[str] = None
    candidate: Optional[str] = None
    summary: Optional[str] = None
    per_layer: bool = False
    samples: int = 100
    rtol: float = 1e-5
    input_shape: Optional[Tuple[int, ...]] = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not self.model:
            raise ConfigError("--model is required")
        self.criterion = ImportanceCriterion.parse(self.criterion)
        if self.transform not in TRANSFORM_MODES:
            raise ConfigError(f"unknown transform mode {self.transform!r} (choose from {', '.join(TRANSFORM_MODES)})")
        if not self.tiles:
            raise ConfigError("at least one tile shape is required")
        if not self.sparsities:
            raise ConfigError("at least one sparsity is required")
        if any(not 0.0 <= s <= 1.0 for s in self.sparsities):
            raise ConfigError(f"sparsities must lie in [0, 1], got {self.sparsities}")
        if self.samples < 1:
            raise ConfigError(f"--samples must be positive, got {self.samples}")
        if self.rtol <= 0:
            raise ConfigError(f"--rtol must be positive, got {self.rtol}")
        if self.threads < 1:
            raise ConfigError(f"thread count must be positive, got {self.threads}")

        if self.command == "prune" and len(self.sparsities) != 1:
            raise ConfigError("prune takes a single sparsity")
        if self.command == "prune" and len(self.tiles) != 1:
            raise ConfigError("prune takes a single tile shape")
        if self.command == "sweep" and not self.report:
            raise ConfigError("sweep needs --report")
        if self.command == "verify" and not self.candidate:
            raise ConfigError("verify needs --candidate")
        if self.command == "transform" and self.transform != "none" and not self.model_out:
            raise ConfigError("transform needs --model-out")

    @property
    def tile_shape(self) -> TileShape:
        return self.tiles[0]

    @property
    def sparsity(self) -> float:
        return self.sparsities[0]

    @classmethod
    def from_args(cls, args: Any, environ: Optional[Dict[str, str]] = None) -> "RunConfig":
        """Build from an argparse namespace"""
        get = lambda name, default=None: getattr(args, name, default)  # noqa: E731
        return cls(
            command=args.command,
            model=get("model"),
            tiles=parse_tiles(get("tile") or "16x16"),
            sparsities=parse_sparsities(get("sparsity") or "0.5"),
            criterion=get("criterion") or "l1",
            transform=get("transform") or "none",
            report=get("report"),
            mask_out=get("mask_out"),
            model_out=get("model_out"),
            plan_out=get("plan_out"),
            plan_in=get("plan_in"),
            candidate=get("candidate"),
            summary=get("summary"),
            per_layer=bool(get("per_layer", False)),
            samples=int(get("samples") or 100),
            rtol=float(get("rtol") or 1e-5),
            input_shape=parse_shape(get("input_shape")),
            seed=int(get("seed") or 0),
            threads=thread_count(environ),
        )

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> "RunConfig":
        """Build from a plain dict; tiles and sparsities may be strings or lists"""
        config = dict(config)
        tiles = config.pop("tiles", config.pop("tile", "16x16"))
        if isinstance(tiles, str):
            tiles = parse_tiles(tiles)
        else:
            tiles = [t if isinstance(t, TileShape) else TileShape.parse(t) for t in tiles]
        sparsities = config.pop("sparsities", config.pop("sparsity", "0.5"))
        if isinstance(sparsities, str):
            sparsities = parse_sparsities(sparsities)
        elif isinstance(sparsities, (int, float)):
            sparsities = [float(sparsities)]
        else:
            sparsities = sorted({round(float(s), 10) for s in sparsities})
        shape = config.pop("input_shape", None)
        if isinstance(shape, str):
            shape = parse_shape(shape)
        elif shape is not None:
            shape = tuple(int(d) for d in shape)
        try:
            return cls(tiles=tiles, sparsities=sparsities, input_shape=shape, **config)
        except TypeError as e:
            raise ConfigError(f"invalid run configuration: {e}") from None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["tiles"] = [str(t) for t in self.tiles]
        data["criterion"] = self.criterion.value
        data["input_shape"] = list(self.input_shape) if self.input_shape else None
        return data


def describe(config: RunConfig, keys: Sequence[str] = ("command", "model", "tiles", "sparsities",
                                                        "criterion", "transform", "seed", "threads")) -> str:
    data = config.to_dict()
    return ", ".join(f"{key}={data[key]}" for key in keys)
