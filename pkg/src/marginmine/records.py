"""Plain data records shared across the mining pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class MiningError(ValueError):
    """Base class for data and format errors raised by marginmine."""


class EmbeddingFormatError(MiningError):
    pass


class ZeroNormRowError(MiningError):
    def __init__(self, rows):
        self.rows = [int(r) for r in rows]
        shown = ", ".join(str(r) for r in self.rows[:20])
        more = "" if len(self.rows) <= 20 else f" (+{len(self.rows) - 20} more)"
        super().__init__(f"zero-norm embedding row(s): {shown}{more}")

    @property
    def row(self) -> int:
        return self.rows[0]


class DimensionMismatchError(MiningError):
    pass


class DegenerateNeighborhoodError(MiningError):
    """Ratio margin requested for a pair whose neighborhood mean is zero."""


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Dense row-major float32 matrix; row ``i`` embeds sentence ``i``.

    ``excluded`` lists all-zero rows admitted by a permissive load. They stay
    in place so row indices keep lining up with the sentence file, but they
    never take part in neighbor search or candidate generation.
    """

    data: np.ndarray
    normalized: bool = False
    excluded: tuple[int, ...] = ()

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise EmbeddingFormatError(
                f"embedding matrix must be 2-D with at least one row and column, got shape {data.shape}"
            )
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "excluded", tuple(sorted(int(i) for i in self.excluded)))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def active_mask(self) -> np.ndarray:
        mask = np.ones(self.rows, dtype=bool)
        if self.excluded:
            mask[list(self.excluded)] = False
        return mask

    def scaled(self, factor: float) -> "EmbeddingMatrix":
        return EmbeddingMatrix(self.data * np.float32(factor), normalized=False, excluded=self.excluded)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[str, ...]
    ids: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(self.ids))
            if len(self.ids) != len(self.sentences):
                raise MiningError(
                    f"corpus has {len(self.sentences)} sentences but {len(self.ids)} ids"
                )

    def __len__(self) -> int:
        return len(self.sentences)

    def id_index(self) -> dict[str, int]:
        if self.ids is None:
            raise MiningError("corpus carries no ids")
        return {ident: i for i, ident in enumerate(self.ids)}


@dataclass(frozen=True)
class GoldAlignment:
    pairs: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset((int(s), int(t)) for s, t in self.pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair) -> bool:
        return pair in self.pairs

    def __iter__(self):
        return iter(sorted(self.pairs))


@dataclass(frozen=True, slots=True)
class CandidatePair:
    """A mined pair. ``origin`` is "fwd", "bwd", "both", or None when read back from disk."""

    src: int
    tgt: int
    score: float
    origin: Optional[str] = None

    @property
    def key(self) -> tuple[int, int]:
        return (self.src, self.tgt)
