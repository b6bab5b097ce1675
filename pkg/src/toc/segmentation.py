"""Merge adjacent shots into clips by embedding similarity.

A single left-to-right pass keeps a running clip and folds the next shot in
whenever the cosine between the clip's pooled embedding and the shot's
embedding clears the threshold.  Pooling is a duration-weighted mean of unit
vectors, re-normalized, so a long shot pulls the running direction harder
than a short one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError, ZeroVectorError
from .records import Clip

DEFAULT_TAU = 0.85


@dataclass(frozen=True)
class ShotBoundarySet:
    """One video's detector output: cut times plus one embedding per shot.

    boundaries_s runs from 0 to the video duration; shot i spans
    [boundaries_s[i], boundaries_s[i+1]).
    """

    video_id: str
    boundaries_s: tuple[float, ...]
    embeddings: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if len(self.boundaries_s) < 2:
            raise EmptyInputError(
                f"need at least 2 boundaries for one shot, got {len(self.boundaries_s)}"
            )
        if self.boundaries_s[0] != 0.0:
            raise ValueError(f"boundaries must start at 0, got {self.boundaries_s[0]}")
        if any(b <= a for a, b in zip(self.boundaries_s, self.boundaries_s[1:])):
            raise ValueError(f"boundaries must strictly increase: {self.boundaries_s}")
        if len(self.embeddings) != len(self.boundaries_s) - 1:
            raise ValueError(
                f"{len(self.boundaries_s) - 1} shots but {len(self.embeddings)} embeddings"
            )
        dim = len(self.embeddings[0])
        if dim < 1:
            raise DimensionMismatchError("embeddings must have at least 1 dimension")
        for pos, emb in enumerate(self.embeddings):
            if len(emb) != dim:
                raise DimensionMismatchError(
                    f"shot {pos} embedding has {len(emb)} dims, expected {dim}"
                )

    @property
    def shot_count(self) -> int:
        return len(self.embeddings)

    def shot_span(self, i: int) -> tuple[float, float]:
        return self.boundaries_s[i], self.boundaries_s[i + 1]

    def shot_duration(self, i: int) -> float:
        return self.boundaries_s[i + 1] - self.boundaries_s[i]

    def to_record(self) -> dict:
        return {
            "video_id": self.video_id,
            "boundaries_s": list(self.boundaries_s),
            "embeddings": [list(e) for e in self.embeddings],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ShotBoundarySet":
        return cls(
            video_id=rec["video_id"],
            boundaries_s=tuple(float(b) for b in rec["boundaries_s"]),
            embeddings=tuple(tuple(float(v) for v in e) for e in rec["embeddings"]),
        )


def _unit(vec: np.ndarray, where: str) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if not np.isfinite(norm) or norm == 0.0:
        raise ZeroVectorError(f"{where} has no direction (norm {norm})")
    return vec / norm


class _RunningClip:
    """Shot range merged so far plus its pooled direction."""

    def __init__(self, shots: ShotBoundarySet, first: int, unit_vec: np.ndarray) -> None:
        self.shots = shots
        self.first = first
        self.last = first
        self.weighted_sum = shots.shot_duration(first) * unit_vec

    def pooled_unit(self) -> np.ndarray:
        return _unit(self.weighted_sum, "pooled clip embedding")

    def absorb(self, shot_index: int, unit_vec: np.ndarray) -> None:
        self.last = shot_index
        self.weighted_sum = self.weighted_sum + self.shots.shot_duration(shot_index) * unit_vec

    def to_clip(self, index: int) -> Clip:
        return Clip(
            video_id=self.shots.video_id,
            index=index,
            start_s=self.shots.boundaries_s[self.first],
            end_s=self.shots.boundaries_s[self.last + 1],
            embedding=tuple(float(v) for v in self.pooled_unit()),
        )


def stitch(shots: ShotBoundarySet, tau: float = DEFAULT_TAU) -> list[Clip]:
    """Greedily merge the shot sequence into clips indexed 0..N-1."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    units = [
        _unit(np.asarray(emb, dtype=float), f"shot {pos} embedding")
        for pos, emb in enumerate(shots.embeddings)
    ]
    merged: list[_RunningClip] = []
    current = _RunningClip(shots, 0, units[0])
    for pos in range(1, shots.shot_count):
        similarity = float(np.dot(current.pooled_unit(), units[pos]))
        if similarity >= tau:
            current.absorb(pos, units[pos])
        else:
            merged.append(current)
            current = _RunningClip(shots, pos, units[pos])
    merged.append(current)
    return [running.to_clip(index) for index, running in enumerate(merged)]
