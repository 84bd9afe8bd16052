"""Seeded synthetic bitext with planted translations and hub targets.

Randomness comes from numpy's PCG64 bit generator seeded with the integer
seed (``np.random.Generator(np.random.PCG64(seed))``), drawing standard
normals with numpy's ziggurat sampler. Draw order is fixed:

1. the shared offset direction,
2. source rows (planted, then distractors),
3. planted-pair noise,
4. target distractors,
5. the random part of each hub.

A "random unit vector" is ``normalize(g / sqrt(dim) + anisotropy * u)`` with
``g`` standard normal and ``u`` the shared unit offset. With ``anisotropy``
zero the vectors are isotropic; real sentence embeddings are not, and without
a common direction the source centroid is close to the origin, so hubs built
around it would not attract anything.

Target layout: planted translations ``0..n_pairs-1``, then distractors, then
hubs. Gold is the identity on the planted block.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from marginmine.embed_io import save_embeddings, write_gold
from marginmine.records import Corpus, EmbeddingMatrix, GoldAlignment, MiningError


@dataclass(frozen=True)
class SynthConfig:
    n_pairs: int = 1000
    n_distractors: int = 1000
    dim: int = 32
    noise: float = 0.8
    n_hubs: int = 20
    hub_strength: float = 0.9
    seed: int = 0
    anisotropy: float = 0.5

    def validate(self) -> None:
        if self.dim < 2:
            raise MiningError(f"dim must be >= 2, got {self.dim}")
        if self.n_pairs < 0 or self.n_distractors < 0 or self.n_hubs < 0:
            raise MiningError("counts must be non-negative")
        if self.n_pairs + self.n_distractors < 1:
            raise MiningError("need at least one source row")
        if self.n_pairs + self.n_distractors + self.n_hubs < 1:
            raise MiningError("need at least one target row")
        if self.noise < 0:
            raise MiningError(f"noise must be >= 0, got {self.noise}")
        if not 0.0 <= self.hub_strength <= 1.0:
            raise MiningError(f"hub_strength must be in [0, 1], got {self.hub_strength}")
        if self.anisotropy < 0:
            raise MiningError(f"anisotropy must be >= 0, got {self.anisotropy}")


class SyntheticBitext(NamedTuple):
    src: EmbeddingMatrix
    tgt: EmbeddingMatrix
    gold: GoldAlignment


def _unit(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


def generate(cfg: SynthConfig) -> SyntheticBitext:
    cfg.validate()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    dim = cfg.dim
    offset = _unit(rng.standard_normal(dim))

    def random_units(n: int) -> np.ndarray:
        g = rng.standard_normal((n, dim)) / np.sqrt(dim)
        return _unit(g + cfg.anisotropy * offset)

    src = random_units(cfg.n_pairs + cfg.n_distractors)
    perturbation = rng.standard_normal((cfg.n_pairs, dim)) / np.sqrt(dim)
    if cfg.noise == 0:
        # exact copies; re-normalizing would move the last bit
        planted = src[: cfg.n_pairs].copy()
    else:
        planted = _unit(src[: cfg.n_pairs] + cfg.noise * perturbation)
    distractors = random_units(cfg.n_distractors)
    centroid = src.mean(axis=0)
    hubs = random_units(cfg.n_hubs)
    if cfg.n_hubs:
        hubs = _unit(cfg.hub_strength * centroid + (1.0 - cfg.hub_strength) * hubs)
    tgt = np.vstack([planted, distractors, hubs])

    gold = GoldAlignment(frozenset((i, i) for i in range(cfg.n_pairs)))
    return SyntheticBitext(
        EmbeddingMatrix(src.astype(np.float32), normalized=True),
        EmbeddingMatrix(tgt.astype(np.float32), normalized=True),
        gold,
    )


def placeholder_corpora(data: SyntheticBitext) -> tuple[Corpus, Corpus]:
    return (
        Corpus(tuple(f"src-{i}" for i in range(data.src.rows))),
        Corpus(tuple(f"tgt-{i}" for i in range(data.tgt.rows))),
    )


def write_synthetic(data: SyntheticBitext, out_dir) -> dict[str, str]:
    """Write src.emb, tgt.emb, src.txt, tgt.txt and gold.tsv into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name)
             for name in ("src.emb", "tgt.emb", "src.txt", "tgt.txt", "gold.tsv")}
    save_embeddings(data.src, paths["src.emb"])
    save_embeddings(data.tgt, paths["tgt.emb"])
    for corpus, key in zip(placeholder_corpora(data), ("src.txt", "tgt.txt")):
        with open(paths[key], "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(s + "\n" for s in corpus.sentences)
    write_gold(data.gold, paths["gold.tsv"])
    return paths
