import numpy as np
import pytest

from marginmine.evalsuite import precision_at_1
from marginmine.margin import ScoringConfig
from marginmine.records import MiningError
from marginmine.retrieval import forward_candidates
from marginmine.synthgen import SynthConfig, generate, placeholder_corpora, write_synthetic


def test_deterministic_for_seed():
    cfg = SynthConfig(n_pairs=30, n_distractors=10, dim=8, n_hubs=3, seed=5)
    a, b = generate(cfg), generate(cfg)
    assert a.src.data.tobytes() == b.src.data.tobytes()
    assert a.tgt.data.tobytes() == b.tgt.data.tobytes()
    c = generate(SynthConfig(n_pairs=30, n_distractors=10, dim=8, n_hubs=3, seed=6))
    assert c.src.data.tobytes() != a.src.data.tobytes()


def test_shapes_norms_and_gold():
    d = generate(SynthConfig(n_pairs=40, n_distractors=15, dim=12, n_hubs=5, seed=1))
    assert d.src.data.shape == (55, 12) and d.tgt.data.shape == (60, 12)
    assert d.src.data.dtype == np.float32 and d.src.normalized and d.tgt.normalized
    for m in (d.src.data, d.tgt.data):
        np.testing.assert_allclose(np.linalg.norm(m.astype(np.float64), axis=1), 1.0, atol=1e-6)
    assert d.gold.pairs == {(i, i) for i in range(40)}


def test_noise_zero_plants_exact_copies():
    d = generate(SynthConfig(n_pairs=25, n_distractors=5, dim=6, noise=0.0, n_hubs=0, seed=3))
    assert d.tgt.data[:25].tobytes() == d.src.data[:25].tobytes()


def test_hubs_sit_near_the_centroid():
    d = generate(SynthConfig(n_pairs=300, n_distractors=0, dim=16, n_hubs=10, seed=2))
    centroid = d.src.data.astype(np.float64).mean(axis=0)
    centroid /= np.linalg.norm(centroid)
    tgt = d.tgt.data.astype(np.float64)
    assert (tgt[300:] @ centroid).min() > (tgt[:300] @ centroid).mean()


def test_noiseless_fixture_is_perfect():
    d = generate(SynthConfig(n_pairs=200, n_distractors=0, noise=0.0, n_hubs=0, seed=11))
    fwd = forward_candidates(d.src, d.tgt, ScoringConfig())
    assert precision_at_1(fwd, d.gold) == 1.0


@pytest.mark.parametrize("kwargs", [dict(dim=1), dict(noise=-1), dict(n_hubs=-1), dict(hub_strength=1.5),
                                    dict(n_pairs=0, n_distractors=0), dict(anisotropy=-0.1)])
def test_invalid_configs(kwargs):
    with pytest.raises(MiningError):
        generate(SynthConfig(**kwargs))


def test_write_synthetic(tmp_path):
    d = generate(SynthConfig(n_pairs=3, n_distractors=1, dim=4, n_hubs=1, seed=0))
    paths = write_synthetic(d, tmp_path / "out")
    assert (tmp_path / "out" / "src.emb").stat().st_size == 4 * 4 * 4
    assert (tmp_path / "out" / "tgt.emb").stat().st_size == 5 * 4 * 4
    assert open(paths["gold.tsv"]).read() == "0\t0\n1\t1\n2\t2\n"
    assert open(paths["tgt.txt"]).read().splitlines()[-1] == "tgt-4"
    src_c, tgt_c = placeholder_corpora(d)
    assert len(src_c.sentences) == 4 and len(tgt_c.sentences) == 5
