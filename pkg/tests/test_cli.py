import os
import subprocess
import sys

import numpy as np
import pytest

from marginmine.cli import main
from marginmine.embed_io import save_embeddings
from marginmine.synthgen import SynthConfig, generate, write_synthetic


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    cfg = SynthConfig(n_pairs=120, n_distractors=60, dim=16, noise=0.6, n_hubs=6, seed=3)
    write_synthetic(generate(cfg), out)
    return out


@pytest.fixture
def identity(tmp_path):
    eye = np.eye(4, dtype=np.float32)
    save_embeddings(eye, tmp_path / "a.emb")
    save_embeddings(eye, tmp_path / "b.emb")
    return tmp_path


def emb_args(d, dim=16):
    return ["--src-emb", d / "src.emb", "--tgt-emb", d / "tgt.emb", "--dim", dim]


def test_mine_top_n(synth_dir, tmp_path):
    out = tmp_path / "c.tsv"
    assert run("mine", *emb_args(synth_dir), "--top-n", 10, "-o", out) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 10
    scores = [float(line.split("\t")[0]) for line in lines]
    assert scores == sorted(scores, reverse=True)


def test_mine_absolute_forward_identity(identity):
    out = identity / "c.tsv"
    assert run("mine", "--src-emb", identity / "a.emb", "--tgt-emb", identity / "b.emb", "--dim", 4,
               "--margin", "absolute", "--retrieval", "fwd", "--threshold", 0, "-o", out) == 0
    assert out.read_text() == "".join(f"1.000000\t{i}\t{i}\n" for i in range(4))


def test_mine_threshold_above_everything(synth_dir, tmp_path, capsys):
    out = tmp_path / "c.tsv"
    assert run("mine", *emb_args(synth_dir), "--threshold", 1e9, "-o", out) == 0
    assert out.read_bytes() == b""
    assert "kept 0 pairs" in capsys.readouterr().err


def test_mine_with_ids(synth_dir, tmp_path):
    for side in ("src", "tgt"):
        lines = (synth_dir / f"{side}.txt").read_text().splitlines()
        (tmp_path / f"{side}.ids").write_text("".join(f"{side.upper()}{i}\t{s}\n" for i, s in enumerate(lines)))
    out = tmp_path / "c.tsv"
    assert run("mine", *emb_args(synth_dir), "--src-text", tmp_path / "src.ids", "--tgt-text", tmp_path / "tgt.ids",
               "--ids", "--top-n", 3, "-o", out) == 0
    first = out.read_text().splitlines()[0].split("\t")
    assert first[1].startswith("SRC") and first[2].startswith("TGT")


def test_eval_and_optimize(synth_dir, tmp_path, capsys):
    cands = tmp_path / "c.tsv"
    run("mine", *emb_args(synth_dir), "--threshold", -1e9, "-o", cands)
    capsys.readouterr()
    assert run("eval", "--candidates", cands, "--gold", synth_dir / "gold.tsv") == 0
    plain = capsys.readouterr().out.splitlines()[-1].split("\t")
    assert plain[3] == "NA" and plain[6] == "120"
    assert run("eval", "--candidates", cands, "--gold", synth_dir / "gold.tsv", "--optimize-threshold") == 0
    tuned = capsys.readouterr().out.splitlines()[-1].split("\t")
    assert float(tuned[2]) >= float(plain[2])
    assert tuned[3] != "NA"


def test_eval_fixture_counts(tmp_path, capsys):
    (tmp_path / "c.tsv").write_text("0.9\t0\t0\n0.8\t1\t1\n0.7\t2\t5\n")
    (tmp_path / "g.tsv").write_text("0\t0\n1\t1\n2\t2\n3\t3\n")
    assert run("eval", "--candidates", tmp_path / "c.tsv", "--gold", tmp_path / "g.tsv") == 0
    assert capsys.readouterr().out.splitlines()[-1] == "0.666667\t0.500000\t0.571429\tNA\t2\t3\t4"


def test_eval_malformed_candidates(tmp_path, capsys):
    (tmp_path / "c.tsv").write_text("0.9\t0\t0\nbroken\n")
    (tmp_path / "g.tsv").write_text("0\t0\n")
    assert run("eval", "--candidates", tmp_path / "c.tsv", "--gold", tmp_path / "g.tsv") == 2
    assert "c.tsv:2:" in capsys.readouterr().err


def test_eval_grid(synth_dir, capsys):
    assert run("eval", "--grid", *emb_args(synth_dir), "--gold", synth_dir / "gold.tsv") == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 13 and out[0].startswith("margin")


def test_reconstruct(identity, capsys):
    args = ["reconstruct", "--src-emb", identity / "a.emb", "--tgt-emb", identity / "b.emb", "--dim", 4]
    assert run(*args) == 0
    assert capsys.readouterr().out.strip() == "P@1\t1.000000"
    (identity / "shift.tsv").write_text("".join(f"{i}\t{(i + 1) % 4}\n" for i in range(4)))
    assert run(*args, "--gold", identity / "shift.tsv") == 0
    assert capsys.readouterr().out.strip() == "P@1\t0.000000"


def test_score_pairs_and_aligned(tmp_path):
    save_embeddings(np.array([[1, 0]], dtype=np.float32), tmp_path / "a.emb")
    save_embeddings(np.array([[1, 0]], dtype=np.float32), tmp_path / "b.emb")
    (tmp_path / "p.tsv").write_text("0\t0\n")
    base = ["score", "--src-emb", tmp_path / "a.emb", "--tgt-emb", tmp_path / "b.emb", "--dim", 2, "--k", 1]
    assert run(*base, "--pairs", tmp_path / "p.tsv", "-o", tmp_path / "s.tsv") == 0
    assert (tmp_path / "s.tsv").read_text() == "1.000000\t0\t0\n"
    (tmp_path / "a.txt").write_text("hello\n")
    (tmp_path / "b.txt").write_text("bonjour\n")
    assert run(*base, "--aligned", "--src-text", tmp_path / "a.txt", "--tgt-text", tmp_path / "b.txt",
               "-o", tmp_path / "t.tsv") == 0
    assert (tmp_path / "t.tsv").read_text() == "1.000000\thello\tbonjour\n"


def test_score_keeps_input_order_and_batch_size(synth_dir, tmp_path):
    rng = np.random.default_rng(0)
    (tmp_path / "p.tsv").write_text("".join(f"{s}\t{t}\n" for s, t in rng.integers(0, 180, (50, 2))))
    outs = []
    for batch in (None, 7):
        out = tmp_path / f"s{batch}.tsv"
        extra = [] if batch is None else ["--batch-size", batch]
        assert run("score", *emb_args(synth_dir), "--pairs", tmp_path / "p.tsv", *extra, "-o", out) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    pairs = [line.split("\t")[1:] for line in outs[0].decode().splitlines()]
    assert pairs == [line.split("\t") for line in (tmp_path / "p.tsv").read_text().splitlines()]


def test_filter_subcommand(tmp_path):
    (tmp_path / "c.tsv").write_text("0.900000\t0\t0\n0.700000\t2\t2\n0.500000\t1\t1\n")
    assert run("filter", "--candidates", tmp_path / "c.tsv", "--threshold", 0.6, "-o", tmp_path / "f.tsv") == 0
    assert (tmp_path / "f.tsv").read_text() == "0.900000\t0\t0\n0.700000\t2\t2\n"
    assert run("filter", "--candidates", tmp_path / "c.tsv", "-o", tmp_path / "g.tsv") == 1


def test_prefilter_subcommand(tmp_path):
    (tmp_path / "in.tsv").write_text("a b c\td e f\na b c\td e f\nhi\tthere you go\n")
    assert run("prefilter", "--tsv", tmp_path / "in.tsv", "--out-tsv", tmp_path / "out.tsv",
               "--stats", tmp_path / "stats.tsv") == 0
    assert (tmp_path / "out.tsv").read_text() == "a b c\td e f\n"
    stats = dict(line.split("\t") for line in (tmp_path / "stats.tsv").read_text().splitlines())
    assert stats["duplicate"] == "1" and stats["too_short"] == "1"


def test_prefilter_split_files_and_tags(tmp_path):
    (tmp_path / "s.txt").write_text("a b c\nx y z\n")
    (tmp_path / "t.txt").write_text("d e f\np q r\n")
    (tmp_path / "tags").write_text("en\tfr\nen\tde\n")
    assert run("prefilter", "--src-text", tmp_path / "s.txt", "--tgt-text", tmp_path / "t.txt",
               "--lang-tags", tmp_path / "tags", "--src-lang", "en", "--tgt-lang", "fr",
               "--out-src", tmp_path / "os.txt", "--out-tgt", tmp_path / "ot.txt", "--stats", tmp_path / "st") == 0
    assert (tmp_path / "os.txt").read_text() == "a b c\n"
    assert "lang_mismatch\t1" in (tmp_path / "st").read_text()


def test_synth_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("synth", "--seed", 9, "--n-pairs", 20, "--n-distractors", 5, "--dim", 8,
                   "--out-dir", tmp_path / name) == 0
    for f in ("src.emb", "tgt.emb", "src.txt", "tgt.txt", "gold.tsv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_exit_codes(synth_dir, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("mine", "--dim", 16)
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run("synth", "--out-dir", tmp_path)
    assert exc.value.code == 1
    # 180 rows x 16 floats is not a whole number of 7-float rows
    assert run("mine", *emb_args(synth_dir, dim=7), "-o", tmp_path / "c.tsv") == 2
    assert run("mine", "--src-emb", tmp_path / "missing", "--tgt-emb", tmp_path / "missing", "--dim", 4,
               "-o", tmp_path / "c.tsv") == 2
    assert run("synth", "--seed", 1, "--dim", 1, "--out-dir", tmp_path / "x") == 1


def test_module_entry_point_and_threads_env(synth_dir, tmp_path):
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"c{threads}.tsv"
        env = dict(os.environ, MARGINMINE_THREADS=threads)
        subprocess.run([sys.executable, "-m", "marginmine", "mine", *map(str, emb_args(synth_dir)),
                        "--block-size", "17", "-o", str(out)], env=env, check=True, capture_output=True)
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] and outs[0]


def test_reconstruct_noisy_fixture_matches_oracle(tmp_path, capsys):
    from conftest import NOISY7_CONFIG
    from oracles import similarity_table, table_forward

    data = generate(NOISY7_CONFIG)
    write_synthetic(data, tmp_path)
    table = similarity_table(data.src.data, data.tgt.data)
    oracle = sum((i, j) in data.gold for i, j, _ in table_forward(table, 4, "ratio")) / data.src.rows
    assert run("reconstruct", *emb_args(tmp_path, dim=32)) == 0
    assert capsys.readouterr().out.strip() == f"P@1\t{oracle:.6f}"
    assert oracle == pytest.approx(0.94)
