import json
import math

import numpy as np
import pytest

from mmlstm.cli import main
from mmlstm.lexicon import SPECIAL_PIECES, _build_table, save_embeddings
from mmlstm.model import ModelConfig, init_params, save_checkpoint
from mmlstm.simeval import cosine_similarity


def run(argv):
    return main(argv)


@pytest.fixture
def corpus_dir(tmp_path):
    out = tmp_path / "corpus"
    assert run([
        "synth", "--out", str(out), "--images", "20", "--captions-per-lang", "1",
        "--gamma", "1.0", "--seed", "4",
    ]) == 0
    return out


def test_synth_then_validate(corpus_dir, capsys):
    code = run([
        "validate",
        "--captions", str(corpus_dir / "captions.jsonl"),
        "--features", str(corpus_dir / "features.gfeat"),
        "--emb", str(corpus_dir / "embeddings.txt"),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "caption records" in out and "feature vectors" in out and "pieces" in out


def test_synth_deterministic(tmp_path):
    for sub in ("x", "y"):
        assert run([
            "synth", "--out", str(tmp_path / sub), "--images", "8",
            "--gamma", "0.5", "--seed", "7",
        ]) == 0
    for name in ("captions.jsonl", "features.gfeat", "embeddings.txt"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_validate_bad_file_nonzero_exit(tmp_path, capsys):
    bad = tmp_path / "bad.gfeat"
    bad.write_text("GFEAT1 2 2\ni1 0 1\n", encoding="utf-8")
    assert run(["validate", "--features", str(bad)]) == 1
    assert "error:" in capsys.readouterr().err


def test_validate_nothing_given_errors(capsys):
    assert run(["validate"]) == 1


def test_train_and_sample_roundtrip(tmp_path, corpus_dir, capsys):
    out = tmp_path / "run"
    code = run([
        "train",
        "--captions", str(corpus_dir / "captions.jsonl"),
        "--features", str(corpus_dir / "features.gfeat"),
        "--emb", str(corpus_dir / "embeddings.txt"),
        "--out", str(out),
        "--ablation", "MM_VLVL",
        "--seed", "1",
        "--hidden", "24",
        "--epochs", "2",
        "--batch-size", "8",
        "--seq-len", "8",
        "--dropout", "0.0",
        "--lr0", "0.3",
    ])
    assert code == 0
    ckpt = out / "MM_VLVL" / "1.ckpt"
    assert ckpt.exists()
    assert (out / "MM_VLVL" / "1.trainlog.jsonl").exists()
    capsys.readouterr()

    code = run([
        "sample",
        "--ckpt", str(ckpt),
        "--emb", str(corpus_dir / "embeddings.txt"),
        "--features", str(corpus_dir / "features.gfeat"),
        "--image-id", "img00",
        "--prompt", "a",
        "--target-length", "3",
        "-k", "5", "-p", "0.9", "--beam", "2",
    ])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines[0].split()) == 3  # exactly target_length words
    assert lines[1].startswith("score:")


def test_train_rejects_unknown_ablation(tmp_path, corpus_dir):
    with pytest.raises(SystemExit) as exc:
        run([
            "train",
            "--captions", str(corpus_dir / "captions.jsonl"),
            "--emb", str(corpus_dir / "embeddings.txt"),
            "--out", str(tmp_path / "r"),
            "--ablation", "bogus",
        ])
    assert exc.value.code == 2  # argparse choice failure


def test_config_file_supplies_defaults(tmp_path, corpus_dir):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 1, "hidden": [16], "batch_size": 8,
                               "seq_len": 8, "dropout": 0.0, "lr0": 0.2}))
    out = tmp_path / "run"
    code = run([
        "train", "--config", str(cfg),
        "--captions", str(corpus_dir / "captions.jsonl"),
        "--features", str(corpus_dir / "features.gfeat"),
        "--emb", str(corpus_dir / "embeddings.txt"),
        "--out", str(out), "--ablation", "UM", "--seed", "2",
    ])
    assert code == 0
    log = (out / "UM" / "2.trainlog.jsonl").read_text().strip().splitlines()
    assert len(log) == 2  # one epoch record + final ppl record


def test_ppl_report_deterministic(tmp_path, corpus_dir):
    args = lambda sub: [
        "ppl",
        "--captions", str(corpus_dir / "captions.jsonl"),
        "--features", str(corpus_dir / "features.gfeat"),
        "--emb", str(corpus_dir / "embeddings.txt"),
        "--out", str(tmp_path / sub),
        "--ablation", "UM,MM_VLVL",
        "--hidden", "16",
        "--epochs", "2",
        "--batch-size", "8",
        "--seq-len", "8",
        "--seeds", "1,2",
        "--dropout", "0.0",
        "--lr0", "0.3",
    ]
    assert run(args("p1")) == 0
    assert run(args("p2")) == 0
    for name in ("ppl_report.txt", "ppl_report.csv"):
        assert (tmp_path / "p1" / name).read_bytes() == (tmp_path / "p2" / name).read_bytes()
    ck = "n16/UM/1.ckpt"
    assert (tmp_path / "p1" / ck).read_bytes() == (tmp_path / "p2" / ck).read_bytes()
    report = (tmp_path / "p1" / "ppl_report.txt").read_text()
    assert "UM" in report and "MM_VLVL" in report


def make_planted_checkpoint(path, table, rows):
    cfg = ModelConfig(hidden=rows.shape[1], emb_dim=table.dim, visual_dim=1,
                      vocab=len(table), mode="multimodal")
    params = init_params(cfg, table, 0)
    params.out_w[...] = rows
    save_checkpoint(str(path), params, cfg)


def test_sim_pipeline_identity(tmp_path, capsys):
    n = 6
    words = [f"l{i}" for i in range(n)] + [f"r{i}" for i in range(n)]
    pieces = words + list(SPECIAL_PIECES)
    table = _build_table(pieces, np.random.default_rng(0).normal(size=(len(pieces), 2)))
    emb_path = tmp_path / "emb.txt"
    save_embeddings(table, str(emb_path))

    rng = np.random.default_rng(1)
    scores = rng.uniform(-0.8, 0.9, size=n)
    subject = np.full((len(table), 2), 0.5)
    control = rng.normal(size=(len(table), 2))
    lines = []
    for i, s in enumerate(scores):
        subject[table.piece_to_id[f"l{i}"]] = [1.0, 0.0]
        subject[table.piece_to_id[f"r{i}"]] = [s, math.sqrt(1 - s * s)]
    for i in range(n):
        cos = cosine_similarity(
            subject[table.piece_to_id[f"l{i}"]], subject[table.piece_to_id[f"r{i}"]]
        )
        lines.append(f"l{i}\tr{i}\ten\ten\t{cos!r}")
    # plant two OOV pairs that the dropping rule must remove
    lines.append("zzz\tr0\ten\ten\t0.1")
    lines.append("l0\tyyy\ten\ten\t0.2")
    ds_path = tmp_path / "toy.tsv"
    ds_path.write_text("# name toy\n# scale -1 1\n" + "\n".join(lines) + "\n")

    subj_ckpt = tmp_path / "subject.ckpt"
    ctrl_ckpt = tmp_path / "control.ckpt"
    make_planted_checkpoint(subj_ckpt, table, subject)
    make_planted_checkpoint(ctrl_ckpt, table, control)

    out = tmp_path / "simout"
    code = run([
        "sim", "--emb", str(emb_path), "--datasets", str(ds_path),
        "--subject", str(subj_ckpt), "--control", str(ctrl_ckpt),
        "--out", str(out),
    ])
    assert code == 0
    text = capsys.readouterr().out
    assert "1.0000" in text
    csv_text = (out / "sim_report.csv").read_text().splitlines()
    header = csv_text[0].split(",")
    row = csv_text[1].split(",")
    data = dict(zip(header, row))
    assert data["n_used"] == str(n) and data["dropped"] == "2"
    assert float(data["r_MM_mean"]) == 1.0
    assert float(data["p_adjusted"]) == 0.0
    assert data["significance"] == "**"


def test_convert_simlex(tmp_path):
    raw = tmp_path / "simlex.txt"
    raw.write_text(
        "word1\tword2\tPOS\tSimLex999\tconc(w1)\tconc(w2)\tconcQ\tAssoc(USF)\tSimAssoc333\tSD(SimLex)\n"
        "old\tnew\tA\t1.58\t2.72\t2.81\t2\t7.25\t1\t0.41\n"
        "smart\tintelligent\tA\t9.2\t1.75\t2.46\t1\t7.11\t1\t0.67\n"
    )
    out = tmp_path / "simlex.tsv"
    assert run(["convert-simdata", "simlex", "--in", str(raw), "--out", str(out)]) == 0
    body = out.read_text()
    assert "old\tnew\ten\ten\t1.58" in body
    assert "# scale 0 10" in body


def test_convert_men_strips_pos(tmp_path):
    raw = tmp_path / "men.txt"
    raw.write_text("sun-n sky-n 49.0\nautumn-n fall-n 50.0\n")
    out = tmp_path / "men.tsv"
    assert run(["convert-simdata", "men", "--in", str(raw), "--out", str(out)]) == 0
    assert "sun\tsky\ten\ten\t49.0" in out.read_text()


def test_convert_wordsim_csv_and_tab(tmp_path):
    raw = tmp_path / "ws.csv"
    raw.write_text("Word 1,Word 2,Human (mean)\nlove,sex,6.77\ntiger,cat,7.35\n")
    out = tmp_path / "ws.tsv"
    assert run(["convert-simdata", "wordsim", "--in", str(raw), "--out", str(out)]) == 0
    assert "tiger\tcat\ten\ten\t7.35" in out.read_text()

    raw2 = tmp_path / "ws_gold.txt"
    raw2.write_text("money\tcash\t9.15\n")
    out2 = tmp_path / "ws2.tsv"
    assert run(["convert-simdata", "wordsim", "--in", str(raw2), "--out", str(out2),
                "--name", "WordSim-S"]) == 0
    assert "money\tcash\ten\ten\t9.15" in out2.read_text()


def test_paper_profile_matches_published_recipe():
    from mmlstm.cli import PROFILES

    paper = PROFILES["paper"]
    assert paper["hidden"] == [128, 256, 512]
    assert paper["batch_size"] == 32 and paper["seq_len"] == 32
    assert paper["epochs"] == 15 and paper["lr0"] == 1.0
    assert paper["patience"] == 3 and paper["clip_norm"] == 2.0
    assert paper["dropout"] == 0.2 and len(paper["seeds"]) == 3


def test_convert_rg65_cross_lingual(tmp_path):
    raw = tmp_path / "rg.txt"
    raw.write_text("cord smile 0.02\ncar coche 3.92\n")
    out = tmp_path / "rg.tsv"
    assert run([
        "convert-simdata", "rg65", "--in", str(raw), "--out", str(out),
        "--name", "RG-65-EN-ES", "--lang1", "en", "--lang2", "es",
    ]) == 0
    body = out.read_text()
    assert "car\tcoche\ten\tes\t3.92" in body
    assert "# name RG-65-EN-ES" in body
