"""End-to-end smoke checks for the Python module."""

import json
import math
import os

import pytest

import page_qa as pq

REPO = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
MINI = os.path.join(REPO, "data", "mini")


def test_tokenize():
    assert pq.tokenize("Does it SHOOT 4k video?!") == [
        "does", "it", "shoot", "4k", "video", "?!",
    ]


def test_config_roundtrip():
    cfg = pq.RunConfig()
    assert cfg.d_h == 512 and cfg.k_snippets == 5 and cfg.lm_mix == 0.5
    text = pq.serialize_run_config(cfg)
    back = pq.parse_run_config_text(text)
    assert pq.serialize_run_config(back) == text
    cfg.heads = 7
    with pytest.raises(Exception):
        pq.validate_run_config(cfg)


def test_rouge_goldens():
    assert pq.rouge_f1(["a", "b", "c"], ["a", "d", "c"], "1") == pytest.approx(2 / 3)
    assert pq.rouge_f1(["a", "b", "c"], ["a", "c"], "l") == pytest.approx(0.8)
    with pytest.raises(ValueError):
        pq.rouge_f1(["a"], ["a"], "bogus")


def test_users_distinct():
    assert pq.users_distinct([["a", "b", "c"], ["a", "b", "c"]], 1) == 0.5
    assert pq.users_distinct([[["x"], ["x"]], [["x"], ["y"]]], 1) == pytest.approx(0.75)


def test_bigram_lm():
    lm = pq.fit_user_lm([["x", "y"]], [], 0.0)
    assert lm.prob("<s>", "x") == pytest.approx(1.01 / 1.02, rel=1e-12)
    assert pq.user_perplexity(["x", "y"], lm) == pytest.approx(1.02 / 1.01, rel=1e-12)


def test_bm25_scores():
    corpus = [["sharp", "lens", "great"], ["battery", "life"], ["sharp", "zoom"]]
    scores = pq.bm25_scores(["sharp", "lens"], corpus)
    assert len(scores) == 3
    assert scores[0] > scores[2] > scores[1] == 0.0


def test_pipeline_on_mini_corpus(tmp_path):
    out = str(tmp_path / "run")
    cfg = pq.parse_run_config(os.path.join(MINI, "run.cfg"))
    cfg.epochs = 2
    cfg.beam = 2

    summary = pq.prepare(cfg, MINI, out)
    assert summary["train"] == 20 and summary["test"] == 10

    assert pq.retrieve(cfg, MINI, out) == 35

    result = pq.train(cfg, out)
    assert len(result["history"]) == 2
    assert all(math.isfinite(row["total"]) for row in result["history"])
    assert os.path.exists(result["checkpoint_path"])

    assert pq.generate(cfg, out, "test") == 10

    report = pq.evaluate(cfg, out, "")
    assert report["examples_scored"] == 10
    assert 0.0 <= report["rouge_1"] <= 1.0
    assert report["uppl"] > 1.0
    assert len(report["examples"]) == 10

    on_disk = json.load(open(os.path.join(out, "report.json")))
    assert on_disk["rouge_1"] == pytest.approx(report["rouge_1"])

    pq.topics(cfg, out, 5)
    rows = open(os.path.join(out, "topics.tsv")).read().strip().splitlines()
    assert len(rows) == cfg.clusters
