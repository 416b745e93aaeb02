import json
import os

import numpy as np
import pytest

from hybrid_rank import cli
from hybrid_rank.config import (
    ConfigError,
    apply_overrides,
    config_from_dict,
    load_config,
    parse_override,
)
from hybrid_rank.fusion import import_scores
from hybrid_rank.seeding import derive_seed

from conftest import REPO_ROOT


def base_dict(**extra):
    d = {
        "corpus": "data/mini_news.jsonl",
        "out_dir": "out/x",
        "splits": {"train": 10, "dev": 5, "test": 5},
    }
    d.update(extra)
    return d


class TestConfig:
    def test_defaults(self):
        cfg = config_from_dict(base_dict())
        assert cfg.seed == 0
        assert cfg.ranker == "fused" and cfg.eval_split == "test"
        assert cfg.min_query_len == 5 and cfg.tune_queries == 100
        assert cfg.train.dim == 768 and cfg.train.delta == 0.5
        assert cfg.deterministic is True

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict(base_dict(extra_knob=1))

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict(base_dict(train={"hidden_dim": 3}))

    def test_missing_required_section_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"corpus": "x", "out_dir": "y"})

    def test_bad_ranker_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict(base_dict(ranker="pagerank"))

    def test_bad_eval_split_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict(base_dict(eval_split="validation"))

    def test_parse_override_json_and_string(self):
        assert parse_override("train.dim=32") == (["train", "dim"], 32)
        assert parse_override("ranker=bm25") == (["ranker"], "bm25")
        assert parse_override("deterministic=false") == (["deterministic"], False)
        assert parse_override("splits.dev=0") == (["splits", "dev"], 0)

    def test_parse_override_requires_equals(self):
        with pytest.raises(ConfigError):
            parse_override("train.dim")

    def test_apply_overrides_is_deep_and_non_mutating(self):
        d = base_dict()
        out = apply_overrides(d, ["train.dim=8", "seed=3"])
        assert out["train"]["dim"] == 8 and out["seed"] == 3
        assert "train" not in d or d.get("train", {}).get("dim") != 8

    def test_train_seed_derived_from_run_seed(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(base_dict(seed=99)))
        cfg = load_config(path, [])
        assert cfg.train.seed == derive_seed(99, "train")

    def test_explicit_train_seed_respected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(base_dict(seed=99, train={"seed": 7})))
        cfg = load_config(path, [])
        assert cfg.train.seed == 7

    def test_cli_override_beats_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(base_dict(seed=99)))
        cfg = load_config(path, ["seed=1", "train.epochs=2"])
        assert cfg.seed == 1 and cfg.train.epochs == 2
        assert cfg.train.seed == derive_seed(1, "train")


# ---------------------------------------------------------------------------
# End-to-end over the bundled corpus, reduced to a quick footprint


PIPE_OVERRIDES = [
    "splits.train=120",
    "splits.dev=40",
    "splits.test=40",
    "train.dim=16",
    "train.batch_size=32",
    "train.epochs=2",
    "tune_queries=25",
]


def run_cli(argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full CLI pass: ingest, fit, train, tune, rank x5, evaluate."""
    out = tmp_path_factory.mktemp("pipe")
    cfg_path = out / "run.json"
    cfg_path.write_text(
        json.dumps(
            {
                "corpus": str(REPO_ROOT / "data" / "mini_news.jsonl"),
                "out_dir": str(out / "run"),
                "seed": 13,
                "splits": {"train": 700, "dev": 150, "test": 150},
            }
        )
    )
    base = ["--config", cfg_path] + [x for o in PIPE_OVERRIDES for x in ("--set", o)]
    for step in ("ingest", "fit", "train", "tune"):
        assert run_cli([step] + base) == 0, step
    for ranker in ("tfidf", "bm25", "lm", "boe", "fused"):
        assert run_cli(["rank"] + base + ["--ranker", ranker]) == 0, ranker
    assert run_cli(["evaluate"] + base + ["--ranker", "fused", "--per-query"]) == 0
    return out / "run", base


class TestPipeline:
    def test_expected_artifacts_exist(self, pipeline):
        run, _ = pipeline
        for name in (
            "corpus_cache.jsonl",
            "split_manifest.jsonl",
            "tfidf.model",
            "tfidf.index",
            "lexstats.json",
            "lexstats.dev.json",
            "tuned.bm25.json",
            "tuned.lm.json",
            "boe.ckpt",
            "train_log.jsonl",
            "eval.fused.json",
            "eval.fused.per_query.tsv",
        ):
            assert (run / name).exists(), name
        for ranker in ("tfidf", "bm25", "lm", "boe", "fused"):
            assert (run / f"scores.{ranker}.tsv").exists()
            assert (run / f"topk.{ranker}.tsv").exists()

    def test_score_matrix_shape_is_eval_split(self, pipeline):
        run, _ = pipeline
        m = import_scores(run / "scores.tfidf.tsv")
        assert len(m.query_ids) == 40 and len(m.doc_ids) == 40
        assert all(q.startswith("q") for q in m.query_ids)
        assert all(d.startswith("d") for d in m.doc_ids)

    def test_fused_equals_sum_of_parts(self, pipeline):
        run, _ = pipeline
        t = import_scores(run / "scores.tfidf.tsv")
        b = import_scores(run / "scores.boe.tsv")
        f = import_scores(run / "scores.fused.tsv")
        assert np.allclose(f.scores, t.scores + b.scores, atol=1e-12)
        assert f.source == "tfidf+boe"

    def test_fuse_command_reproduces_rank_fused_bytes(self, pipeline, tmp_path):
        run, base = pipeline
        out = tmp_path / "refused.tsv"
        code = run_cli(
            ["fuse"] + base
            + [run / "scores.tfidf.tsv", run / "scores.boe.tsv", "--out", out]
        )
        assert code == 0
        assert out.read_bytes() == (run / "scores.fused.tsv").read_bytes()

    def test_fuse_needs_two_inputs(self, pipeline, capsys):
        run, base = pipeline
        code = run_cli(["fuse"] + base + [run / "scores.tfidf.tsv"])
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ValueError"

    def test_topk_format(self, pipeline):
        run, _ = pipeline
        lines = (run / "topk.fused.tsv").read_text().splitlines()
        assert lines[0] == "#query_id\trank\tdoc_id\tscore"
        body = [l.split("\t") for l in lines[1:]]
        assert len(body) == 40 * 10
        by_q = {}
        for q, rank, d, s in body:
            by_q.setdefault(q, []).append((int(rank), d, float(s)))
        for q, rows in by_q.items():
            assert [r[0] for r in rows] == list(range(1, 11))
            scores = [r[2] for r in rows]
            assert scores == sorted(scores, reverse=True)

    def test_eval_report_file(self, pipeline):
        run, _ = pipeline
        rep = json.loads((run / "eval.fused.json").read_text())
        assert rep["n_queries"] == 40 and rep["pool_size"] == 40
        assert 0.0 <= rep["mrr"] <= 1.0
        assert rep["p_at_1"] <= rep["p_at_3"] <= rep["p_at_10"] <= 1.0

    def test_evaluate_prints_machine_readable_line(self, pipeline, capsys):
        run, base = pipeline
        assert run_cli(["evaluate"] + base + ["--ranker", "tfidf"]) == 0
        line = capsys.readouterr().out.strip().splitlines()[-1]
        data = json.loads(line)
        assert data["ranker"] == "tfidf"
        assert set(data) == {
            "ranker", "mrr", "p_at_1", "p_at_3", "p_at_10", "n_queries", "pool_size",
        }

    def test_evaluate_explicit_scores_path(self, pipeline, capsys):
        run, base = pipeline
        assert run_cli(["evaluate"] + base + ["--scores", run / "scores.lm.tsv"]) == 0
        data = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert data["n_queries"] == 40

    def test_per_query_tsv(self, pipeline):
        run, _ = pipeline
        lines = (run / "eval.fused.per_query.tsv").read_text().splitlines()
        assert lines[0] == "#query_id\trank"
        assert len(lines) == 41
        for line in lines[1:]:
            q, rank = line.split("\t")
            assert 1 <= int(rank) <= 40

    def test_tuned_artifacts_have_grid_and_best(self, pipeline):
        run, _ = pipeline
        bm = json.loads((run / "tuned.bm25.json").read_text())
        assert len(bm["grid"]) == 70 and bm["objective"] == "mrr"
        assert bm["n_queries"] == 25
        lm = json.loads((run / "tuned.lm.json").read_text())
        assert len(lm["grid"]) == 10
        assert lm["params"]["mu"] in [float(m) for m in [100, 200, 300, 400, 500, 1000, 1500, 2000, 2500, 3000]]

    def test_train_log_epochs(self, pipeline):
        run, _ = pipeline
        lines = (run / "train_log.jsonl").read_text().splitlines()
        entries = [json.loads(l) for l in lines]
        assert [e["epoch"] for e in entries] == [1, 2]

    def test_report_command_renders_figures(self, pipeline, capsys):
        run, base = pipeline
        assert run_cli(["report"] + base) == 0
        capsys.readouterr()
        rep = run / "report"
        table = (rep / "comparison.tsv").read_text().splitlines()
        assert table[0].startswith("#ranker")
        assert len(table) == 6  # header + five rankers
        for png in ("comparison.png", "training_curve.png"):
            data = (rep / png).read_bytes()
            assert data[:8] == b"\x89PNG\r\n\x1a\n", png
        summary = json.loads((rep / "report.json").read_text())
        # the fused row is labeled by what it adds together
        assert set(summary["rankers"]) == {"tfidf", "bm25", "lm", "boe", "tfidf+boe"}


class TestCliErrors:
    def test_unknown_ranker_exits_two(self, pipeline, capsys):
        _, base = pipeline
        with pytest.raises(SystemExit) as exc:
            run_cli(["rank"] + base + ["--ranker", "montecarlo"])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_missing_artifact_is_reported_as_json(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(
            json.dumps(
                {
                    "corpus": str(REPO_ROOT / "data" / "mini_news.jsonl"),
                    "out_dir": str(tmp_path / "never_ingested"),
                    "splits": {"train": 10, "dev": 5, "test": 5},
                }
            )
        )
        code = run_cli(["rank", "--config", cfg, "--ranker", "tfidf"])
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "MissingArtifact"
        assert "ingest" in err["message"]

    def test_bad_config_file_reported(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"corpus": "x"}))
        assert run_cli(["fit", "--config", cfg]) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"

    def test_cache_dir_env_redirects_ingest_outputs(self, tmp_path, monkeypatch, capsys):
        cache = tmp_path / "shared_cache"
        monkeypatch.setenv(cli.CACHE_DIR_ENV, str(cache))
        cfg = tmp_path / "c.json"
        cfg.write_text(
            json.dumps(
                {
                    "corpus": str(REPO_ROOT / "data" / "mini_news.jsonl"),
                    "out_dir": str(tmp_path / "run"),
                    "splits": {"train": 20, "dev": 5, "test": 5},
                }
            )
        )
        assert run_cli(["ingest", "--config", cfg]) == 0
        capsys.readouterr()
        assert (cache / "corpus_cache.jsonl").exists()
        assert (cache / "split_manifest.jsonl").exists()
        assert not (tmp_path / "run" / "corpus_cache.jsonl").exists()
