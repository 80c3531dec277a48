import json
import os

import numpy as np
import pytest

from segann.builder import BuildParams, SearchParams
from segann.cli import main
from segann.config import build_section, load_config
from segann.dataset import HybridQuery, QueryPredicate, save_queries, write_fvecs
from segann.errors import ConfigError
from segann.runtime import RunOptions
from segann.storage import read_manifest, write_attribute_table
from segann.synthetic import clustered_vectors, near_queries
from segann.dataset import generate_attributes


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    dataset = clustered_vectors(2000, 12, clusters=8, seed=0)
    write_fvecs(str(root / "vectors.fvecs"), dataset.values)
    attrs = generate_attributes(2000, 2, seed=1, kinds=["numeric", "numeric"])
    write_attribute_table(str(root / "attributes.tbl"), attrs)
    queries = [
        HybridQuery(v, QueryPredicate(), 10)
        for v in near_queries(dataset, 12, seed=2)
    ]
    save_queries(str(root / "queries.jsonl"), queries)
    return root


EXACT_FLAGS = [
    "--hamming-keep", "100",
    "--refine-factor", "1e9",
    "--threshold", "1e18",
    "--single-allocator",
    "--max-workers", "1",
]


class TestPipeline:
    def test_build_groundtruth_query(self, workdir, capsys):
        rc = main([
            "build",
            "--vectors", str(workdir / "vectors.fvecs"),
            "--attributes", str(workdir / "attributes.tbl"),
            "--out", str(workdir / "index"),
            "--partitions", "3",
            "--seed", "4",
        ])
        assert rc == 0
        assert "manifest" in capsys.readouterr().out

        rc = main([
            "groundtruth",
            "--vectors", str(workdir / "vectors.fvecs"),
            "--attributes", str(workdir / "attributes.tbl"),
            "--queries", str(workdir / "queries.jsonl"),
            "--k", "10",
            "--out", str(workdir / "gt.ivecs"),
        ])
        assert rc == 0

        report = workdir / "report.json"
        rc = main([
            "query",
            "--index", str(workdir / "index" / "manifest.json"),
            "--queries", str(workdir / "queries.jsonl"),
            "--ground-truth", str(workdir / "gt.ivecs"),
            "--report", str(report),
            "--dump-results",
            *EXACT_FLAGS,
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "recall 1.0000" in out
        doc = json.loads(report.read_text())
        assert doc["runs"][0]["recall"] == 1.0
        assert not doc["runs"][0]["partial"]
        assert len(doc["results"]) == 12
        assert all(len(r["ids"]) == 10 for r in doc["results"])

    def test_repeat_reports_warm_second_run(self, workdir, capsys):
        rc = main([
            "query",
            "--index", str(workdir / "index" / "manifest.json"),
            "--queries", str(workdir / "queries.jsonl"),
            "--repeat", "2",
            *EXACT_FLAGS,
        ])
        assert rc == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("run ")]
        assert len(lines) == 2
        assert "0 gets" in lines[1]

    def test_bench_round_trip(self, tmp_path, capsys):
        report = tmp_path / "bench.json"
        rc = main([
            "bench",
            "--out", str(tmp_path / "bench"),
            "--n", "2000",
            "--dim", "12",
            "--attrs", "2",
            "--queries", "20",
            "--k", "5",
            "--partitions", "3",
            "--seed", "1",
            "--report", str(report),
            "--single-allocator",
            "--max-workers", "1",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "recall@5" in out
        doc = json.loads(report.read_text())
        assert doc["runs"][0]["recall"] > 0.5
        assert doc["runs"][0]["cost"]["total_cost"] > 0

    def test_build_with_synthetic_attributes(self, workdir, capsys):
        rc = main([
            "build",
            "--vectors", str(workdir / "vectors.fvecs"),
            "--synthetic-attributes", "2",
            "--out", str(workdir / "index_synth"),
            "--partitions", "2",
        ])
        assert rc == 0
        m = read_manifest(str(workdir / "index_synth" / "manifest.json"))
        assert m["attribute_table"] == "attributes.tbl"


class TestConfigPrecedence:
    def test_file_value_applies(self, workdir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"build": {"partitions": 2, "seed": 9}}))
        rc = main([
            "build",
            "--vectors", str(workdir / "vectors.fvecs"),
            "--out", str(tmp_path / "idx"),
            "--config", str(cfg),
        ])
        assert rc == 0
        assert read_manifest(str(tmp_path / "idx" / "manifest.json"))["partitions"] == 2

    def test_flag_beats_file(self, workdir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"build": {"partitions": 2}}))
        rc = main([
            "build",
            "--vectors", str(workdir / "vectors.fvecs"),
            "--out", str(tmp_path / "idx"),
            "--config", str(cfg),
            "--partitions", "4",
        ])
        assert rc == 0
        assert read_manifest(str(tmp_path / "idx" / "manifest.json"))["partitions"] == 4

    def test_unknown_section_is_exit_2(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bild": {}}))
        rc = main([
            "build",
            "--vectors", str(workdir / "vectors.fvecs"),
            "--out", str(tmp_path / "idx"),
            "--config", str(cfg),
        ])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_not_an_index_is_exit_2(self, workdir, tmp_path, capsys):
        bogus = tmp_path / "manifest.json"
        bogus.write_text("{}")
        rc = main([
            "query",
            "--index", str(bogus),
            "--queries", str(workdir / "queries.jsonl"),
        ])
        assert rc == 2
        assert "error:" in capsys.readouterr().err


class TestConfigModule:
    def test_sections_build_their_dataclasses(self):
        cfg = {
            "build": {"partitions": 5},
            "search": {"k": 3},
            "runtime": {"branching": 2, "levels": 2},
        }
        assert build_section(cfg, "build") == BuildParams(partitions=5)
        assert build_section(cfg, "search") == SearchParams(k=3)
        assert build_section(cfg, "runtime") == RunOptions(branching=2, levels=2)

    def test_overrides_win_and_none_is_absent(self):
        cfg = {"search": {"k": 3, "refine_factor": 5.0}}
        got = build_section(cfg, "search", {"k": 8, "refine_factor": None})
        assert got.k == 8
        assert got.refine_factor == 5.0

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            build_section({"search": {"kk": 3}}, "search")
        with pytest.raises(ConfigError):
            build_section({}, "search", {"bogus": 1})

    def test_load_config_validates_sections(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"prices": "x.json", "build": {}}))
        assert load_config(str(path))["prices"] == "x.json"
        path.write_text(json.dumps(["not", "an", "object"]))
        with pytest.raises(ConfigError):
            load_config(str(path))
        assert load_config(None) == {}
