import inspect
import json

import pandas as pd
import pytest
from click.testing import CliRunner

from cli.main import cli
from core.invindex import Index
from core.queryengine import Match, MatchPhrase, count
from core.textanalysis import analyze_terms
from tests.conftest import write_jsonl
from utils.generate_fake_data import generate_corpus

PLANTED = {"eng": ["zzbad", "zz hate speech"], "deu": ["zzschlecht"], "fra": ["zzmauvais"]}


@pytest.fixture
def run(temp_config_file):
    # click>=8.2 removed mix_stderr and always captures stderr separately
    if "mix_stderr" in inspect.signature(CliRunner.__init__).parameters:
        runner = CliRunner(mix_stderr=False)
    else:
        runner = CliRunner()

    def invoke(*args):
        return runner.invoke(cli, ["--config", str(temp_config_file), "--log-level", "ERROR", *map(str, args)])

    return invoke


def _json_lines(result):
    return [json.loads(line) for line in result.stdout.splitlines() if line.startswith("{")]


@pytest.fixture
def planted_corpus():
    return generate_corpus(n_docs=300, seed=21, languages=("eng", "deu", "fra"), doc_bytes=200,
                           planted_terms=PLANTED, plant_rate=0.4)


@pytest.fixture
def indexed(tmp_path, run, planted_corpus):
    corpus = write_jsonl(tmp_path / "corpus.jsonl", planted_corpus.to_dict(orient="records"))
    result = run("index", "--input", corpus, "--index", tmp_path / "idx",
                 "--stats-out", tmp_path / "stats.csv", "--label", "planted")
    assert result.exit_code == 0, result.stderr
    return tmp_path / "idx"


@pytest.mark.integration
class TestIndexAndSearch:

    def test_index_report(self, tmp_path, run, planted_corpus):
        corpus = write_jsonl(tmp_path / "corpus.jsonl", planted_corpus.to_dict(orient="records"))
        result = run("index", "--input", corpus, "--index", tmp_path / "idx")
        assert result.exit_code == 0
        payload = _json_lines(result)[-1]
        # worker/chunk vêm da configuração de teste
        assert payload["params"]["worker_count"] == 2
        assert payload["params"]["chunk_size"] == 50
        assert payload["bulk"]["docs_indexed"] == 300
        assert payload["stats"]["size_ratio"] > 0

    def test_stats_csv_written(self, tmp_path, indexed):
        frame = pd.read_csv(tmp_path / "stats.csv")
        assert frame["dataset_label"].tolist() == ["planted"]
        assert frame["docs_indexed"].tolist() == [300]

    def test_search_lines(self, run, indexed):
        result = run("search", "--index", indexed, "--phrase", "zzbad", "--limit", 3, "--source")
        assert result.exit_code == 0
        lines = _json_lines(result)
        assert lines[0]["total_docs"] > 0
        assert 1 <= len(lines) - 1 <= 3
        assert "zzbad" in lines[1]["_source"]["text"].lower()

    def test_limit_zero_prints_only_total(self, run, indexed):
        result = run("search", "--index", indexed, "--match", "zzbad", "--limit", 0)
        lines = _json_lines(result)
        assert len(lines) == 1
        assert lines[0]["total_docs"] > 0

    def test_count_matches_library(self, run, indexed, planted_corpus):
        result = run("count", "--index", indexed, "--phrase", "zz hate speech", "--occurrences")
        payload = _json_lines(result)[0]
        index = Index.open(indexed)
        assert payload["count"] == count(index, MatchPhrase("zz hate speech"))
        assert payload["occurrences"] >= payload["count"]
        index.close()

    def test_json_query(self, run, indexed):
        query = json.dumps({"bool": {"must": [{"match": {"text": "zzbad"}}],
                                     "must_not": [{"match": {"text": "zzschlecht"}}]}})
        assert run("count", "--index", indexed, "--query", query).exit_code == 0


@pytest.mark.integration
class TestExitCodes:

    def test_usage_error(self, run, indexed):
        # nenhuma consulta informada
        assert run("search", "--index", indexed).exit_code == 2

    def test_two_queries_is_usage_error(self, run, indexed):
        assert run("count", "--index", indexed, "--match", "a", "--phrase", "b").exit_code == 2

    def test_unknown_index(self, run, tmp_path):
        result = run("search", "--index", tmp_path / "missing", "--match", "x")
        assert result.exit_code == 1
        assert "UnknownIndex" in result.stderr

    def test_missing_input(self, run, tmp_path):
        assert run("index", "--input", tmp_path / "none.jsonl", "--index", tmp_path / "idx").exit_code == 1

    def test_bad_query_json(self, run, indexed):
        assert run("count", "--index", indexed, "--query", "{nope").exit_code == 1

    def test_unknown_subcommand(self, run):
        assert run("frobnicate").exit_code == 2


@pytest.mark.integration
class TestAuditPipeline:

    def _dictionary(self, tmp_path):
        path = tmp_path / "terms.csv"
        rows = ["language,term"] + [f"{lang},{term}" for lang, terms in PLANTED.items() for term in terms]
        rows.append("eng,zzabsent")
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        return path

    def _oracle(self, corpus, language, term):
        query = analyze_terms(term)
        docs = occurrences = 0
        for text in corpus[corpus["language"] == language]["text"]:
            terms = analyze_terms(text)
            starts = sum(1 for i in range(len(terms)) if terms[i:i + len(query)] == query)
            if starts:
                docs += 1
                occurrences += starts
        return docs, occurrences

    def test_three_languages(self, tmp_path, run, indexed, planted_corpus):
        dictionary = self._dictionary(tmp_path)
        out = tmp_path / "report.json"
        heatmap = tmp_path / "heatmap.csv"
        result = run("audit", "--index", indexed, "--dict", dictionary, "--format", "csv",
                     "--out", out, "--heatmap", heatmap, "--top-k", 2)
        assert result.exit_code == 0, result.stderr
        payload = _json_lines(result)[0]

        assert set(payload["language_totals"]) == {"eng", "deu", "fra"}
        assert len(payload["top_k"]["eng"]) == 2
        assert payload["terms"] == 5

        # cada célula confere com a varredura ingênua
        report = json.loads(out.read_text())
        for row in report["rows"]:
            expected = self._oracle(planted_corpus, row["language"], row["term"])
            assert (row["doc_count"], row["occurrence_count"]) == expected, row

        frame = pd.read_csv(heatmap, index_col="language")
        assert frame.shape == (3, 5)
        assert frame.loc["deu", "zzbad"] == 0

    def test_lines_dictionary_with_language(self, tmp_path, run, indexed):
        path = tmp_path / "en.txt"
        path.write_text("# termos\nzzbad\n", encoding="utf-8")
        result = run("audit", "--index", indexed, "--dict", path, "--lang", "eng")
        payload = _json_lines(result)[0]
        assert payload["top_k"]["eng"][0]["term"] == "zzbad"
        assert payload["top_k"]["eng"][0]["doc_count"] > 0

    def test_empty_dictionary(self, tmp_path, run, indexed):
        path = tmp_path / "empty.txt"
        path.write_text("", encoding="utf-8")
        assert run("audit", "--index", indexed, "--dict", path).exit_code == 1


@pytest.mark.integration
class TestBenchAndMerge:

    def test_bench(self, tmp_path, run, indexed):
        out = tmp_path / "bench.csv"
        result = run("bench", "--index", indexed, "--lengths", "1,2,5", "--samples", 3, "--out", out)
        assert result.exit_code == 0, result.stderr
        payload = _json_lines(result)[-1]
        assert payload["measurements"] == 9
        assert len(pd.read_csv(out)) == 3

    def test_bench_defaults_from_config(self, run, indexed):
        # a configuração de teste define lengths [1, 2, 5] e 3 amostras
        payload = _json_lines(run("bench", "--index", indexed))[-1]
        assert payload["measurements"] == 9

    def test_merge_of_partitions_equals_whole(self, tmp_path, run, planted_corpus):
        records = planted_corpus.to_dict(orient="records")
        whole = write_jsonl(tmp_path / "whole.jsonl", records)
        assert run("index", "--input", whole, "--index", tmp_path / "whole").exit_code == 0

        sources = []
        for k in range(4):
            part = write_jsonl(tmp_path / f"part{k}.jsonl", records[k::4])
            assert run("index", "--input", part, "--index", tmp_path / f"p{k}").exit_code == 0
            sources += ["--sources", tmp_path / f"p{k}"]

        result = run("merge", *sources, "--dest", tmp_path / "merged")
        assert result.exit_code == 0, result.stderr
        assert _json_lines(result)[0]["docs_copied"] == 300

        whole_index, merged = Index.open(tmp_path / "whole"), Index.open(tmp_path / "merged")
        words = sorted({w for text in planted_corpus["text"][:20] for w in analyze_terms(text)})[:50]
        for word in words:
            assert count(merged, Match(word)) == count(whole_index, Match(word))
        assert count(merged, MatchPhrase("zz hate speech")) == count(whole_index, MatchPhrase("zz hate speech"))
        whole_index.close()
        merged.close()

    def test_sharded_index_with_dedup(self, tmp_path, run):
        corpus = generate_corpus(n_docs=50, seed=2, dup_factor=4, doc_bytes=100)
        path = write_jsonl(tmp_path / "dups.jsonl", corpus.to_dict(orient="records"))
        result = run("index", "--input", path, "--index", tmp_path / "sharded", "--shards", 3, "--dedup")
        payload = _json_lines(result)[-1]
        assert payload["bulk"]["docs_indexed"] == 50
        assert payload["bulk"]["docs_skipped_duplicate"] == 150
        assert payload["stats"]["deduplicated"] is True


@pytest.mark.integration
class TestGenerateAndConfig:

    def test_generate(self, tmp_path, run):
        out = tmp_path / "gen.parquet"
        result = run("generate", "--out", out, "--docs", 20, "--languages", "eng,por", "--dup-factor", 2)
        assert _json_lines(result)[0] == {"out": str(out), "records": 40, "unique": 20}
        assert len(pd.read_parquet(out)) == 40

    def test_config_init_set_validate(self, tmp_path, run):
        path = tmp_path / "new.yaml"
        assert run("config", "init", "--config", path).exit_code == 0
        assert run("config", "init", "--config", path).exit_code == 1
        assert run("config", "set", "audit", "slop", "2", "--config", path).exit_code == 0
        assert run("config", "set", "audit", "nope", "2", "--config", path).exit_code == 1
        assert run("config", "set", "index", "route_by", "random", "--config", path).exit_code == 1
        assert run("config", "validate", "--config", path).exit_code == 0
        assert run("config", "show", "--config", path).exit_code == 0
