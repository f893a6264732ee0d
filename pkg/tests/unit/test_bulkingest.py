import gzip
import json

import numpy as np
import pytest

from core.bulkingest import (
    BulkParams,
    FailedRecord,
    InflightTracker,
    bulk_index,
    estimate_throughput_ceiling,
    plan_bulk_params,
    read_documents,
    record_to_document,
)
from core.exceptions import IndexClosed, InfeasibleBudget, InputUnreadable
from core.invindex import Index
from core.queryengine import Match, MatchAll, MatchPhrase, count

MiB = 1024 * 1024


class TestPlanner:

    def test_chunk_size_from_average_doc(self):
        # 10.240 B por doc e teto de 100 MiB
        params = plan_bulk_params(10_240, 100 * MiB, cores=4, ram_budget=8 * 100 * MiB)
        assert params.chunk_size == 10_240
        assert params.chunk_size * 10_240 <= 100 * MiB

    def test_workers_capped_by_cores(self):
        params = plan_bulk_params(1024, MiB, cores=16, ram_budget=64 * 1024 * MiB)
        assert params.worker_count <= 16

    def test_envelope_within_budget(self):
        params = plan_bulk_params(1024, 100 * MiB, cores=8, ram_budget=120 * MiB)
        assert params.inflight_envelope <= 120 * MiB
        assert params.max_chunk_bytes < 100 * MiB

    def test_random_inputs_respect_constraints(self):
        rng = np.random.default_rng(31)
        checked = 0
        for _ in range(100):
            avg = int(rng.integers(100, 100_000))
            max_chunk = int(rng.integers(avg, 200 * MiB))
            cores = int(rng.integers(1, 65))
            ram = int(rng.integers(avg, 8 * 1024 * MiB))
            try:
                params = plan_bulk_params(avg, max_chunk, cores, ram)
            except InfeasibleBudget:
                continue
            checked += 1
            assert params.chunk_size * avg <= max_chunk
            assert 1 <= params.worker_count <= cores
            assert params.inflight_envelope <= ram
        assert checked > 0

    def test_infeasible_budget(self):
        with pytest.raises(InfeasibleBudget):
            plan_bulk_params(10_000, MiB, cores=4, ram_budget=20_000)

    def test_non_positive_inputs(self):
        with pytest.raises(ValueError):
            plan_bulk_params(0, MiB, cores=4, ram_budget=MiB)


class TestThroughputCeiling:

    @pytest.mark.parametrize("latency,expected", [
        (50e-6, 10_000),
        (100e-6, 5_000),
        (25e-6, 20_000),
    ])
    def test_ceiling(self, latency, expected):
        assert estimate_throughput_ceiling(latency) == pytest.approx(expected)

    def test_invalid_latency(self):
        with pytest.raises(ValueError):
            estimate_throughput_ceiling(0)


class TestReadDocuments:

    def test_jsonl(self, jsonl_file):
        records = list(read_documents([jsonl_file]))
        assert len(records) == 200
        doc = record_to_document(records[0])
        assert doc.external_id == records[0]["id"]
        assert doc.language in ("eng", "deu", "fra")

    def test_gzip(self, tmp_path, small_corpus):
        path = tmp_path / "corpus.jsonl.gz"
        with gzip.open(path, "wt", encoding="utf-8") as f:
            for record in small_corpus.to_dict(orient="records"):
                f.write(json.dumps(record) + "\n")
        assert len(list(read_documents([path]))) == 200

    def test_parquet(self, parquet_file, small_corpus):
        records = list(read_documents([parquet_file]))
        assert [r["id"] for r in records] == list(small_corpus["id"])

    def test_bad_lines_become_failed_records(self, tmp_path):
        path = tmp_path / "mixed.jsonl"
        path.write_bytes(b'{"id": "a", "text": "ok"}\n{broken\n\xff\xfe\n[1, 2]\n')
        records = list(read_documents([path]))
        assert isinstance(records[0], dict)
        assert all(isinstance(r, FailedRecord) for r in records[1:])
        assert records[1].source == "mixed.jsonl:2"

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputUnreadable):
            list(read_documents([tmp_path / "absent.jsonl"]))

    def test_unsupported_format(self, tmp_path):
        path = tmp_path / "corpus.xml"
        path.write_text("<docs/>")
        with pytest.raises(InputUnreadable):
            list(read_documents([path]))

    def test_record_without_text(self):
        with pytest.raises(ValueError):
            record_to_document({"id": "x"})


class TestInflightTracker:

    def test_peak_tracked(self):
        tracker = InflightTracker(100)
        tracker.acquire(60)
        tracker.release(60)
        tracker.acquire(30)
        assert tracker.peak == 60
        assert tracker.current == 30

    def test_oversized_admitted_when_idle(self):
        tracker = InflightTracker(100)
        tracker.acquire(500)
        assert tracker.current == 500


class TestBulkIndex:

    def _records(self, n, size=100):
        return [{"id": f"r{i}", "text": (f"doc{i} " + "x " * size)[:size]} for i in range(n)]

    def test_accounting(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        report = bulk_index(index, self._records(1000), BulkParams(worker_count=4, chunk_size=50))
        assert report.docs_read == 1000
        assert report.docs_indexed == 1000
        assert report.docs_failed == 0
        assert report.indexing_rate > 0
        assert count(index, MatchAll()) == 1000
        assert index.counters.ingest_seconds > 0
        index.close()

    def test_invalid_utf8_is_not_fatal(self, tmp_path):
        path = tmp_path / "input.jsonl"
        lines = [json.dumps({"id": f"v{i}", "text": f"valid {i}"}).encode() for i in range(99)]
        lines.insert(50, b'{"id": "bad", "text": "\xff\xfe"}')
        path.write_bytes(b"\n".join(lines) + b"\n")

        index = Index.create(tmp_path / "idx")
        report = bulk_index(index, read_documents([path]), BulkParams(worker_count=2, chunk_size=10))
        assert report.docs_indexed == 99
        assert report.docs_failed == 1
        assert "InvalidUtf8" in report.errors[0].error
        assert report.errors[0].source == "input.jsonl:51"
        index.close()

    def test_missing_text_counted_as_failure(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        report = bulk_index(index, [{"id": "a", "text": "ok"}, {"id": "b"}], BulkParams())
        assert (report.docs_indexed, report.docs_failed) == (1, 1)
        index.close()

    def test_worker_count_does_not_change_content(self, tmp_path, jsonl_file, small_corpus):
        words = small_corpus["text"].iloc[0].split()
        queries = [Match(words[0]), MatchPhrase(" ".join(words[1:3])), Match(words[-1]), MatchAll()]
        vectors = []
        for workers in (1, 4):
            index = Index.create(tmp_path / f"idx_{workers}")
            bulk_index(index, read_documents([jsonl_file]), BulkParams(worker_count=workers, chunk_size=7))
            vectors.append([count(index, q) for q in queries])
            index.close()
        assert vectors[0] == vectors[1]

    def test_inflight_bytes_stay_in_envelope(self, tmp_path):
        params = BulkParams(worker_count=2, chunk_size=10, max_chunk_bytes=2_000, queue_size=2)
        observed = []
        index = Index.create(tmp_path / "idx")
        report = bulk_index(index, self._records(2_000), params, inflight_observer=observed.append)
        assert max(observed) <= params.inflight_envelope
        assert report.peak_inflight_bytes <= params.inflight_envelope
        index.close()

    def test_oversized_document_indexed_alone(self, tmp_path):
        params = BulkParams(chunk_size=10, max_chunk_bytes=50)
        records = [{"id": "big", "text": "word " * 40}, {"id": "small", "text": "tiny"}]
        index = Index.create(tmp_path / "idx")
        report = bulk_index(index, records, params)
        assert report.oversized_docs == 1
        assert report.docs_indexed == 2
        index.close()

    def test_dedup_fraction(self, tmp_path):
        records = [{"id": f"c{i}", "text": f"text {i % 10}"} for i in range(80)]
        index = Index.create(tmp_path / "idx")
        report = bulk_index(index, records, BulkParams(worker_count=3, chunk_size=4), dedup=True)
        assert report.docs_indexed == 10
        assert report.duplicate_fraction == pytest.approx(70 / 80)
        index.close()

    def test_rss_sampling(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        report = bulk_index(index, self._records(100), BulkParams(), sample_rss=True)
        assert report.peak_rss_estimate_bytes > 0
        index.close()

    def test_closed_index(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        index.close()
        with pytest.raises(IndexClosed):
            bulk_index(index, self._records(3), BulkParams())

    def test_report_dict(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        data = bulk_index(index, self._records(5), BulkParams()).to_dict()
        assert data["docs_indexed"] == 5
        assert data["errors"] == []
        index.close()
