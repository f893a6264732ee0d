"""Execuções em escala de aceitação; rode com: pytest -m slow"""
import os

import pytest

from core.bulkingest import BulkParams, bulk_index, read_documents
from core.invindex import Index
from core.metrics import DEFAULT_LENGTHS, bench_query_latency, snapshot_stats, spearman
from utils.generate_fake_data import generate_corpus, save_corpus


@pytest.mark.slow
@pytest.mark.integration
class TestScale:

    def test_hundred_thousand_docs_within_envelope(self, tmp_path):
        corpus = save_corpus(generate_corpus(n_docs=100_000, seed=1, doc_bytes=1024), tmp_path / "c.parquet")
        params = BulkParams(worker_count=4, chunk_size=500, max_chunk_bytes=256 * 1024, queue_size=4)
        observed = []

        index = Index.create(tmp_path / "idx")
        report = bulk_index(index, read_documents([corpus]), params, inflight_observer=observed.append)
        assert report.docs_indexed == 100_000
        assert report.docs_failed == 0
        assert report.indexing_rate > 0
        assert max(observed) <= params.inflight_envelope
        index.close()

    def test_indexing_rate_floor(self, tmp_path):
        corpus = save_corpus(generate_corpus(n_docs=20_000, seed=2, doc_bytes=1024), tmp_path / "c.jsonl")
        index = Index.create(tmp_path / "idx")
        workers = min(4, os.cpu_count() or 1)
        report = bulk_index(index, read_documents([corpus]), BulkParams(worker_count=workers, chunk_size=500))
        assert report.indexing_rate >= 1000
        index.close()

    def test_latency_grows_with_length(self, tmp_path):
        corpus = save_corpus(generate_corpus(n_docs=50_000, seed=3, doc_bytes=2500), tmp_path / "c.parquet")
        index = Index.create(tmp_path / "idx")
        bulk_index(index, read_documents([corpus]), BulkParams(worker_count=4, chunk_size=500))

        report = bench_query_latency(index, lengths=DEFAULT_LENGTHS, samples_per_length=25, seed=0)
        assert report.measurements == 325
        assert spearman(report) > 0
        index.close()

    def test_size_ratio_on_hundred_megabytes(self, tmp_path):
        # ~100 MB de texto bruto
        corpus = save_corpus(generate_corpus(n_docs=100_000, seed=4, doc_bytes=1000), tmp_path / "c.parquet")
        index = Index.create(tmp_path / "idx")
        bulk_index(index, read_documents([corpus]), BulkParams(worker_count=4, chunk_size=1000))

        stats = snapshot_stats(index, "synthetic-100mb")
        assert stats.data_size_bytes > 90 * 1024 * 1024
        assert 0.5 <= stats.size_ratio <= 5.0
        index.close()
