import numpy as np
import pytest

from core.exceptions import IndexClosed, UnknownIndex
from core.invindex import Document, Index, Indexed, SkippedDuplicate, content_hash
from core.queryengine import Match, MatchAll, count, search


class TestContentHash:

    def test_published_vectors(self):
        assert content_hash("").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        assert content_hash("abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"

    def test_one_byte_difference(self):
        assert content_hash("abc") != content_hash("abd")


class TestAddDocument:

    def test_doc_ids_are_dense(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        results = [index.add_document(Document(text=f"doc {i}")) for i in range(5)]
        assert results == [Indexed(i) for i in range(5)]
        index.close()

    def test_duplicate_skipped_with_dedup(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        assert index.add_document(Document(text="hello world"), dedup=True) == Indexed(0)
        assert index.add_document(Document(text="hello world"), dedup=True) == SkippedDuplicate(0)
        assert index.counters.docs_skipped_duplicate == 1
        assert index.counters.deduplicated
        index.close()

    def test_duplicate_kept_without_dedup(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        index.add_document(Document(text="same"))
        assert index.add_document(Document(text="same")) == Indexed(1)
        index.close()

    def test_n_identical_documents(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        results = [index.add_document(Document(text="x y z"), dedup=True) for _ in range(50)]
        assert sum(isinstance(r, Indexed) for r in results) == 1
        assert sum(isinstance(r, SkippedDuplicate) for r in results) == 49
        index.close()

    def test_eightfold_corpus_skips_seven_eighths(self, tmp_path):
        # 1000 textos únicos, cada um 8 vezes
        index = Index.create(tmp_path / "idx")
        texts = [f"unique text number {i}" for i in range(1000)] * 8
        for text in texts:
            index.add_document(Document(text=text), dedup=True)
        index.refresh()
        assert index.counters.docs_indexed == 1000
        assert index.counters.docs_skipped_duplicate == 7000
        assert index.counters.docs_skipped_duplicate / len(texts) == pytest.approx(0.875)
        index.close()

    def test_dedup_survives_reopen(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        index.add_document(Document(text="persisted"), dedup=True)
        index.close()

        reopened = Index.open(tmp_path / "idx")
        assert reopened.add_document(Document(text="persisted"), dedup=True) == SkippedDuplicate(0)
        reopened.close()

    def test_closed_index_rejects_writes(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        index.close()
        with pytest.raises(IndexClosed):
            index.add_document(Document(text="late"))


class TestRefresh:

    def test_visibility_contract(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        index.add_document(Document(text="hello"))
        assert search(index, Match("hello")).total_docs == 0
        assert index.pending_count == 1
        index.refresh()
        assert search(index, Match("hello")).total_docs == 1
        assert index.pending_count == 0
        index.close()

    def test_refresh_without_pending_is_noop(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        assert index.refresh() is None
        assert index.segments == ()
        index.close()

    def test_second_refresh_reports_batch(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        index.add_document(Document(text="first"))
        index.refresh()
        for i in range(100):
            index.add_document(Document(text=f"batch {i}"))
        info = index.refresh()
        assert info.doc_count == 100
        assert len(index.segments) == 2
        index.close()

    def test_visible_count_equals_refreshed_adds(self, tmp_path):
        # 100 intercalações aleatórias de add e refresh
        rng = np.random.default_rng(99)
        index = Index.create(tmp_path / "idx")
        refreshed = added = 0
        for i in range(100):
            if rng.random() < 0.7:
                index.add_document(Document(text=f"doc {i}"))
                added += 1
            else:
                index.refresh()
                refreshed = added
            assert count(index, MatchAll()) == refreshed
        index.close()

    def test_snapshot_is_stable(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        index.add_document(Document(text="one"))
        index.refresh()
        snapshot = index.snapshot()
        index.add_document(Document(text="two"))
        index.refresh()
        assert snapshot.doc_count == 1
        assert index.doc_count == 2
        index.close()


class TestPersistence:

    def test_reopen_preserves_everything(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        for text in ["alpha beta", "beta gamma", "gamma"]:
            index.add_document(Document(text=text, metadata={"language": "eng"}))
        index.refresh()
        index.close()

        reopened = Index.open(tmp_path / "idx")
        assert reopened.doc_count == 3
        assert count(reopened, Match("beta")) == 2
        assert reopened.get_document(1).text == "beta gamma"
        assert reopened.get_document(1).language == "eng"
        assert reopened.add_document(Document(text="delta")) == Indexed(3)
        reopened.close()

    def test_close_seals_pending(self, tmp_path):
        index = Index.create(tmp_path / "idx")
        index.add_document(Document(text="unsealed"))
        index.close()
        assert Index.open(tmp_path / "idx").doc_count == 1

    def test_open_missing(self, tmp_path):
        with pytest.raises(UnknownIndex):
            Index.open(tmp_path / "nowhere")

    def test_create_existing(self, tmp_path):
        Index.create(tmp_path / "idx").close()
        with pytest.raises(FileExistsError):
            Index.create(tmp_path / "idx")
        Index.open_or_create(tmp_path / "idx").close()

    def test_iter_documents_pages(self, make_index):
        index = make_index([f"t{i}" for i in range(10)])
        page = list(index.iter_documents(after_doc_id=3, limit=4))
        assert [d.doc_id for d in page] == [4, 5, 6, 7]
