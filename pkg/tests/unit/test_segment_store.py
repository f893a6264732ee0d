import struct

import numpy as np
import pytest

from core.exceptions import BadMagic, Corrupt, InvalidUtf8, UnsupportedVersion
from core.segment_store import (
    Document,
    SegmentBuilder,
    SegmentReader,
    docs_path_for,
    open_segment,
    write_segment,
)
from core.textanalysis import analyze_terms


def _builder(texts, segment_id=0, first_doc_id=0):
    builder = SegmentBuilder(segment_id)
    for i, text in enumerate(texts):
        doc = Document(text=text, external_id=f"e{i}", metadata={"language": "eng"},
                       doc_id=first_doc_id + i)
        builder.add(doc, analyze_terms(text))
    return builder


@pytest.fixture
def segment_path(tmp_path):
    builder = _builder(["the cat sat", "cat", "dog and cat and cat"])
    path = tmp_path / "seg_00000.ftsg"
    write_segment(builder, path)
    return path


class TestDocument:

    def test_hash_and_language(self):
        doc = Document(text="olá")
        assert len(doc.content_hash) == 32
        assert doc.language == "und"
        assert doc.size_bytes == 4

    def test_bytes_decoded(self):
        assert Document(text="café".encode("utf-8")).text == "café"

    def test_invalid_utf8_rejected(self):
        with pytest.raises(InvalidUtf8):
            Document(text=b"\xff\xfe", external_id="x")

    def test_same_text_same_hash(self):
        assert Document(text="abc").content_hash == Document(text="abc", external_id="b").content_hash


class TestSegmentRoundTrip:

    def test_postings_and_positions(self, segment_path):
        reader = SegmentReader(segment_path)
        assert reader.lookup("cat") == {0: (1,), 1: (0,), 2: (2, 4)}
        assert reader.lookup("missing") == {}
        assert [p.doc_id for p in reader.postings("cat")] == [0, 1, 2]

    def test_terms_sorted(self, segment_path):
        terms = SegmentReader(segment_path).terms()
        assert terms == sorted(terms)
        assert set(terms) == {"the", "cat", "sat", "dog", "and"}

    def test_documents_preserved(self, segment_path):
        reader = SegmentReader(segment_path)
        assert reader.doc_ids == [0, 1, 2]
        doc = reader.get_document(2)
        assert doc.text == "dog and cat and cat"
        assert doc.external_id == "e2"
        assert doc.metadata == {"language": "eng"}
        assert [d.doc_id for d in reader.iter_documents()] == [0, 1, 2]
        assert reader.has_doc(1) and not reader.has_doc(3)

    def test_info(self, segment_path):
        info = SegmentReader(segment_path).info()
        assert info.segment_id == 0
        assert info.doc_count == 3
        assert info.raw_bytes == len("the cat sat") + len("cat") + len("dog and cat and cat")
        assert info.index_bytes == segment_path.stat().st_size + docs_path_for(segment_path).stat().st_size

    def test_mmap_reader_equivalent(self, segment_path):
        plain = SegmentReader(segment_path)
        mapped = open_segment(segment_path, use_mmap=True)
        for term in plain.terms():
            assert plain.lookup(term) == mapped.lookup(term)

    def test_written_bytes_match_disk(self, tmp_path):
        path = tmp_path / "seg_00004.ftsg"
        written = write_segment(_builder(["a b c"]), path)
        assert written == path.stat().st_size + docs_path_for(path).stat().st_size
        assert SegmentReader(path).segment_id == 4

    def test_thousand_random_documents(self, tmp_path, random_texts):
        builder = _builder(random_texts, first_doc_id=10)
        path = tmp_path / "seg_00001.ftsg"
        write_segment(builder, path)
        reader = SegmentReader(path)

        assert reader.doc_count == 1000
        for term, by_doc in builder.postings.items():
            assert reader.lookup(term) == {d: tuple(p) for d, p in by_doc.items()}

    def test_non_ascii_terms(self, tmp_path):
        path = tmp_path / "seg_00002.ftsg"
        write_segment(_builder(["Zürich ไทย العربية"]), path)
        reader = SegmentReader(path)
        assert reader.lookup("zurich") == {0: (0,)}
        assert "العربية" in reader.terms()


class TestSegmentValidation:

    def test_bad_magic(self, segment_path):
        data = bytearray(segment_path.read_bytes())
        data[:4] = b"XXXX"
        segment_path.write_bytes(bytes(data))
        with pytest.raises(BadMagic):
            SegmentReader(segment_path)

    def test_short_file_is_bad_magic(self, segment_path):
        segment_path.write_bytes(b"FT")
        with pytest.raises(BadMagic):
            SegmentReader(segment_path)

    def test_unsupported_version(self, segment_path):
        data = bytearray(segment_path.read_bytes())
        struct.pack_into("<I", data, 4, 99)
        segment_path.write_bytes(bytes(data))
        with pytest.raises(UnsupportedVersion):
            SegmentReader(segment_path)

    def test_flipped_body_byte(self, segment_path):
        data = bytearray(segment_path.read_bytes())
        data[-1] ^= 0xFF
        segment_path.write_bytes(bytes(data))
        with pytest.raises(Corrupt):
            SegmentReader(segment_path)

    def test_random_flips_always_detected(self, segment_path):
        # qualquer byte alterado no corpo quebra o checksum
        original = segment_path.read_bytes()
        rng = np.random.default_rng(5)
        for offset in rng.integers(20, len(original), size=10):
            data = bytearray(original)
            data[int(offset)] ^= 0x01
            segment_path.write_bytes(bytes(data))
            with pytest.raises(Corrupt):
                SegmentReader(segment_path)

    def test_truncated_docs_file(self, segment_path):
        docs = docs_path_for(segment_path)
        docs.write_bytes(docs.read_bytes()[:-5])
        with pytest.raises(Corrupt):
            SegmentReader(segment_path)
