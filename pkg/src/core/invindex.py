"""Índice invertido posicional: writer único, segmentos selados e deduplicação SHA-256"""
import json
import logging
import os
import struct
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

from core.exceptions import IndexClosed, IoFailure, UnknownIndex
from core.segment_store import (
    Document,
    Posting,
    SegmentBuilder,
    SegmentInfo,
    SegmentReader,
    content_hash,
    open_segment,
    write_segment,
)
from core.textanalysis import WEB_CONTENT_ANALYZER, AnalyzerConfig, analyze_terms

logger = logging.getLogger(__name__)

__all__ = [
    "Document", "Posting", "SegmentInfo", "content_hash", "write_segment", "open_segment",
    "Indexed", "SkippedDuplicate", "DedupRegistry", "IndexCounters", "IndexSnapshot", "Index",
]

MANIFEST_FILE = "index.json"
DEDUP_FILE = "dedup.bin"
_DEDUP_RECORD = struct.Struct("<32sQ")


@dataclass(frozen=True)
class Indexed:
    doc_id: int


@dataclass(frozen=True)
class SkippedDuplicate:
    existing_doc_id: int


AddResult = Union[Indexed, SkippedDuplicate]


class DedupRegistry:
    """Digests vistos neste índice -> primeiro doc_id com aquele conteúdo"""

    def __init__(self):
        self._digests: Dict[bytes, int] = {}
        self._unsaved: List[Tuple[bytes, int]] = []

    def __len__(self):
        return len(self._digests)

    def __contains__(self, digest: bytes) -> bool:
        return digest in self._digests

    def get(self, digest: bytes) -> Optional[int]:
        return self._digests.get(digest)

    def record(self, digest: bytes, doc_id: int):
        if digest not in self._digests:
            self._digests[digest] = doc_id
            self._unsaved.append((digest, doc_id))

    def flush(self, path: Path):
        # arquivo só cresce: registros (digest, doc_id)
        if not self._unsaved:
            return
        with open(path, "ab") as f:
            for digest, doc_id in self._unsaved:
                f.write(_DEDUP_RECORD.pack(digest, doc_id))
        self._unsaved = []

    @classmethod
    def load(cls, path: Path) -> "DedupRegistry":
        registry = cls()
        if path.exists():
            data = path.read_bytes()
            for digest, doc_id in _DEDUP_RECORD.iter_unpack(data[:len(data) - len(data) % _DEDUP_RECORD.size]):
                registry._digests.setdefault(digest, doc_id)
        return registry


@dataclass
class IndexCounters:
    docs_indexed: int = 0
    docs_skipped_duplicate: int = 0
    raw_bytes: int = 0
    index_bytes: int = 0
    ingest_seconds: float = 0.0
    peak_inflight_bytes: int = 0
    deduplicated: bool = False


class IndexSnapshot:
    """Visão imutável dos segmentos selados no momento do último refresh"""

    def __init__(self, segments: Tuple[SegmentReader, ...], analyzer: AnalyzerConfig):
        self.segments = segments
        self.analyzer = analyzer

    def snapshot(self) -> "IndexSnapshot":
        return self

    @property
    def doc_count(self) -> int:
        return sum(s.doc_count for s in self.segments)

    def lookup(self, term: str) -> Dict[int, Tuple[int, ...]]:
        merged: Dict[int, Tuple[int, ...]] = {}
        for segment in self.segments:
            merged.update(segment.lookup(term))
        return merged

    def postings(self, term: str) -> List[Posting]:
        return [Posting(d, p) for d, p in sorted(self.lookup(term).items())]

    def doc_ids(self) -> List[int]:
        ids: List[int] = []
        for segment in self.segments:
            ids.extend(segment.doc_ids)
        return sorted(ids)

    def get_document(self, doc_id: int) -> Optional[Document]:
        for segment in self.segments:
            if segment.has_doc(doc_id):
                return segment.get_document(doc_id)
        return None

    def iter_documents(self, after_doc_id: int = -1, limit: Optional[int] = None) -> Iterator[Document]:
        """Documentos em ordem crescente de doc_id, começando depois de after_doc_id"""
        emitted = 0
        # segmentos têm faixas de doc_id disjuntas e crescentes
        for segment in sorted(self.segments, key=lambda s: s.doc_ids[0] if s.doc_ids else -1):
            for doc_id in segment.doc_ids:
                if doc_id <= after_doc_id:
                    continue
                if limit is not None and emitted >= limit:
                    return
                yield segment.get_document(doc_id)
                emitted += 1


class Index:
    """
    Índice em diretório: index.json (manifesto), dedup.bin e seg_NNNNNN.{ftsg,docs}.

    Um writer por vez (lock interno); leitores usam snapshot() e não bloqueiam.
    """

    def __init__(self, path: Path, analyzer: AnalyzerConfig, use_mmap: bool = False):
        self.path = Path(path)
        self.analyzer = analyzer
        self.use_mmap = use_mmap
        self.counters = IndexCounters()
        self.next_doc_id = 0
        self.next_segment_id = 0
        self.dedup = DedupRegistry()
        self._segments: Tuple[SegmentReader, ...] = ()
        self._pending: Optional[SegmentBuilder] = None
        self._lock = threading.RLock()
        self._closed = False

    @classmethod
    def create(cls, path, analyzer: Optional[AnalyzerConfig] = None,
               use_mmap: bool = False, exist_ok: bool = False) -> "Index":
        path = Path(path)
        if (path / MANIFEST_FILE).exists():
            if exist_ok:
                return cls.open(path, use_mmap=use_mmap)
            raise FileExistsError(f"Índice já existe: {path}")
        path.mkdir(parents=True, exist_ok=True)
        index = cls(path, analyzer or WEB_CONTENT_ANALYZER, use_mmap)
        index._save_manifest()
        logger.info(f"Índice criado em {path} (analyzer={index.analyzer.name})")
        return index

    @classmethod
    def open(cls, path, use_mmap: bool = False) -> "Index":
        path = Path(path)
        manifest_path = path / MANIFEST_FILE
        if not manifest_path.exists():
            raise UnknownIndex(f"Índice não encontrado: {path}")
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)

        index = cls(path, AnalyzerConfig(**manifest["analyzer"]), use_mmap)
        index.next_doc_id = manifest["next_doc_id"]
        index.next_segment_id = manifest["next_segment_id"]
        index.counters = IndexCounters(**manifest.get("counters", {}))
        index._segments = tuple(
            open_segment(index._segment_path(sid), use_mmap=use_mmap) for sid in manifest["segments"]
        )
        index.dedup = DedupRegistry.load(path / DEDUP_FILE)
        logger.info(f"Índice aberto: {path} ({len(index._segments)} segmentos, {index.doc_count} docs)")
        return index

    @classmethod
    def open_or_create(cls, path, analyzer: Optional[AnalyzerConfig] = None, use_mmap: bool = False) -> "Index":
        return cls.create(path, analyzer=analyzer, use_mmap=use_mmap, exist_ok=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _segment_path(self, segment_id: int) -> Path:
        return self.path / f"seg_{segment_id:06d}.ftsg"

    def _save_manifest(self):
        manifest = {
            "version": 1,
            "analyzer": {"name": self.analyzer.name, "stages": list(self.analyzer.stages)},
            "next_doc_id": self.next_doc_id,
            "next_segment_id": self.next_segment_id,
            "segments": [s.segment_id for s in self._segments],
            "counters": asdict(self.counters),
        }
        tmp = self.path / (MANIFEST_FILE + ".tmp")
        try:
            with open(tmp, "w", encoding="utf-8") as f:
                json.dump(manifest, f, indent=2)
            os.replace(tmp, self.path / MANIFEST_FILE)
        except OSError as e:
            raise IoFailure(f"Erro ao gravar manifesto: {e}") from e

    # escrita

    def _check_open(self):
        if self._closed:
            raise IndexClosed(f"Índice fechado: {self.path}")

    def add_document(self, doc: Document, dedup: bool = False) -> AddResult:
        """
        Analisa e adiciona o documento ao segmento em memória

        Args:
            doc: documento (doc_id é atribuído aqui)
            dedup: pula documentos cujo SHA-256 já foi visto

        Returns:
            Indexed(doc_id) ou SkippedDuplicate(doc_id existente)
        """
        terms = analyze_terms(doc.text, self.analyzer)
        with self._lock:
            self._check_open()
            if dedup:
                self.counters.deduplicated = True
                existing = self.dedup.get(doc.content_hash)
                if existing is not None:
                    self.counters.docs_skipped_duplicate += 1
                    return SkippedDuplicate(existing)

            doc.doc_id = self.next_doc_id
            self.next_doc_id += 1
            if self._pending is None:
                self._pending = SegmentBuilder(self.next_segment_id)
            self._pending.add(doc, terms)
            self.dedup.record(doc.content_hash, doc.doc_id)
            self.counters.docs_indexed += 1
            self.counters.raw_bytes += doc.size_bytes
            return Indexed(doc.doc_id)

    def refresh(self) -> Optional[SegmentInfo]:
        """Sela o segmento pendente e o torna visível. Sem pendências, não faz nada."""
        with self._lock:
            self._check_open()
            pending = self._pending
            if pending is None or pending.doc_count == 0:
                return None

            path = self._segment_path(pending.segment_id)
            try:
                index_bytes = write_segment(pending, path)
            except Exception:
                logger.error(f"Falha ao selar o segmento {pending.segment_id}")
                raise
            reader = open_segment(path, use_mmap=self.use_mmap)

            self._pending = None
            self.next_segment_id += 1
            self._segments = self._segments + (reader,)
            self.counters.index_bytes += index_bytes
            self.dedup.flush(self.path / DEDUP_FILE)
            self._save_manifest()

            info = SegmentInfo(pending.segment_id, pending.doc_count, pending.raw_bytes, index_bytes, str(path))
            logger.info(f"Refresh: segmento {info.segment_id} com {info.doc_count} docs ({index_bytes} bytes)")
            return info

    def record_ingest(self, seconds: float, peak_inflight_bytes: int = 0):
        with self._lock:
            self.counters.ingest_seconds += seconds
            self.counters.peak_inflight_bytes = max(self.counters.peak_inflight_bytes, peak_inflight_bytes)
            if not self._closed:
                self._save_manifest()

    def close(self):
        with self._lock:
            if self._closed:
                return
            if self._pending is not None and self._pending.doc_count:
                self.refresh()
            self._save_manifest()
            self._closed = True

    # leitura

    @property
    def closed(self) -> bool:
        return self._closed

    def snapshot(self) -> IndexSnapshot:
        return IndexSnapshot(self._segments, self.analyzer)

    @property
    def doc_count(self) -> int:
        return sum(s.doc_count for s in self._segments)

    @property
    def pending_count(self) -> int:
        pending = self._pending
        return pending.doc_count if pending else 0

    @property
    def segments(self) -> Tuple[SegmentReader, ...]:
        return self._segments

    def get_document(self, doc_id: int) -> Optional[Document]:
        return self.snapshot().get_document(doc_id)

    def iter_documents(self, after_doc_id: int = -1, limit: Optional[int] = None) -> Iterator[Document]:
        return self.snapshot().iter_documents(after_doc_id, limit)
