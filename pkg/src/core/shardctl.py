"""Roteamento por hash, scatter-gather entre shards e merge (reindex) de índices"""
import hashlib
import json
import logging
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Union
from urllib.parse import urlparse

import requests
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from core.bulkingest import BulkParams, BulkReport, DocError, FailedRecord, RawRecord, bulk_index, record_to_document
from core.exceptions import (
    DestNotEmpty,
    IndexClosed,
    IndexingError,
    InvalidUtf8,
    IoFailure,
    QueryError,
    ShardUnavailable,
    SourceUnreachable,
    UnknownIndex,
)
from core.invindex import Document, Index, Indexed, SkippedDuplicate
from core.queryengine import QueryAst, count, occurrence_count
from core.textanalysis import AnalyzerConfig

logger = logging.getLogger(__name__)

SHARDS_MANIFEST = "shards.json"
DEFAULT_PAGE_SIZE = 1000
REMOTE_TIMEOUT = 30


def route(routing_key: str, n_shards: int) -> int:
    """Primeiros 8 bytes do SHA-256 da chave (big-endian) mod n_shards"""
    if n_shards < 1:
        raise ValueError("n_shards deve ser >= 1")
    digest = hashlib.sha256(routing_key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % n_shards


class ShardSet:
    """
    Conjunto de índices independentes (shard_00, shard_01, ...) sob um diretório.

    route_by="id" usa external_id (ou o hash do conteúdo se ausente);
    route_by="content" usa sempre o hash, o que mantém duplicatas no mesmo shard.
    """

    def __init__(self, path: Path, shards: List[Index], seed: str = "", route_by: str = "id"):
        if route_by not in ("id", "content"):
            raise ValueError(f"route_by inválido: {route_by}")
        self.path = Path(path)
        self.shards = shards
        self.seed = seed
        self.route_by = route_by

    @property
    def n_shards(self) -> int:
        return len(self.shards)

    @classmethod
    def create(cls, path, n_shards: int, analyzer: Optional[AnalyzerConfig] = None,
               seed: str = "", route_by: str = "id") -> "ShardSet":
        if n_shards < 1:
            raise ValueError("n_shards deve ser >= 1")
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        shards = [Index.create(path / f"shard_{i:02d}", analyzer=analyzer) for i in range(n_shards)]
        with open(path / SHARDS_MANIFEST, "w", encoding="utf-8") as f:
            json.dump({"n_shards": n_shards, "seed": seed, "route_by": route_by}, f, indent=2)
        logger.info(f"ShardSet criado em {path} com {n_shards} shards")
        return cls(path, shards, seed, route_by)

    @classmethod
    def open(cls, path) -> "ShardSet":
        path = Path(path)
        manifest_path = path / SHARDS_MANIFEST
        if not manifest_path.exists():
            raise UnknownIndex(f"ShardSet não encontrado: {path}")
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        shards = []
        for i in range(manifest["n_shards"]):
            try:
                shards.append(Index.open(path / f"shard_{i:02d}"))
            except (UnknownIndex, IoFailure) as e:
                raise ShardUnavailable(i, str(e)) from e
        return cls(path, shards, manifest.get("seed", ""), manifest.get("route_by", "id"))

    @staticmethod
    def is_shard_set(path) -> bool:
        return (Path(path) / SHARDS_MANIFEST).exists()

    def routing_key(self, doc: Document) -> str:
        if self.route_by == "id" and doc.external_id is not None:
            return self.seed + doc.external_id
        return self.seed + doc.content_hash.hex()

    def shard_for(self, doc: Document) -> int:
        return route(self.routing_key(doc), self.n_shards)

    def add_document(self, doc: Document, dedup: bool = False):
        return self.shards[self.shard_for(doc)].add_document(doc, dedup=dedup)

    def refresh_all(self):
        return [shard.refresh() for shard in self.shards]

    def close(self):
        for shard in self.shards:
            shard.close()

    @property
    def doc_count(self) -> int:
        return sum(shard.doc_count for shard in self.shards)

    def bulk_index(self, records: Iterable[RawRecord], params: BulkParams, dedup: bool = False) -> BulkReport:
        """Roteia o fluxo para um bulk_index por shard, todos em paralelo"""
        feeds: List["queue.Queue"] = [queue.Queue(maxsize=params.queue_size * params.chunk_size)
                                      for _ in self.shards]
        done = object()

        def drain(q):
            while True:
                item = q.get()
                if item is done:
                    return
                yield item

        reports: List[Optional[BulkReport]] = [None] * self.n_shards
        errors: List[BaseException] = []

        def run(i):
            try:
                reports[i] = bulk_index(self.shards[i], drain(feeds[i]), params, dedup=dedup)
            except BaseException as e:
                errors.append(e)
                for _ in drain(feeds[i]):
                    pass

        threads = [threading.Thread(target=run, args=(i,), daemon=True) for i in range(self.n_shards)]
        for t in threads:
            t.start()

        failed = BulkReport()
        try:
            for record in records:
                if isinstance(record, FailedRecord):
                    feeds[0].put(record)
                    continue
                try:
                    doc = record if isinstance(record, Document) else record_to_document(record)
                except (InvalidUtf8, ValueError) as e:
                    failed.docs_read += 1
                    failed.docs_failed += 1
                    failed.errors.append(DocError(str(record.get("_where", "?")), f"{type(e).__name__}: {e}"))
                    continue
                feeds[self.shard_for(doc)].put(doc)
        finally:
            for q in feeds:
                q.put(done)
            for t in threads:
                t.join()
        if errors:
            raise errors[0]
        return combine_bulk_reports([failed] + [r for r in reports if r is not None])


def combine_bulk_reports(reports: Sequence[BulkReport]) -> BulkReport:
    combined = BulkReport()
    for r in reports:
        combined.docs_read += r.docs_read
        combined.docs_indexed += r.docs_indexed
        combined.docs_skipped_duplicate += r.docs_skipped_duplicate
        combined.docs_failed += r.docs_failed
        combined.errors.extend(r.errors)
        combined.wall_seconds = max(combined.wall_seconds, r.wall_seconds)
        combined.peak_inflight_bytes += r.peak_inflight_bytes
        combined.peak_rss_estimate_bytes = max(combined.peak_rss_estimate_bytes, r.peak_rss_estimate_bytes)
        combined.oversized_docs += r.oversized_docs
        combined.chunks += r.chunks
    if combined.wall_seconds > 0:
        combined.indexing_rate = combined.docs_indexed / combined.wall_seconds
    return combined


# scatter-gather

def _shard_list(shards) -> List:
    if isinstance(shards, ShardSet):
        return list(shards.shards)
    return list(shards)


def _scatter(shards, fn: Callable, fail_on_empty: bool = False) -> List:
    members = _shard_list(shards)
    if not members:
        if fail_on_empty:
            raise ShardUnavailable(-1, "conjunto de shards vazio")
        logger.warning("Scatter-gather sobre conjunto vazio de shards; resultado 0")
        return []

    def call(i, shard):
        if getattr(shard, "closed", False):
            raise ShardUnavailable(i, "índice fechado")
        try:
            return fn(shard)
        except QueryError:
            raise
        except (IoFailure, IndexClosed, OSError) as e:
            raise ShardUnavailable(i, str(e)) from e

    with ThreadPoolExecutor(max_workers=len(members)) as pool:
        futures = [pool.submit(call, i, shard) for i, shard in enumerate(members)]
        return [f.result() for f in futures]


def scatter_gather_count(shards, ast: QueryAst, fail_on_empty: bool = False) -> int:
    """Soma das contagens por shard (cada documento vive em exatamente um shard)"""
    return sum(_scatter(shards, lambda s: count(s, ast), fail_on_empty))


def scatter_gather_occurrences(shards, ast: QueryAst, fail_on_empty: bool = False) -> int:
    return sum(_scatter(shards, lambda s: occurrence_count(s, ast), fail_on_empty))


# merge / reindex

@dataclass
class MergeReport:
    sources: int = 0
    docs_copied: int = 0
    docs_skipped_duplicate: int = 0
    docs_failed: int = 0
    wall_seconds: float = 0.0
    errors: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "sources": self.sources,
            "docs_copied": self.docs_copied,
            "docs_skipped_duplicate": self.docs_skipped_duplicate,
            "docs_failed": self.docs_failed,
            "wall_seconds": round(self.wall_seconds, 4),
            "errors": self.errors[:100],
        }


def _is_remote(source) -> bool:
    return isinstance(source, str) and source.startswith(("http://", "https://"))


@retry(stop=stop_after_attempt(3),
       wait=wait_exponential(multiplier=0.5, min=0.5, max=5),
       retry=retry_if_exception_type((requests.ConnectionError, requests.Timeout)),
       reraise=True)
def _fetch_page(url: str, body: Dict) -> Dict:
    response = requests.post(url, json=body, timeout=REMOTE_TIMEOUT)
    response.raise_for_status()
    return response.json()


def drain_remote(url: str, page_size: int = DEFAULT_PAGE_SIZE) -> Iterator[Document]:
    """
    Pagina /{index}/_search (from/size, ordenado por doc_id) de um servidor remoto

    Args:
        url: http://host:port/{index}
        page_size: documentos por página
    """
    parsed = urlparse(url)
    index_name = parsed.path.strip("/")
    if not index_name:
        raise SourceUnreachable(f"URL sem nome de índice: {url}")
    search_url = f"{parsed.scheme}://{parsed.netloc}/{index_name}/_search"

    offset = 0
    while True:
        body = {"query": {"match_all": {}}, "from": offset, "size": page_size,
                "sort": "doc_id", "_source": True}
        try:
            page = _fetch_page(search_url, body)
        except requests.RequestException as e:
            raise SourceUnreachable(f"Fonte remota inacessível {url}: {e}") from e
        hits = page.get("hits", [])
        for hit in hits:
            source = hit.get("_source") or {}
            yield Document(
                text=source.get("text", ""),
                external_id=hit.get("external_id"),
                metadata={k: source.get(k) for k in ("source", "language", "url")},
            )
        if len(hits) < page_size:
            return
        offset += len(hits)


def _iter_source(source, page_size: int) -> Iterator[Document]:
    if _is_remote(source):
        yield from drain_remote(source, page_size)
        return
    if isinstance(source, (Index, ShardSet)):
        targets = source.shards if isinstance(source, ShardSet) else [source]
    else:
        try:
            if ShardSet.is_shard_set(source):
                targets = ShardSet.open(source).shards
            else:
                targets = [Index.open(source)]
        except (UnknownIndex, ShardUnavailable, IoFailure) as e:
            raise SourceUnreachable(f"Fonte inacessível {source}: {e}") from e
    for target in targets:
        for doc in target.iter_documents():
            yield Document(text=doc.text, external_id=doc.external_id, metadata=dict(doc.metadata))


def merge_indices(sources: Sequence[Union[str, Path, Index]], dest: Union[str, Path, Index],
                  dedup: bool = False, append: bool = False,
                  page_size: int = DEFAULT_PAGE_SIZE,
                  analyzer: Optional[AnalyzerConfig] = None) -> MergeReport:
    """
    Reindexa os documentos das fontes no destino (os textos são reanalisados)

    Args:
        sources: diretórios de índice/shards, objetos Index ou URLs http://host:port/{index}
        dest: diretório ou Index de destino
        dedup: pula documentos com SHA-256 já presente no destino
        append: permite destino não vazio
        page_size: tamanho de página para fontes remotas

    Returns:
        MergeReport
    """
    started = time.perf_counter()
    dest_index = dest if isinstance(dest, Index) else Index.open_or_create(dest, analyzer=analyzer)
    if not append and (dest_index.doc_count or dest_index.pending_count):
        raise DestNotEmpty(f"Destino {dest_index.path} não está vazio (use append)")

    report = MergeReport(sources=len(sources))
    lock = threading.Lock()

    def copy(source):
        copied = skipped = failed = 0
        errors = []
        for doc in _iter_source(source, page_size):
            try:
                outcome = dest_index.add_document(doc, dedup=dedup)
            except IndexClosed:
                raise
            except IndexingError as e:
                failed += 1
                errors.append(f"{source}:{doc.external_id}: {e}")
                continue
            if isinstance(outcome, Indexed):
                copied += 1
            elif isinstance(outcome, SkippedDuplicate):
                skipped += 1
        with lock:
            report.docs_copied += copied
            report.docs_skipped_duplicate += skipped
            report.docs_failed += failed
            report.errors.extend(errors)
        logger.info(f"Fonte {source}: {copied} copiados, {skipped} duplicados, {failed} falhas")

    if sources:
        with ThreadPoolExecutor(max_workers=len(sources)) as pool:
            for future in [pool.submit(copy, s) for s in sources]:
                future.result()

    dest_index.refresh()
    report.wall_seconds = time.perf_counter() - started
    logger.info(
        f"Merge concluído em {report.wall_seconds:.2f}s: {report.docs_copied} copiados de {report.sources} fontes"
    )
    return report
