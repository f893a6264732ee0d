"""Ingestão em massa paralela.

Um produtor lê a entrada e monta chunks; uma fila limitada (queue_size) alimenta
worker_count workers que entregam os documentos ao writer único do índice.
Os bytes em voo nunca passam de (queue_size + worker_count) * max_chunk_bytes.
"""
import gzip
import json
import logging
import os
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Union

import psutil
import pyarrow.parquet as pq
from pydantic import BaseModel, Field, PositiveFloat, PositiveInt

from core.exceptions import IndexClosed, InfeasibleBudget, InputUnreadable, InvalidUtf8
from core.invindex import Document, Indexed, SkippedDuplicate

logger = logging.getLogger(__name__)

DEFAULT_QUEUE_SIZE = 4
PARQUET_BATCH_ROWS = 1024
RECORD_FIELDS = ("id", "text", "source", "language", "url")


class BulkParams(BaseModel):
    worker_count: PositiveInt = 1
    chunk_size: PositiveInt = 500
    max_chunk_bytes: PositiveInt = 100 * 1024 * 1024
    queue_size: PositiveInt = DEFAULT_QUEUE_SIZE
    # None = sem refresh durante a carga (apenas o final)
    refresh_interval_seconds: Optional[PositiveFloat] = None

    @property
    def refresh_policy(self) -> str:
        if self.refresh_interval_seconds is None:
            return "disabled_during_bulk"
        return f"every_n_seconds({self.refresh_interval_seconds:g})"

    @property
    def inflight_envelope(self) -> int:
        return (self.queue_size + self.worker_count) * self.max_chunk_bytes


@dataclass
class DocError:
    source: str
    error: str


@dataclass
class BulkReport:
    docs_read: int = 0
    docs_indexed: int = 0
    docs_skipped_duplicate: int = 0
    docs_failed: int = 0
    errors: List[DocError] = field(default_factory=list)
    wall_seconds: float = 0.0
    indexing_rate: float = 0.0
    peak_inflight_bytes: int = 0
    peak_rss_estimate_bytes: int = 0
    oversized_docs: int = 0
    chunks: int = 0

    @property
    def duplicate_fraction(self) -> float:
        return self.docs_skipped_duplicate / self.docs_read if self.docs_read else 0.0

    def to_dict(self) -> Dict:
        return {
            "docs_read": self.docs_read,
            "docs_indexed": self.docs_indexed,
            "docs_skipped_duplicate": self.docs_skipped_duplicate,
            "docs_failed": self.docs_failed,
            "errors": [vars(e) for e in self.errors],
            "wall_seconds": round(self.wall_seconds, 4),
            "indexing_rate": round(self.indexing_rate, 2),
            "peak_inflight_bytes": self.peak_inflight_bytes,
            "peak_rss_estimate_bytes": self.peak_rss_estimate_bytes,
            "oversized_docs": self.oversized_docs,
            "chunks": self.chunks,
        }


# planejamento

def plan_bulk_params(avg_doc_size: int, max_chunk_bytes: int, cores: int, ram_budget: int,
                     queue_size: int = DEFAULT_QUEUE_SIZE) -> BulkParams:
    """
    Planeja os parâmetros a partir de chunk_size <= max_chunk_bytes / avg_doc_size

    Args:
        avg_doc_size: tamanho médio do documento (bytes)
        max_chunk_bytes: teto de payload por chunk
        cores: núcleos disponíveis (limite de workers)
        ram_budget: memória disponível para chunks em voo

    Returns:
        BulkParams respeitando (queue_size + worker_count) * max_chunk_bytes <= ram_budget
    """
    for name, value in (("avg_doc_size", avg_doc_size), ("max_chunk_bytes", max_chunk_bytes),
                        ("cores", cores), ("ram_budget", ram_budget), ("queue_size", queue_size)):
        if value <= 0:
            raise ValueError(f"{name} deve ser positivo, recebido {value}")

    workers = cores
    per_slot = ram_budget // (queue_size + workers)
    if per_slot < avg_doc_size:
        # menos workers antes de desistir
        workers = max(1, ram_budget // avg_doc_size - queue_size)
        per_slot = ram_budget // (queue_size + workers)
    if per_slot < avg_doc_size:
        raise InfeasibleBudget(
            f"Nem chunk_size=1 cabe no orçamento: ({queue_size} + 1) x {avg_doc_size} B > {ram_budget} B"
        )

    effective_max = min(max_chunk_bytes, per_slot)
    chunk_size = max(1, effective_max // avg_doc_size)
    params = BulkParams(worker_count=workers, chunk_size=chunk_size,
                        max_chunk_bytes=effective_max, queue_size=queue_size)
    logger.info(
        f"Parâmetros planejados: workers={workers}, chunk_size={chunk_size}, "
        f"max_chunk_bytes={effective_max}, queue_size={queue_size}"
    )
    return params


def estimate_throughput_ceiling(storage_round_trip_latency: float) -> float:
    """Teto de docs/s com duas idas ao storage por documento: 1 / (2 x latência)"""
    if storage_round_trip_latency <= 0:
        raise ValueError("latência deve ser > 0")
    return 1.0 / (2.0 * storage_round_trip_latency)


# leitura da entrada

@dataclass
class FailedRecord:
    source: str
    error: str


RawRecord = Union[Dict, FailedRecord, Document]


def _read_jsonl(path: Path) -> Iterator[RawRecord]:
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        f = opener(path, "rb")
    except OSError as e:
        raise InputUnreadable(f"Não foi possível abrir {path}: {e}") from e
    with f:
        try:
            for line_no, raw in enumerate(f, start=1):
                if not raw.strip():
                    continue
                where = f"{path.name}:{line_no}"
                try:
                    line = raw.decode("utf-8")
                except UnicodeDecodeError as e:
                    yield FailedRecord(where, f"InvalidUtf8: {e}")
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    yield FailedRecord(where, f"JSON inválido: {e}")
                    continue
                if not isinstance(record, dict):
                    yield FailedRecord(where, "registro não é um objeto")
                    continue
                record.setdefault("_where", where)
                yield record
        except (OSError, EOFError) as e:
            raise InputUnreadable(f"Erro de leitura em {path}: {e}") from e


def _read_parquet(path: Path) -> Iterator[RawRecord]:
    try:
        parquet_file = pq.ParquetFile(path)
    except (OSError, ValueError) as e:
        raise InputUnreadable(f"Parquet ilegível {path}: {e}") from e
    row = 0
    for batch in parquet_file.iter_batches(batch_size=PARQUET_BATCH_ROWS):
        frame = batch.to_pandas()
        for record in frame.to_dict(orient="records"):
            row += 1
            record["_where"] = f"{path.name}:{row}"
            yield record


def read_documents(paths: Sequence[Union[str, Path]]) -> Iterator[RawRecord]:
    """
    Lê JSONL (.jsonl, .json, .jsonl.gz) e Parquet em fluxo

    Registros ruins viram FailedRecord; arquivos ilegíveis levantam InputUnreadable.
    """
    for p in paths:
        path = Path(p)
        if not path.exists():
            raise InputUnreadable(f"Arquivo não encontrado: {path}")
        suffixes = "".join(path.suffixes[-2:])
        if path.suffix == ".parquet":
            yield from _read_parquet(path)
        elif path.suffix in (".jsonl", ".json", ".ndjson") or suffixes in (".jsonl.gz", ".json.gz", ".ndjson.gz"):
            yield from _read_jsonl(path)
        else:
            raise InputUnreadable(f"Formato não suportado: {path}")


def record_to_document(record: Dict) -> Document:
    text = record.get("text")
    if text is None:
        raise ValueError("registro sem campo 'text'")
    if not isinstance(text, (str, bytes, bytearray)):
        raise ValueError(f"'text' deve ser string, recebido {type(text).__name__}")
    metadata = {
        key: (str(record[key]) if record.get(key) is not None else None)
        for key in ("source", "language", "url")
    }
    external_id = record.get("id")
    return Document(
        text=text,
        external_id=str(external_id) if external_id is not None else None,
        metadata=metadata,
    )


# controle de bytes em voo

class InflightTracker:
    """Semáforo de bytes: bloqueia o produtor quando o envelope ficaria estourado"""

    def __init__(self, envelope: int, observer: Optional[Callable[[int], None]] = None):
        self.envelope = envelope
        self.current = 0
        self.peak = 0
        self._observer = observer
        self._cond = threading.Condition()
        self._aborted = False

    def acquire(self, nbytes: int):
        with self._cond:
            # documento maior que o envelope só entra sozinho
            self._cond.wait_for(
                lambda: self._aborted or self.current + nbytes <= self.envelope or self.current == 0
            )
            self.current += nbytes
            self.peak = max(self.peak, self.current)
            if self._observer:
                self._observer(self.current)

    def release(self, nbytes: int):
        with self._cond:
            self.current -= nbytes
            if self._observer:
                self._observer(self.current)
            self._cond.notify_all()

    def abort(self):
        with self._cond:
            self._aborted = True
            self._cond.notify_all()


class _RssSampler(threading.Thread):
    def __init__(self, interval: float = 0.1):
        super().__init__(daemon=True)
        self.interval = interval
        self.peak = 0
        self._stop_event = threading.Event()
        self._process = psutil.Process(os.getpid())

    def run(self):
        while not self._stop_event.is_set():
            self.peak = max(self.peak, self._process.memory_info().rss)
            self._stop_event.wait(self.interval)

    def stop(self) -> int:
        self._stop_event.set()
        self.join()
        return self.peak


@dataclass
class _Chunk:
    documents: List[Document]
    nbytes: int
    oversized: bool = False


@dataclass
class _ChunkResult:
    indexed: int = 0
    skipped: int = 0
    errors: List[DocError] = field(default_factory=list)


def _chunks(records: Iterable[RawRecord], params: BulkParams, report: BulkReport) -> Iterator[_Chunk]:
    batch: List[Document] = []
    nbytes = 0
    for record in records:
        report.docs_read += 1
        if isinstance(record, FailedRecord):
            report.docs_failed += 1
            report.errors.append(DocError(record.source, record.error))
            continue
        try:
            doc = record if isinstance(record, Document) else record_to_document(record)
            size = doc.size_bytes
        except (InvalidUtf8, ValueError) as e:
            where = record.get("_where", "?") if isinstance(record, dict) else "?"
            report.docs_failed += 1
            report.errors.append(DocError(where, f"{type(e).__name__}: {e}"))
            continue

        if size > params.max_chunk_bytes:
            # indexado sozinho e sinalizado
            if batch:
                yield _Chunk(batch, nbytes)
                batch, nbytes = [], 0
            report.oversized_docs += 1
            logger.warning(f"Documento {doc.external_id!r} com {size} B excede max_chunk_bytes")
            yield _Chunk([doc], size, oversized=True)
            continue

        if batch and (len(batch) >= params.chunk_size or nbytes + size > params.max_chunk_bytes):
            yield _Chunk(batch, nbytes)
            batch, nbytes = [], 0
        batch.append(doc)
        nbytes += size
    if batch:
        yield _Chunk(batch, nbytes)


def bulk_index(index, input: Iterable[RawRecord], params: BulkParams, dedup: bool = False,
               sample_rss: bool = False,
               inflight_observer: Optional[Callable[[int], None]] = None) -> BulkReport:
    """
    Indexa um fluxo de documentos em paralelo, sem atomicidade por lote

    Args:
        index: Index aberto para escrita
        input: registros (dicts de read_documents, FailedRecord ou Document)
        params: parâmetros de ingestão
        dedup: pula documentos com SHA-256 já visto
        sample_rss: ativa amostragem de RSS do processo (psutil)
        inflight_observer: chamado a cada mudança do contador de bytes em voo

    Returns:
        BulkReport com contagens, tempo e picos de memória
    """
    if index.closed:
        raise IndexClosed(f"Índice fechado: {index.path}")
    cores = os.cpu_count() or 1
    if params.worker_count > cores:
        logger.warning(f"worker_count={params.worker_count} maior que os {cores} núcleos disponíveis")

    report = BulkReport()
    tracker = InflightTracker(params.inflight_envelope, inflight_observer)
    work: "queue.Queue[Optional[_Chunk]]" = queue.Queue(maxsize=params.queue_size)
    results: "queue.Queue[_ChunkResult]" = queue.Queue()
    fatal: List[BaseException] = []
    refresh_lock = threading.Lock()
    last_refresh = [time.monotonic()]

    def maybe_refresh():
        interval = params.refresh_interval_seconds
        if interval is None:
            return
        with refresh_lock:
            if time.monotonic() - last_refresh[0] >= interval:
                index.refresh()
                last_refresh[0] = time.monotonic()

    def worker():
        while True:
            chunk = work.get()
            if chunk is None:
                return
            result = _ChunkResult()
            try:
                for doc in chunk.documents:
                    if fatal:
                        break
                    try:
                        outcome = index.add_document(doc, dedup=dedup)
                    except IndexClosed as e:
                        fatal.append(e)
                        tracker.abort()
                        break
                    except Exception as e:
                        result.errors.append(DocError(str(doc.external_id), f"{type(e).__name__}: {e}"))
                        continue
                    if isinstance(outcome, Indexed):
                        result.indexed += 1
                    elif isinstance(outcome, SkippedDuplicate):
                        result.skipped += 1
                if not fatal:
                    maybe_refresh()
            except Exception as e:
                logger.error(f"Falha no worker: {e}")
                fatal.append(e)
                tracker.abort()
            finally:
                tracker.release(chunk.nbytes)
                results.put(result)

    sampler = _RssSampler() if sample_rss else None
    if sampler:
        sampler.start()

    logger.info(
        f"Iniciando bulk: workers={params.worker_count}, chunk_size={params.chunk_size}, "
        f"max_chunk_bytes={params.max_chunk_bytes}, queue_size={params.queue_size}, "
        f"refresh={params.refresh_policy}, dedup={dedup}"
    )
    started = time.perf_counter()
    threads = [threading.Thread(target=worker, name=f"bulk-worker-{i}", daemon=True)
               for i in range(params.worker_count)]
    for t in threads:
        t.start()

    try:
        for chunk in _chunks(input, params, report):
            if fatal:
                break
            tracker.acquire(chunk.nbytes)
            work.put(chunk)
            report.chunks += 1
    except BaseException as e:
        fatal.append(e)
        tracker.abort()
    finally:
        for _ in threads:
            work.put(None)
        for t in threads:
            t.join()

    while not results.empty():
        result = results.get()
        report.docs_indexed += result.indexed
        report.docs_skipped_duplicate += result.skipped
        report.docs_failed += len(result.errors)
        report.errors.extend(result.errors)

    if fatal:
        if sampler:
            sampler.stop()
        logger.error(f"Bulk interrompido: {fatal[0]}")
        raise fatal[0]

    index.refresh()
    report.wall_seconds = time.perf_counter() - started
    report.indexing_rate = report.docs_indexed / report.wall_seconds if report.wall_seconds > 0 else 0.0
    report.peak_inflight_bytes = tracker.peak
    report.peak_rss_estimate_bytes = sampler.stop() if sampler else tracker.peak
    index.record_ingest(report.wall_seconds, report.peak_inflight_bytes)

    for err in report.errors[:10]:
        logger.warning(f"Documento com falha {err.source}: {err.error}")
    logger.info(
        f"Bulk concluído: {report.docs_indexed} indexados, {report.docs_skipped_duplicate} duplicados, "
        f"{report.docs_failed} falhas em {report.wall_seconds:.2f}s ({report.indexing_rate:.1f} docs/s)"
    )
    return report
