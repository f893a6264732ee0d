import json
import logging
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.exceptions import CorpusTooSmall
from core.queryengine import MatchPhrase, phrase_positions_match, search
from core.textanalysis import analyze_terms

logger = logging.getLogger(__name__)

# 13 comprimentos em [1, 300]
DEFAULT_LENGTHS = (1, 2, 5, 10, 20, 40, 60, 90, 120, 160, 200, 250, 300)
DEFAULT_SAMPLES = 25

STATS_COLUMNS = [
    "dataset_label",
    "data_size_bytes",
    "wall_seconds",
    "docs_indexed",
    "indexing_rate",
    "index_size_bytes",
    "size_ratio",
    "avg_peak_memory_bytes",
    "deduplicated",
]
BENCH_COLUMNS = ["length", "mean_ms", "std_ms", "samples", "self_hits"]


## Estatísticas de indexação de um dataset
@dataclass
class IndexStats:
    dataset_label: str
    data_size_bytes: int
    wall_seconds: float
    docs_indexed: int
    indexing_rate: float
    index_size_bytes: int
    size_ratio: float
    avg_peak_memory_bytes: int
    deduplicated: bool = False

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class LengthStats:
    length: int
    mean_ms: float
    std_ms: float
    samples: List[float]
    queries: List[Tuple[int, str]] = field(default_factory=list)
    self_hits: int = 0


@dataclass
class LatencyBenchReport:
    lengths: List[int]
    samples_per_length: int
    seed: int
    per_length: Dict[int, LengthStats]
    index_doc_count: int = 0
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat())

    @property
    def measurements(self) -> int:
        return sum(len(s.samples) for s in self.per_length.values())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "length": s.length,
                    "mean_ms": s.mean_ms,
                    "std_ms": s.std_ms,
                    "samples": len(s.samples),
                    "self_hits": s.self_hits,
                }
                for s in (self.per_length[length] for length in self.lengths)
            ],
            columns=BENCH_COLUMNS,
        )

    def to_dict(self) -> Dict:
        return {
            "lengths": self.lengths,
            "samples_per_length": self.samples_per_length,
            "seed": self.seed,
            "index_doc_count": self.index_doc_count,
            "timestamp": self.timestamp,
            "per_length": {
                str(length): {
                    "mean_ms": s.mean_ms,
                    "std_ms": s.std_ms,
                    "samples": s.samples,
                    "self_hits": s.self_hits,
                }
                for length, s in self.per_length.items()
            },
        }


def _segment_files_size(index) -> int:
    total = 0
    for segment in index.segments:
        for path in (segment.path, segment.path.with_suffix(".docs")):
            if path.exists():
                total += path.stat().st_size
    return total


def snapshot_stats(index, dataset_label: str) -> IndexStats:
    """
    Monta a linha de estatísticas a partir dos contadores do writer e dos tamanhos em disco

    Args:
        index: Index (ou ShardSet, agregando os shards)
        dataset_label: nome do dataset na tabela

    Returns:
        IndexStats
    """
    members = getattr(index, "shards", None) or [index]
    data_size = sum(m.counters.raw_bytes for m in members)
    docs = sum(m.counters.docs_indexed for m in members)
    # shards indexam em paralelo: o tempo é o do mais lento
    wall = max(m.counters.ingest_seconds for m in members)
    index_size = sum(_segment_files_size(m) for m in members)
    peak = sum(m.counters.peak_inflight_bytes for m in members)
    deduplicated = any(m.counters.deduplicated for m in members)

    stats = IndexStats(
        dataset_label=dataset_label,
        data_size_bytes=data_size,
        wall_seconds=round(wall, 4),
        docs_indexed=docs,
        indexing_rate=round(docs / wall, 2) if wall > 0 else 0.0,
        index_size_bytes=index_size,
        size_ratio=round(index_size / data_size, 4) if data_size > 0 else 0.0,
        avg_peak_memory_bytes=peak,
        deduplicated=deduplicated,
    )
    logger.info(
        f"Estatísticas '{dataset_label}': {docs} docs, {stats.indexing_rate} docs/s, razão {stats.size_ratio}"
    )
    return stats


def write_stats_csv(stats: Sequence[IndexStats], path, append: bool = False):
    path = Path(path)
    frame = pd.DataFrame([s.to_dict() for s in stats], columns=STATS_COLUMNS)
    write_header = not (append and path.exists())
    frame.to_csv(path, mode="a" if append else "w", header=write_header, index=False)
    logger.info(f"Estatísticas salvas em: {path}")


def read_stats_csv(path) -> List[IndexStats]:
    frame = pd.read_csv(path)
    return [IndexStats(**row) for row in frame.to_dict(orient="records")]


# benchmark de latência

def _sample_pool(snapshot, needed_length: int, samples: int, rng: np.random.Generator,
                 min_length: int) -> List[Tuple[int, List[str]]]:
    """Documentos (em ordem aleatória semeada) com termos analisados, até ter o suficiente"""
    pool = []
    long_enough = 0
    for doc_id in rng.permutation(snapshot.doc_ids()):
        doc = snapshot.get_document(int(doc_id))
        terms = analyze_terms(doc.text, snapshot.analyzer)
        if len(terms) >= min_length:
            pool.append((int(doc_id), terms))
            if len(terms) >= needed_length:
                long_enough += 1
        if long_enough >= samples:
            break
    return pool


def _self_hit(snapshot, doc_id: int, terms: List[str]) -> bool:
    lists = []
    for term in terms:
        positions = snapshot.lookup(term).get(doc_id)
        if not positions:
            return False
        lists.append(positions)
    return phrase_positions_match(lists, 0)


def bench_query_latency(index, lengths: Sequence[int] = DEFAULT_LENGTHS,
                        samples_per_length: int = DEFAULT_SAMPLES, seed: int = 0) -> LatencyBenchReport:
    """
    Mede latência de match_phrase (slop 0) por comprimento de consulta

    As consultas são trechos contíguos de documentos indexados, sorteados com a seed.
    Há uma execução de aquecimento descartada por comprimento.

    Args:
        index: Index ou IndexSnapshot
        lengths: comprimentos (em palavras)
        samples_per_length: consultas por comprimento
        seed: semente do sorteio

    Returns:
        LatencyBenchReport com média e desvio padrão (amostral) em ms
    """
    snapshot = index.snapshot()
    lengths = sorted(int(length) for length in lengths)
    rng = np.random.default_rng(seed)
    pool = _sample_pool(snapshot, lengths[-1], samples_per_length, rng, lengths[0])
    logger.info(f"Benchmark: {len(lengths)} comprimentos x {samples_per_length} amostras, pool de {len(pool)} docs")

    per_length: Dict[int, LengthStats] = {}
    for length in lengths:
        eligible = [entry for entry in pool if len(entry[1]) >= length]
        if not eligible:
            raise CorpusTooSmall(length)
        picks = rng.integers(0, len(eligible), size=samples_per_length)

        queries = []
        for pick in picks:
            doc_id, terms = eligible[int(pick)]
            start = int(rng.integers(0, len(terms) - length + 1))
            queries.append((doc_id, terms[start:start + length]))

        # aquecimento descartado
        search(snapshot, MatchPhrase(" ".join(queries[0][1]), 0), limit=0)

        timings = []
        self_hits = 0
        for doc_id, terms in queries:
            ast = MatchPhrase(" ".join(terms), 0)
            started = time.perf_counter()
            search(snapshot, ast, limit=0)
            timings.append((time.perf_counter() - started) * 1000)
            if _self_hit(snapshot, doc_id, terms):
                self_hits += 1

        std = float(np.std(timings, ddof=1)) if len(timings) > 1 else 0.0
        per_length[length] = LengthStats(
            length=length,
            mean_ms=float(np.mean(timings)),
            std_ms=std,
            samples=timings,
            queries=[(d, " ".join(t)) for d, t in queries],
            self_hits=self_hits,
        )
        logger.debug(f"Comprimento {length}: {per_length[length].mean_ms:.3f} ms (+/- {std:.3f})")

    return LatencyBenchReport(
        lengths=lengths,
        samples_per_length=samples_per_length,
        seed=seed,
        per_length=per_length,
        index_doc_count=snapshot.doc_count,
    )


def spearman(report: LatencyBenchReport) -> float:
    """Correlação de postos entre comprimento e latência média"""
    frame = report.to_frame()
    return float(frame["length"].corr(frame["mean_ms"], method="spearman"))


def write_bench_csv(report: LatencyBenchReport, path):
    report.to_frame().to_csv(path, index=False)
    logger.info(f"Benchmark salvo em: {path}")


def write_bench_json(report: LatencyBenchReport, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
    logger.info(f"Benchmark salvo em: {path}")
