"""Auditoria de termos sensíveis: dicionários por idioma, contagens por frase e rankings"""
import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

import pandas as pd

from core.exceptions import (
    EmptyDictionary,
    IoFailure,
    MalformedCsv,
    QueryError,
    UnknownLanguage,
)
from core.queryengine import MatchPhrase, occurrences_by_doc
from core.textanalysis import WEB_CONTENT_ANALYZER, AnalyzerConfig, analyze_query

logger = logging.getLogger(__name__)

UNDETERMINED = "und"
REPORT_COLUMNS = ["language", "term", "doc_count", "occurrence_count"]
MEASURES = ("doc_count", "occurrence_count")


@dataclass
class TermDictionary:
    """
    Lista de termos por idioma (ISO 639-3)

    entries guarda pares (language, term) na ordem do arquivo, já sem duplicatas
    na forma analisada.
    """
    name: str
    entries: List[Tuple[str, str]]
    provenance: str = ""
    min_words: int = 1
    max_words: int = 5

    @property
    def terms(self) -> List[str]:
        return [term for _, term in self.entries]

    @property
    def languages(self) -> List[str]:
        seen = []
        for language, _ in self.entries:
            if language not in seen:
                seen.append(language)
        return seen

    @property
    def language(self) -> str:
        languages = self.languages
        return languages[0] if len(languages) == 1 else "mul"

    def __len__(self):
        return len(self.entries)


def _read_lines(path: Path, language: str) -> List[Tuple[int, str, str]]:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            term = line.strip()
            if not term or term.startswith("#"):
                continue
            rows.append((number, language, term))
    return rows


def _read_csv(path: Path) -> List[Tuple[int, str, str]]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for number, row in enumerate(csv.reader(f), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if number == 1 and [c.strip().lower() for c in row] == ["language", "term"]:
                continue
            if row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise MalformedCsv(number, f"esperadas 2 colunas (language,term), encontradas {len(row)}")
            language, term = row[0].strip(), row[1].strip()
            if not language or not term:
                raise MalformedCsv(number, "language e term não podem ser vazios")
            rows.append((number, language, term))
    return rows


def load_dictionary(path, format: str = "lines", language: str = UNDETERMINED,
                    name: Optional[str] = None, min_words: int = 1, max_words: int = 5,
                    analyzer: AnalyzerConfig = WEB_CONTENT_ANALYZER) -> TermDictionary:
    """
    Carrega um dicionário de termos

    Args:
        path: arquivo do dicionário
        format: "lines" (um termo por linha, '#' comenta) ou "csv" (language,term)
        language: idioma dos termos no formato lines
        name: nome do dicionário (padrão: nome do arquivo)
        min_words, max_words: faixa de palavras aceita por termo

    Returns:
        TermDictionary deduplicado pela forma analisada
    """
    path = Path(path)
    try:
        if format == "lines":
            rows = _read_lines(path, language)
        elif format == "csv":
            rows = _read_csv(path)
        else:
            raise ValueError(f"Formato de dicionário desconhecido: {format}")
    except OSError as e:
        raise IoFailure(f"Erro ao ler dicionário {path}: {e}") from e

    entries = []
    seen: Set[Tuple[str, Tuple[str, ...]]] = set()
    for number, lang, term in rows:
        analyzed = tuple(analyze_query(term, analyzer))
        if not analyzed:
            logger.warning(f"Linha {number}: termo sem palavras após análise, ignorado: {term!r}")
            continue
        if not min_words <= len(analyzed) <= max_words:
            logger.warning(f"Linha {number}: {len(analyzed)} palavras fora da faixa [{min_words}, {max_words}]: {term!r}")
            continue
        key = (lang, analyzed)
        if key in seen:
            continue
        seen.add(key)
        entries.append((lang, term))

    if not entries:
        raise EmptyDictionary(f"Dicionário sem termos: {path}")

    dictionary = TermDictionary(
        name=name or path.stem,
        entries=entries,
        provenance=str(path),
        min_words=min_words,
        max_words=max_words,
    )
    logger.info(f"Dicionário '{dictionary.name}' carregado: {len(entries)} termos em {len(dictionary.languages)} idioma(s)")
    return dictionary


@dataclass
class AuditRow:
    language: str
    term: str
    doc_count: int = 0
    occurrence_count: int = 0


@dataclass
class AuditReport:
    index_id: str
    dictionary: str
    slop: int
    rows: List[AuditRow]
    language_totals: Dict[str, int]
    errors: List[Dict] = field(default_factory=list)
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat())

    @property
    def languages(self) -> List[str]:
        return list(self.language_totals)

    def terms(self, language: str) -> List[str]:
        return [r.term for r in self.rows if r.language == language]

    def cell(self, language: str, term: str) -> Optional[AuditRow]:
        for row in self.rows:
            if row.language == language and row.term == term:
                return row
        return None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows], columns=REPORT_COLUMNS)

    def to_dict(self) -> Dict:
        return {
            "index_id": self.index_id,
            "dictionary": self.dictionary,
            "slop": self.slop,
            "timestamp": self.timestamp,
            "language_totals": self.language_totals,
            "rows": [asdict(r) for r in self.rows],
            "errors": self.errors,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "AuditReport":
        return cls(
            index_id=data["index_id"],
            dictionary=data["dictionary"],
            slop=data["slop"],
            rows=[AuditRow(**r) for r in data["rows"]],
            language_totals=dict(data["language_totals"]),
            errors=list(data.get("errors", [])),
            timestamp=data["timestamp"],
        )


def _document_languages(snapshot) -> Dict[int, str]:
    return {doc.doc_id: doc.language for doc in snapshot.iter_documents()}


def _audit_term(snapshot, language: Optional[str], term: str, slop: int,
                doc_languages: Dict[int, str]) -> Dict[int, int]:
    matched = occurrences_by_doc(snapshot, MatchPhrase(term, slop))
    if language is None:
        return matched
    return {d: n for d, n in matched.items() if doc_languages.get(d, UNDETERMINED) == language}


def run_audit(index, dictionary: TermDictionary, slop: int = 0, scope_by_language: bool = True,
              max_workers: int = 4, index_id: Optional[str] = None) -> AuditReport:
    """
    Conta documentos e ocorrências de cada termo do dicionário

    Cada termo é uma match_phrase com o slop dado. Com scope_by_language, só contam
    documentos cujo campo language é o idioma do termo (sem o campo: "und").

    Args:
        index: Index ou ShardSet já com refresh
        dictionary: termos a auditar
        slop: folga da frase (0 = palavras adjacentes)
        scope_by_language: filtra pelo idioma do documento
        max_workers: consultas de termos em paralelo

    Returns:
        AuditReport com uma linha por (idioma, termo), inclusive zeradas
    """
    members = getattr(index, "shards", None) or [index]
    snapshots = [m.snapshot() for m in members]
    doc_languages = [_document_languages(s) if scope_by_language else {} for s in snapshots]

    rows = [AuditRow(language, term) for language, term in dictionary.entries]
    matched_by_language: Dict[str, List[Set[int]]] = {
        language: [set() for _ in snapshots] for language in dictionary.languages
    }
    errors = []

    def work(row: AuditRow):
        scope = row.language if scope_by_language else None
        return [_audit_term(s, scope, row.term, slop, langs) for s, langs in zip(snapshots, doc_languages)]

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [(row, executor.submit(work, row)) for row in rows]
        for row, future in futures:
            try:
                per_shard = future.result()
            except QueryError as e:
                logger.error(f"Erro no termo {row.term!r} ({row.language}): {e}")
                errors.append({"language": row.language, "term": row.term, "error": f"{type(e).__name__}: {e}"})
                continue
            for shard_no, matched in enumerate(per_shard):
                row.doc_count += len(matched)
                row.occurrence_count += sum(matched.values())
                matched_by_language[row.language][shard_no].update(matched)

    # doc_ids só são únicos dentro de cada shard
    totals = {language: sum(len(ids) for ids in per_shard) for language, per_shard in matched_by_language.items()}

    report = AuditReport(
        index_id=index_id or str(getattr(index, "path", "")),
        dictionary=dictionary.name,
        slop=slop,
        rows=rows,
        language_totals=totals,
        errors=errors,
    )
    logger.info(f"Auditoria '{dictionary.name}': {len(rows)} termos, totais por idioma {totals}")
    return report


def top_k(report: AuditReport, language: str, k: int, by: str = "occurrence_count") -> List[AuditRow]:
    """Termos do idioma em ordem decrescente da medida; empates em ordem lexicográfica"""
    if by not in MEASURES:
        raise ValueError(f"Medida desconhecida: {by}")
    if language not in report.language_totals:
        raise UnknownLanguage(f"Idioma ausente do relatório: {language}")
    rows = [r for r in report.rows if r.language == language]
    rows.sort(key=lambda r: (-getattr(r, by), r.term))
    return rows[:max(k, 0)]


def heatmap_matrix(report: AuditReport, measure: str = "doc_count") -> pd.DataFrame:
    """Matriz densa idioma x termo (células zeradas incluídas)"""
    if measure not in MEASURES:
        raise ValueError(f"Medida desconhecida: {measure}")
    frame = report.to_frame()
    terms = list(dict.fromkeys(frame["term"]))
    matrix = frame.pivot_table(index="language", columns="term", values=measure, aggfunc="sum", fill_value=0)
    matrix = matrix.reindex(index=report.languages, columns=terms, fill_value=0).astype(int)
    matrix.columns.name = None
    return matrix


def export_report(report: AuditReport, path, format: str = "csv", measure: str = "doc_count") -> Path:
    """
    Salva o relatório

    Args:
        report: relatório da auditoria
        path: arquivo de saída
        format: "csv" ou "json" (formato longo) ou "heatmap_csv" (matriz idioma x termo)
        measure: medida usada no heatmap

    Returns:
        Caminho do arquivo
    """
    if not report.rows:
        raise ValueError("Relatório vazio")
    path = Path(path)
    try:
        if format == "csv":
            report.to_frame().to_csv(path, index=False)
        elif format == "json":
            with open(path, "w", encoding="utf-8") as f:
                json.dump(report.to_dict(), f, indent=2, ensure_ascii=False)
        elif format == "heatmap_csv":
            heatmap_matrix(report, measure).to_csv(path, index_label="language")
        else:
            raise ValueError(f"Formato desconhecido: {format}")
    except OSError as e:
        raise IoFailure(f"Erro ao salvar relatório {path}: {e}") from e
    logger.info(f"Relatório salvo em: {path}")
    return path


def load_report(path) -> AuditReport:
    with open(path, "r", encoding="utf-8") as f:
        return AuditReport.from_dict(json.load(f))
