"""Cadeia de análise de texto (web_content_analyzer).

html_strip -> tokenize -> lowercase -> ascii_fold. A mesma cadeia é aplicada na
indexação e na consulta, então qualquer mudança aqui exige reindexar.
"""
import html
import logging
import unicodedata
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np
import regex
from pydantic import BaseModel, ConfigDict, Field, field_validator

logger = logging.getLogger(__name__)

DEFAULT_STAGES = ("html_strip", "tokenize", "lowercase", "ascii_fold")
TEXT_STAGES = {"html_strip"}
TERM_STAGES = {"lowercase", "ascii_fold"}

# comentários, doctype/cdata, instruções e tags; tag sem '>' consome até o fim
_TAG_RE = regex.compile(
    r"""
    <!--.*?(?:-->|\Z)
    | <![^>]*(?:>|\Z)
    | <\?[^>]*(?:>|\Z)
    | <(?P<close>/?)(?P<name>[A-Za-z][A-Za-z0-9:-]*)(?P<attrs>[^>]*)(?:>|\Z)
    """,
    regex.S | regex.X,
)
_RAW_TEXT_ELEMENTS = {"script", "style"}
_ENTITY_RE = regex.compile(r"&(?:#[0-9]+|#[xX][0-9a-fA-F]+|[A-Za-z][A-Za-z0-9]*);")

# fronteiras de palavra padrão do Unicode (UAX #29)
_BOUNDARY_RE = regex.compile(r"\b", flags=regex.WORD | regex.V1)
_WORDISH_RE = regex.compile(r"[\p{L}\p{N}]")
_GRAPHEME_RE = regex.compile(r"\X")
_LATIN_RE = regex.compile(r"\p{Script=Latin}")


@dataclass(frozen=True)
class Token:
    term: str
    position: int
    span: Tuple[int, int]


class AnalyzerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "web_content_analyzer"
    stages: Tuple[str, ...] = Field(default=DEFAULT_STAGES)

    @field_validator("stages")
    @classmethod
    def _check_stages(cls, stages):
        stages = tuple(stages)
        unknown = set(stages) - set(DEFAULT_STAGES)
        if unknown:
            raise ValueError(f"Estágios desconhecidos: {sorted(unknown)}")
        if stages.count("tokenize") != 1:
            raise ValueError("'tokenize' deve aparecer exatamente uma vez")
        if len(set(stages)) != len(stages):
            raise ValueError("Estágios repetidos")
        cut = stages.index("tokenize")
        if any(s not in TEXT_STAGES for s in stages[:cut]):
            raise ValueError("Antes de 'tokenize' só são permitidos estágios texto->texto")
        if any(s not in TERM_STAGES for s in stages[cut + 1:]):
            raise ValueError("Depois de 'tokenize' só são permitidos estágios termo->termo")
        return stages

    @property
    def strips_html(self) -> bool:
        return "html_strip" in self.stages

    @property
    def term_stages(self) -> Tuple[str, ...]:
        return self.stages[self.stages.index("tokenize") + 1:]


WEB_CONTENT_ANALYZER = AnalyzerConfig()
ANALYZERS: Dict[str, AnalyzerConfig] = {WEB_CONTENT_ANALYZER.name: WEB_CONTENT_ANALYZER}


class _MappedText:
    """Texto após html_strip com o mapa de volta para offsets (caractere) da fonte.

    Cada pedaço é (início na saída, início na fonte, fim na fonte, literal). Pedaços
    literais mapeiam 1:1; entidades e separadores apontam para o trecho inteiro.
    """

    def __init__(self, text: str, pieces: List[Tuple[int, int, int, bool]]):
        self.text = text
        self._pieces = pieces
        self._starts = [p[0] for p in pieces]

    @classmethod
    def identity(cls, raw: str) -> "_MappedText":
        return cls(raw, [(0, 0, len(raw), True)])

    def _locate(self, i: int) -> Tuple[int, int]:
        out_start, src_start, src_end, literal = self._pieces[bisect_right(self._starts, i) - 1]
        if literal:
            return src_start + (i - out_start), src_start + (i - out_start) + 1
        return src_start, src_end

    def source_span(self, start: int, end: int) -> Tuple[int, int]:
        return self._locate(start)[0], self._locate(end - 1)[1]


def _decode_entities(chunk: str, src_offset: int, out: List[str],
                     pieces: List[Tuple[int, int, int, bool]], out_len: int) -> int:
    pos = 0
    for m in _ENTITY_RE.finditer(chunk):
        decoded = html.unescape(m.group())
        if decoded == m.group():
            continue
        if m.start() > pos:
            out.append(chunk[pos:m.start()])
            pieces.append((out_len, src_offset + pos, src_offset + m.start(), True))
            out_len += m.start() - pos
        out.append(decoded)
        pieces.append((out_len, src_offset + m.start(), src_offset + m.end(), False))
        out_len += len(decoded)
        pos = m.end()
    if pos < len(chunk):
        out.append(chunk[pos:])
        pieces.append((out_len, src_offset + pos, src_offset + len(chunk), True))
        out_len += len(chunk) - pos
    return out_len


def _strip_html_mapped(raw: str) -> _MappedText:
    out: List[str] = []
    pieces: List[Tuple[int, int, int, bool]] = []
    out_len = 0
    pos = 0
    n = len(raw)

    while pos < n:
        m = _TAG_RE.search(raw, pos)
        if m is None:
            out_len = _decode_entities(raw[pos:], pos, out, pieces, out_len)
            break
        if m.start() > pos:
            out_len = _decode_entities(raw[pos:m.start()], pos, out, pieces, out_len)

        # fronteira de tag vira espaço
        out.append(" ")
        pieces.append((out_len, m.start(), m.end(), False))
        out_len += 1
        pos = m.end()

        name = (m.group("name") or "").lower()
        self_closing = (m.group("attrs") or "").rstrip().endswith("/")
        if name in _RAW_TEXT_ELEMENTS and not m.group("close") and not self_closing:
            end = regex.compile(rf"</{name}\s*>", regex.I).search(raw, pos)
            pos = end.end() if end else n

    if not pieces:
        return _MappedText("", [(0, 0, 0, True)])
    return _MappedText("".join(out), pieces)


def strip_html(raw: str) -> str:
    """
    Remove tags HTML, o conteúdo de script/style e decodifica entidades

    Args:
        raw: texto possivelmente com marcação (não precisa ser HTML válido)

    Returns:
        Texto puro com espaços normalizados
    """
    return " ".join(_strip_html_mapped(raw).text.split())


def _word_spans(text: str) -> List[Tuple[int, int]]:
    if not text:
        return []
    bounds = sorted({0, len(text), *(m.start() for m in _BOUNDARY_RE.finditer(text))})
    spans = []
    for start, end in zip(bounds, bounds[1:]):
        if _WORDISH_RE.search(text, start, end):
            spans.append((start, end))
    return spans


def _utf8_offsets(source: str) -> Callable[[int], int]:
    if source.isascii():
        return lambda i: i
    codepoints = np.frombuffer(source.encode("utf-32-le"), dtype="<u4")
    widths = 1 + (codepoints >= 0x80) + (codepoints >= 0x800) + (codepoints >= 0x10000)
    cumulative = np.concatenate(([0], np.cumsum(widths)))
    return lambda i: int(cumulative[i])


def tokenize(text: str) -> List[Token]:
    """Divide em palavras pelas fronteiras Unicode; pontuação não vira token"""
    byte_at = _utf8_offsets(text)
    return [
        Token(text[start:end], position, (byte_at(start), byte_at(end)))
        for position, (start, end) in enumerate(_word_spans(text))
    ]


def lowercase(term: str) -> str:
    return term.lower()


def ascii_fold(term: str) -> str:
    """
    Remove diacríticos de letras latinas (NFKD sem marcas combinantes).
    Outras escritas (tailandês, árabe...) passam intactas.
    """
    if term.isascii():
        return term
    folded = []
    for cluster in _GRAPHEME_RE.findall(term):
        if _LATIN_RE.match(cluster):
            decomposed = unicodedata.normalize("NFKD", cluster)
            folded.append("".join(c for c in decomposed if not unicodedata.combining(c)))
        else:
            folded.append(cluster)
    return "".join(folded)


_TERM_FUNCS: Dict[str, Callable[[str], str]] = {
    "lowercase": lowercase,
    "ascii_fold": ascii_fold,
}


def _apply_term_stages(term: str, stages: Tuple[str, ...]) -> str:
    for stage in stages:
        term = _TERM_FUNCS[stage](term)
    return term


def analyze(raw: str, config: AnalyzerConfig = WEB_CONTENT_ANALYZER) -> List[Token]:
    """
    Aplica a cadeia configurada e devolve tokens com posição e offsets em bytes

    Args:
        raw: texto de origem (antes do html_strip)
        config: cadeia de análise

    Returns:
        Lista de Token com posições 0..n-1
    """
    mapped = _strip_html_mapped(raw) if config.strips_html else _MappedText.identity(raw)
    byte_at = _utf8_offsets(raw)
    term_stages = config.term_stages

    tokens: List[Token] = []
    for start, end in _word_spans(mapped.text):
        term = _apply_term_stages(mapped.text[start:end], term_stages)
        if not term:
            continue
        src_start, src_end = mapped.source_span(start, end)
        tokens.append(Token(term, len(tokens), (byte_at(src_start), byte_at(src_end))))
    return tokens


def analyze_terms(raw: str, config: AnalyzerConfig = WEB_CONTENT_ANALYZER) -> List[str]:
    """Igual a analyze, só os termos (posição = índice na lista). Caminho rápido da indexação."""
    text = _strip_html_mapped(raw).text if config.strips_html else raw
    term_stages = config.term_stages
    terms = []
    for start, end in _word_spans(text):
        term = _apply_term_stages(text[start:end], term_stages)
        if term:
            terms.append(term)
    return terms


def analyze_query(text: str, config: AnalyzerConfig = WEB_CONTENT_ANALYZER) -> List[str]:
    return analyze_terms(text, config)
