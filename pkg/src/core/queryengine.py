"""Consultas match, match_phrase (com slop) e bool sobre o índice posicional.

Sem score: resultados em ordem crescente de doc_id. O slop segue a definição
ordenada (nº total de tokens intercalados), sem reordenação de termos.
"""
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from core.exceptions import BadQuery, EmptyQueryAfterAnalysis, UnknownField
from core.textanalysis import analyze_query

logger = logging.getLogger(__name__)

SEARCHABLE_FIELDS = {"text"}
DEFAULT_FIELD = "text"


@dataclass(frozen=True)
class Match:
    text: str
    field: str = DEFAULT_FIELD


@dataclass(frozen=True)
class MatchPhrase:
    text: str
    slop: int = 0
    field: str = DEFAULT_FIELD

    def __post_init__(self):
        if not isinstance(self.slop, int) or self.slop < 0:
            raise BadQuery(f"slop deve ser inteiro >= 0, recebido {self.slop!r}")


@dataclass(frozen=True)
class MatchAll:
    pass


@dataclass(frozen=True)
class Bool:
    must: Tuple["QueryAst", ...] = ()
    should: Tuple["QueryAst", ...] = ()
    must_not: Tuple["QueryAst", ...] = ()
    minimum_should_match: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "must", tuple(self.must))
        object.__setattr__(self, "should", tuple(self.should))
        object.__setattr__(self, "must_not", tuple(self.must_not))
        if not (self.must or self.should or self.must_not):
            raise BadQuery("bool precisa de pelo menos uma cláusula")
        if self.minimum_should_match is not None and self.minimum_should_match < 0:
            raise BadQuery("minimum_should_match deve ser >= 0")

    @property
    def effective_minimum_should_match(self) -> int:
        # mesmo padrão do Elasticsearch: sem must, ao menos um should
        if self.minimum_should_match is not None:
            return self.minimum_should_match
        return 1 if self.should and not self.must else 0


QueryAst = Union[Match, MatchPhrase, MatchAll, Bool]


@dataclass
class Hit:
    doc_id: int
    external_id: Optional[str]
    matched_field: str
    occurrence_count: int


@dataclass
class SearchResult:
    total_docs: int
    hits: List[Hit] = field(default_factory=list)
    took: float = 0.0

    def to_dict(self) -> Dict:
        return {
            "total_docs": self.total_docs,
            "took": round(self.took, 3),
            "hits": [vars(h) for h in self.hits],
        }


# casamento de posições

def _match_starts(position_lists: Sequence[Sequence[int]], slop: int) -> Iterator[int]:
    """
    Posições iniciais p1 a partir das quais existe p1 < p2 < ... < pn
    com (pn - p1) - (n - 1) <= slop. Varredura com k ponteiros, linear no total.
    """
    first, rest = position_lists[0], position_lists[1:]
    extra = len(rest)
    pointers = [0] * extra
    for p1 in first:
        previous = p1
        for k, positions in enumerate(rest):
            i = pointers[k]
            while i < len(positions) and positions[i] <= previous:
                i += 1
            pointers[k] = i
            if i == len(positions):
                return
            previous = positions[i]
        if previous - p1 - extra <= slop:
            yield p1


def phrase_positions_match(position_lists: Sequence[Sequence[int]], slop: int) -> bool:
    if not position_lists:
        raise BadQuery("phrase_positions_match precisa de pelo menos uma lista")
    return next(_match_starts(position_lists, slop), None) is not None


def count_phrase_starts(position_lists: Sequence[Sequence[int]], slop: int) -> int:
    return sum(1 for _ in _match_starts(position_lists, slop))


# avaliação

def _snapshot(index):
    return index.snapshot()


def _terms_for(snapshot, field_name: str, text: str) -> List[str]:
    if field_name not in SEARCHABLE_FIELDS:
        raise UnknownField(f"Campo desconhecido: {field_name!r}")
    terms = analyze_query(text, snapshot.analyzer)
    if not terms:
        raise EmptyQueryAfterAnalysis(f"Consulta vazia após análise: {text!r}")
    return terms


def _eval_match(snapshot, query: Match) -> Dict[int, int]:
    result: Dict[int, int] = {}
    for term in set(_terms_for(snapshot, query.field, query.text)):
        for doc_id, positions in snapshot.lookup(term).items():
            result[doc_id] = result.get(doc_id, 0) + len(positions)
    return result


def _eval_phrase(snapshot, query: MatchPhrase) -> Dict[int, int]:
    terms = _terms_for(snapshot, query.field, query.text)
    by_term = {term: snapshot.lookup(term) for term in set(terms)}
    if any(not postings for postings in by_term.values()):
        return {}
    # começa pelo termo mais raro
    candidates = set(min(by_term.values(), key=len))
    for postings in by_term.values():
        candidates.intersection_update(postings)

    result: Dict[int, int] = {}
    for doc_id in candidates:
        occurrences = count_phrase_starts([by_term[t][doc_id] for t in terms], query.slop)
        if occurrences:
            result[doc_id] = occurrences
    return result


def _eval_bool(snapshot, query: Bool) -> Dict[int, int]:
    result: Optional[Dict[int, int]] = None
    for clause in query.must:
        matched = _evaluate(snapshot, clause)
        if result is None:
            result = matched
        else:
            result = {d: n + matched[d] for d, n in result.items() if d in matched}

    msm = query.effective_minimum_should_match
    if query.should:
        hits_per_doc: Dict[int, int] = {}
        occurrences: Dict[int, int] = {}
        for clause in query.should:
            for doc_id, n in _evaluate(snapshot, clause).items():
                hits_per_doc[doc_id] = hits_per_doc.get(doc_id, 0) + 1
                occurrences[doc_id] = occurrences.get(doc_id, 0) + n
        if msm > 0:
            accepted = {d: occurrences[d] for d, c in hits_per_doc.items() if c >= msm}
            if result is None:
                result = accepted
            else:
                result = {d: n + accepted[d] for d, n in result.items() if d in accepted}
        elif result is not None:
            result = {d: n + occurrences.get(d, 0) for d, n in result.items()}
        else:
            result = {doc_id: occurrences.get(doc_id, 0) for doc_id in snapshot.doc_ids()}

    if result is None:
        result = {doc_id: 0 for doc_id in snapshot.doc_ids()}

    for clause in query.must_not:
        for doc_id in _evaluate(snapshot, clause):
            result.pop(doc_id, None)
    return result


def _evaluate(snapshot, query: QueryAst) -> Dict[int, int]:
    """doc_id -> contagem de ocorrências, para todos os documentos que satisfazem a consulta"""
    if isinstance(query, Match):
        return _eval_match(snapshot, query)
    if isinstance(query, MatchPhrase):
        return _eval_phrase(snapshot, query)
    if isinstance(query, MatchAll):
        return {doc_id: 0 for doc_id in snapshot.doc_ids()}
    if isinstance(query, Bool):
        return _eval_bool(snapshot, query)
    raise BadQuery(f"Tipo de consulta desconhecido: {type(query).__name__}")


def _matched_field(query: QueryAst) -> str:
    if isinstance(query, (Match, MatchPhrase)):
        return query.field
    if isinstance(query, Bool):
        for clause in query.must + query.should:
            return _matched_field(clause)
    return DEFAULT_FIELD


def search(index, ast: QueryAst, limit: int = 10, offset: int = 0) -> SearchResult:
    """
    Executa a consulta sobre o último snapshot (refresh) do índice

    Args:
        index: Index, IndexSnapshot ou qualquer objeto com snapshot()
        ast: consulta
        limit: máximo de hits retornados (0 = só o total)
        offset: paginação from/size em ordem de doc_id

    Returns:
        SearchResult com hits ordenados por doc_id
    """
    started = time.perf_counter()
    snapshot = _snapshot(index)
    matched = _evaluate(snapshot, ast)
    page = sorted(matched)[offset:offset + limit] if limit > 0 else []
    field_name = _matched_field(ast)
    hits = []
    for doc_id in page:
        doc = snapshot.get_document(doc_id)
        hits.append(Hit(doc_id, doc.external_id if doc else None, field_name, matched[doc_id]))
    took = (time.perf_counter() - started) * 1000
    logger.debug(f"Busca {ast}: {len(matched)} docs em {took:.2f} ms")
    return SearchResult(total_docs=len(matched), hits=hits, took=took)


def count(index, ast: QueryAst) -> int:
    return len(_evaluate(_snapshot(index), ast))


def occurrence_count(index, phrase: QueryAst) -> int:
    """Soma, nos documentos que casam, das posições iniciais distintas da frase"""
    if isinstance(phrase, Match):
        phrase = MatchPhrase(phrase.text, 0, phrase.field)
    if not isinstance(phrase, MatchPhrase):
        raise BadQuery("occurrence_count aceita apenas match_phrase")
    return sum(_eval_phrase(_snapshot(index), phrase).values())


def matching_doc_ids(index, ast: QueryAst) -> List[int]:
    return sorted(_evaluate(_snapshot(index), ast))


def occurrences_by_doc(index, ast: QueryAst) -> Dict[int, int]:
    """doc_id -> ocorrências, apenas para os documentos que casam"""
    return _evaluate(_snapshot(index), ast)


# gramática JSON

def _field_and_body(kind: str, body) -> Tuple[str, Dict]:
    if not isinstance(body, dict) or not body:
        raise BadQuery(f"'{kind}' precisa de um objeto")
    if "query" in body:
        return body.get("field", DEFAULT_FIELD), body
    # forma curta estilo Elasticsearch: {"match": {"text": "..."}}
    if len(body) != 1:
        raise BadQuery(f"'{kind}' com campos ambíguos: {sorted(body)}")
    (field_name, value), = body.items()
    if isinstance(value, dict):
        return field_name, value
    return field_name, {"query": value}


def _clauses(value) -> Tuple[QueryAst, ...]:
    if value is None:
        return ()
    if isinstance(value, dict):
        value = [value]
    if not isinstance(value, list):
        raise BadQuery("cláusulas bool devem ser lista ou objeto")
    return tuple(parse_query(v) for v in value)


def parse_query(obj: Union[str, bytes, Dict]) -> QueryAst:
    """
    Converte a gramática JSON em QueryAst

    {"match": {"field": f, "query": q}}
    {"match_phrase": {"field": f, "query": q, "slop": s}}
    {"bool": {"must": [...], "should": [...], "must_not": [...], "minimum_should_match": k}}
    {"match_all": {}}
    """
    if isinstance(obj, (str, bytes)):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as e:
            raise BadQuery(f"JSON inválido: {e}") from e
    if isinstance(obj, dict) and "query" in obj and len(obj) == 1:
        obj = obj["query"]
    if not isinstance(obj, dict) or len(obj) != 1:
        raise BadQuery("A consulta deve ter exatamente uma chave de tipo")

    (kind, body), = obj.items()
    try:
        if kind == "match":
            field_name, body = _field_and_body(kind, body)
            return Match(text=str(body["query"]), field=field_name)
        if kind == "match_phrase":
            field_name, body = _field_and_body(kind, body)
            return MatchPhrase(text=str(body["query"]), slop=int(body.get("slop", 0)), field=field_name)
        if kind == "match_all":
            return MatchAll()
        if kind == "bool":
            if not isinstance(body, dict):
                raise BadQuery("'bool' precisa de um objeto")
            msm = body.get("minimum_should_match")
            return Bool(
                must=_clauses(body.get("must")),
                should=_clauses(body.get("should")),
                must_not=_clauses(body.get("must_not")),
                minimum_should_match=int(msm) if msm is not None else None,
            )
    except (KeyError, TypeError, ValueError) as e:
        raise BadQuery(f"Consulta '{kind}' malformada: {e}") from e
    raise BadQuery(f"Tipo de consulta desconhecido: {kind!r}")


def query_to_dict(ast: QueryAst) -> Dict:
    if isinstance(ast, Match):
        return {"match": {"field": ast.field, "query": ast.text}}
    if isinstance(ast, MatchPhrase):
        return {"match_phrase": {"field": ast.field, "query": ast.text, "slop": ast.slop}}
    if isinstance(ast, MatchAll):
        return {"match_all": {}}
    body: Dict = {
        "must": [query_to_dict(c) for c in ast.must],
        "should": [query_to_dict(c) for c in ast.should],
        "must_not": [query_to_dict(c) for c in ast.must_not],
    }
    if ast.minimum_should_match is not None:
        body["minimum_should_match"] = ast.minimum_should_match
    return {"bool": body}


def any_of(phrases: Iterable[str], slop: int = 0) -> Bool:
    """Bool com should de todas as frases e minimum_should_match=1"""
    return Bool(should=tuple(MatchPhrase(p, slop) for p in phrases), minimum_should_match=1)
