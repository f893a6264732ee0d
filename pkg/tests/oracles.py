"""Oráculos de força bruta sobre os termos analisados de cada documento"""
from itertools import combinations

from core.queryengine import Bool, Match, MatchAll, MatchPhrase
from core.textanalysis import analyze_query, analyze_terms


def _chain_exists(doc_terms, query_terms, start, slop):
    # tenta todas as escolhas de posições crescentes após start
    n = len(query_terms)
    if n == 1:
        return True
    candidates = [i for i in range(start + 1, len(doc_terms)) if doc_terms[i] in query_terms[1:]]
    for picked in combinations(candidates, n - 1):
        chain = (start,) + picked
        if all(doc_terms[p] == q for p, q in zip(chain, query_terms)):
            if (chain[-1] - chain[0]) - (n - 1) <= slop:
                return True
    return False


def phrase_starts(doc_terms, query_terms, slop):
    starts = 0
    for start, term in enumerate(doc_terms):
        if term == query_terms[0]:
            # só cadeias que cabem no slop
            window = doc_terms[:start + len(query_terms) + slop]
            if _chain_exists(window, query_terms, start, slop):
                starts += 1
    return starts


def evaluate(docs_terms, ast):
    """doc_id -> ocorrências, com a mesma semântica do motor"""
    if isinstance(ast, MatchAll):
        return {d: 0 for d in range(len(docs_terms))}
    if isinstance(ast, Match):
        query = set(analyze_query(ast.text))
        result = {}
        for d, terms in enumerate(docs_terms):
            hits = sum(1 for t in terms if t in query)
            if hits:
                result[d] = hits
        return result
    if isinstance(ast, MatchPhrase):
        query = analyze_query(ast.text)
        result = {}
        for d, terms in enumerate(docs_terms):
            n = phrase_starts(terms, query, ast.slop)
            if n:
                result[d] = n
        return result
    if isinstance(ast, Bool):
        must = [evaluate(docs_terms, c) for c in ast.must]
        should = [evaluate(docs_terms, c) for c in ast.should]
        must_not = [evaluate(docs_terms, c) for c in ast.must_not]
        msm = ast.effective_minimum_should_match
        result = {}
        for d in range(len(docs_terms)):
            if not all(d in m for m in must):
                continue
            if sum(1 for s in should if d in s) < msm:
                continue
            if any(d in m for m in must_not):
                continue
            result[d] = sum(m[d] for m in must) + sum(s.get(d, 0) for s in should)
        return result
    raise TypeError(ast)


def analyzed_corpus(texts):
    return [analyze_terms(t) for t in texts]
