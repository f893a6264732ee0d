"""
Script para gerar corpus sintético (multilíngue, com duplicatas e termos plantados)
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

# sílabas por idioma (ISO 639-3)
LANGUAGE_SYLLABLES = {
    "eng": ["th", "er", "an", "in", "on", "at", "ing", "ow", "st", "re", "ea", "ck", "sh", "wh", "ly"],
    "deu": ["sch", "ei", "ch", "en", "ung", "ie", "au", "ber", "zu", "ge", "lich", "keit", "tz", "ä", "ü"],
    "fra": ["ou", "eau", "ai", "é", "ent", "que", "oi", "ch", "eu", "on", "ère", "ç", "ié", "au", "lle"],
    "por": ["ão", "ção", "lh", "nh", "ar", "es", "ei", "ou", "mente", "qu", "ã", "é", "ra", "do", "vo"],
    "spa": ["ción", "ll", "ñ", "os", "as", "que", "ie", "ue", "rr", "do", "mente", "es", "la", "ca", "to"],
}
CONSONANTS = list("bcdfghjklmnprstvz")
SOURCES = ["web", "news", "forum", "wiki", "books"]


def build_vocabulary(language: str, size: int, rng: np.random.Generator) -> List[str]:
    """Palavras distintas formadas por 1-3 sílabas do idioma"""
    syllables = LANGUAGE_SYLLABLES.get(language, LANGUAGE_SYLLABLES["eng"])
    words = []
    seen = set()
    while len(words) < size:
        n = int(rng.integers(1, 4))
        word = "".join(
            str(rng.choice(CONSONANTS)) + str(rng.choice(syllables)) for _ in range(n)
        )
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def _zipf_weights(size: int) -> np.ndarray:
    weights = 1.0 / np.arange(1, size + 1)
    return weights / weights.sum()


def generate_corpus(n_docs: int = 1000, seed: int = 42, languages: Sequence[str] = ("eng",),
                    dup_factor: int = 1, doc_bytes: int = 1024, vocab_size: int = 5000,
                    planted_terms: Optional[Dict[str, List[str]]] = None,
                    plant_rate: float = 0.1) -> pd.DataFrame:
    """
    Gera documentos sintéticos

    Args:
        n_docs: documentos únicos
        seed: semente (mesma seed = mesmo corpus)
        languages: idiomas sorteados por documento
        dup_factor: cópias de cada documento único (fixtures de deduplicação)
        doc_bytes: tamanho médio aproximado do texto
        vocab_size: palavras por idioma (frequência Zipf)
        planted_terms: {idioma: [termos]} inseridos em parte dos documentos
        plant_rate: fração de documentos que recebe um termo plantado

    Returns:
        DataFrame com colunas id, text, source, language, url
    """
    if dup_factor < 1:
        raise ValueError("dup_factor deve ser >= 1")
    rng = np.random.default_rng(seed)
    vocabularies = {lang: build_vocabulary(lang, vocab_size, rng) for lang in languages}
    weights = _zipf_weights(vocab_size)
    avg_word = np.mean([len(w) + 1 for w in vocabularies[languages[0]][:200]])
    target_words = max(1, int(doc_bytes / avg_word))

    records = []
    for i in range(n_docs):
        language = str(rng.choice(languages))
        n_words = max(1, int(rng.normal(target_words, target_words * 0.3)))
        indices = rng.choice(vocab_size, size=n_words, p=weights)
        words = [vocabularies[language][j] for j in indices]

        terms = (planted_terms or {}).get(language)
        if terms and rng.random() < plant_rate:
            position = int(rng.integers(0, len(words) + 1))
            words[position:position] = str(rng.choice(terms)).split()

        text = " ".join(words)
        text = text[0].upper() + text[1:] + "."
        records.append({
            "id": f"doc{i:07d}",
            "text": text,
            "source": str(rng.choice(SOURCES)),
            "language": language,
            "url": f"https://example.org/{language}/{i}",
        })

    df = pd.DataFrame(records, columns=["id", "text", "source", "language", "url"])

    if dup_factor > 1:
        copies = []
        for copy in range(dup_factor):
            replica = df.copy()
            replica["id"] = replica["id"] + f"-{copy}"
            copies.append(replica)
        df = pd.concat(copies, ignore_index=True)
        df = df.iloc[rng.permutation(len(df))].reset_index(drop=True)

    logger.info(f"Corpus sintético: {len(df)} documentos ({n_docs} únicos, idiomas {list(languages)})")
    return df


def save_corpus(df: pd.DataFrame, path) -> Path:
    """Salva o corpus como JSONL (.jsonl, .jsonl.gz) ou Parquet (.parquet)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".parquet":
        df.to_parquet(path, index=False)
    elif path.suffix == ".gz" or path.suffix in (".jsonl", ".json", ".ndjson"):
        df.to_json(path, orient="records", lines=True, force_ascii=False,
                   compression="gzip" if path.suffix == ".gz" else None)
    else:
        raise ValueError(f"Formato não suportado: {path.suffix}")
    logger.info(f"Corpus salvo em: {path} ({len(df)} registros)")
    return path


if __name__ == '__main__':
    from utils.log import configure_logging

    configure_logging()
    save_corpus(generate_corpus(n_docs=1000, languages=("eng", "deu", "fra")), "data/corpus.jsonl")
