import json

import numpy as np
import pytest
import yaml

from core.invindex import Document, Index
from utils.generate_fake_data import generate_corpus


PAPER_PHRASES = [
    "climate change",
    "climate and change",
    "climate action and change",
    "change the climate",
]


def build_index(path, texts, refresh=True, languages=None, dedup=False):
    index = Index.create(path)
    for i, text in enumerate(texts):
        metadata = {"language": languages[i]} if languages else {}
        index.add_document(Document(text=text, external_id=f"d{i}", metadata=metadata), dedup=dedup)
    if refresh:
        index.refresh()
    return index


@pytest.fixture
def make_index(tmp_path):
    # fábrica de índices em diretórios temporários
    counter = {"n": 0}
    created = []

    def factory(texts, **kwargs):
        counter["n"] += 1
        index = build_index(tmp_path / f"idx_{counter['n']}", texts, **kwargs)
        created.append(index)
        return index

    yield factory
    for index in created:
        if not index.closed:
            index.close()


@pytest.fixture
def paper_index(make_index):
    return make_index(PAPER_PHRASES)


@pytest.fixture
def cat_index(make_index):
    return make_index(["the cat sat", "cat", "dog"])


@pytest.fixture
def random_texts():
    # 1000 docs, até 50 tokens, vocabulário de 20 palavras
    rng = np.random.default_rng(1234)
    vocab = [f"w{i}" for i in range(20)]
    return [
        " ".join(rng.choice(vocab, size=int(rng.integers(1, 51))))
        for _ in range(1000)
    ]


@pytest.fixture
def small_corpus():
    return generate_corpus(n_docs=200, seed=7, languages=("eng", "deu", "fra"), doc_bytes=300)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def jsonl_file(tmp_path, small_corpus):
    return write_jsonl(tmp_path / "corpus.jsonl", small_corpus.to_dict(orient="records"))


@pytest.fixture
def parquet_file(tmp_path, small_corpus):
    path = tmp_path / "corpus.parquet"
    small_corpus.to_parquet(path, index=False)
    return path


@pytest.fixture
def temp_config_file(tmp_path):
    # cria arquivo de configuração temporário
    config_data = {
        'log_level': 'WARNING',
        'index': {'dedup': False, 'shards': 1},
        'bulk': {'worker_count': 2, 'chunk_size': 50, 'queue_size': 4},
        'query': {'default_slop': 0, 'default_limit': 5},
        'bench': {'lengths': [1, 2, 5], 'samples_per_length': 3, 'seed': 11},
        'audit': {'slop': 0, 'top_k': 3},
        'server': {'bind': '127.0.0.1', 'port': 9200, 'data_dir': str(tmp_path / 'indices')},
    }

    config_file = tmp_path / "test_config.yaml"
    with open(config_file, 'w') as f:
        yaml.dump(config_data, f)

    return config_file
