"""Serviço HTTP mínimo: criação de índices, _bulk NDJSON, _search/_count, _reindex e _stats"""
import ipaddress
import json
import logging
import re
import socket
import threading
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, ValidationError, model_validator
from starlette.concurrency import run_in_threadpool

from core.bulkingest import record_to_document
from core.exceptions import (
    AlreadyExists,
    BadName,
    BodyTooLarge,
    DestNotEmpty,
    IndexingError,
    InvalidUtf8,
    QueryError,
    ShardUnavailable,
    SourceUnreachable,
    UnknownIndex,
    UnparseableAction,
)
from core.invindex import Index, Indexed
from core.metrics import snapshot_stats
from core.queryengine import MatchAll, parse_query, search
from core.shardctl import ShardSet, merge_indices, scatter_gather_count
from core.textanalysis import ANALYZERS, AnalyzerConfig

logger = logging.getLogger(__name__)

INDEX_NAME_RE = re.compile(r"[a-z0-9_-]+")
DEFAULT_PORT = 9200
DEFAULT_PAGE_SIZE = 10
MAX_PAGE_SIZE = 10_000

Target = Union[Index, ShardSet]

_ERROR_STATUS = [
    (UnknownIndex, 404),
    (AlreadyExists, 409),
    (DestNotEmpty, 409),
    (BadName, 400),
    (UnparseableAction, 400),
    (QueryError, 400),
    (InvalidUtf8, 400),
    (BodyTooLarge, 413),
    (SourceUnreachable, 502),
    (ShardUnavailable, 503),
]


def _is_loopback(host: str) -> bool:
    if host == "localhost":
        return True
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        return False


class ServerConfig(BaseModel):
    bind: str = "127.0.0.1"
    port: int = Field(default=DEFAULT_PORT, ge=0, le=65535)
    data_dir: Path = Path("data/indices")
    max_body_bytes: int = Field(default=100 * 1024 * 1024, gt=0)
    allow_non_loopback: bool = False

    @model_validator(mode="after")
    def _loopback_only(self):
        if not self.allow_non_loopback and not _is_loopback(self.bind):
            raise ValueError(f"bind {self.bind!r} não é loopback (use allow_non_loopback)")
        return self


class IndexRegistry:
    """Índices abertos sob data_dir, com um lock de escrita por índice"""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._open: Dict[str, Target] = {}
        self._locks: Dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def path_for(self, name: str) -> Path:
        # prefixo "_" fica reservado para os endpoints (_health, _reindex)
        if not INDEX_NAME_RE.fullmatch(name) or name.startswith("_"):
            raise BadName(f"Nome de índice inválido: {name!r}")
        return self.data_dir / name

    def exists(self, name: str) -> bool:
        path = self.path_for(name)
        return (path / "index.json").exists() or ShardSet.is_shard_set(path)

    def names(self) -> List[str]:
        return sorted(
            p.name for p in self.data_dir.iterdir()
            if p.is_dir() and ((p / "index.json").exists() or ShardSet.is_shard_set(p))
        )

    def create(self, name: str, analyzer: Optional[AnalyzerConfig] = None, shards: int = 1,
               exist_ok: bool = False) -> Target:
        path = self.path_for(name)
        with self._guard:
            if self.exists(name):
                if exist_ok:
                    return self._load(name, path)
                raise AlreadyExists(f"Índice já existe: {name}")
            if shards > 1:
                target = ShardSet.create(path, shards, analyzer=analyzer, route_by="content")
            else:
                target = Index.create(path, analyzer=analyzer)
            self._open[name] = target
            return target

    def _load(self, name: str, path: Path) -> Target:
        target = self._open.get(name)
        if target is None:
            target = ShardSet.open(path) if ShardSet.is_shard_set(path) else Index.open(path)
            self._open[name] = target
        return target

    def get(self, name: str) -> Target:
        path = self.path_for(name)
        with self._guard:
            if name not in self._open and not self.exists(name):
                raise UnknownIndex(f"Índice não encontrado: {name}")
            return self._load(name, path)

    def write_lock(self, name: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(name, threading.Lock())

    def close_all(self):
        with self._guard:
            for target in self._open.values():
                target.close()
            self._open.clear()


def _members(target: Target) -> List[Index]:
    return target.shards if isinstance(target, ShardSet) else [target]


def _refresh(target: Target):
    if isinstance(target, ShardSet):
        target.refresh_all()
    else:
        target.refresh()


# _bulk

def parse_bulk_body(body: bytes) -> List[Tuple[str, Optional[str], bytes]]:
    """
    Separa o NDJSON em itens (operação, _id, linha do documento)

    Ação malformada invalida a requisição inteira; documento malformado falha só o seu item.
    """
    if not body.strip():
        raise UnparseableAction("Corpo vazio")
    if not body.endswith(b"\n"):
        raise UnparseableAction("NDJSON deve terminar com nova linha")
    lines = [line for line in body.split(b"\n") if line.strip()]
    if len(lines) % 2:
        raise UnparseableAction("Ação sem linha de documento")

    items = []
    for i in range(0, len(lines), 2):
        try:
            action = json.loads(lines[i])
        except ValueError as e:
            raise UnparseableAction(f"Linha {i + 1}: ação inválida ({e})") from e
        if not isinstance(action, dict) or len(action) != 1:
            raise UnparseableAction(f"Linha {i + 1}: a ação deve ter uma única chave")
        (op, meta), = action.items()
        if op not in ("index", "create") or not isinstance(meta, (dict, type(None))):
            raise UnparseableAction(f"Linha {i + 1}: ação desconhecida {op!r}")
        doc_id = (meta or {}).get("_id")
        items.append((op, str(doc_id) if doc_id is not None else None, lines[i + 1]))
    return items


def apply_bulk(target: Target, items: List[Tuple[str, Optional[str], bytes]], dedup: bool = False) -> List[Dict]:
    results = []
    for op, doc_id, raw in items:
        try:
            source = json.loads(raw)
            if not isinstance(source, dict):
                raise ValueError("documento não é um objeto")
            if doc_id is not None:
                source["id"] = doc_id
            outcome = target.add_document(record_to_document(source), dedup=dedup)
        except (ValueError, InvalidUtf8) as e:
            results.append({op: {"_id": doc_id, "status": 400,
                                 "error": {"type": type(e).__name__, "reason": str(e)}}})
            continue
        if isinstance(outcome, Indexed):
            results.append({op: {"_id": doc_id, "doc_id": outcome.doc_id, "status": 201, "result": "created"}})
        else:
            results.append({op: {"_id": doc_id, "existing_doc_id": outcome.existing_doc_id,
                                 "status": 200, "result": "noop"}})
    return results


# _search

def _page_size(value) -> int:
    size = int(value)
    if size < 0 or size > MAX_PAGE_SIZE:
        raise QueryError(f"size deve estar em [0, {MAX_PAGE_SIZE}]")
    return size


def search_page(target: Target, body: Dict) -> Dict:
    """Página from/size ordenada por (shard, doc_id); _source opcional"""
    query = body.get("query", {"match_all": {}})
    ast = parse_query(query) if query else MatchAll()
    try:
        offset = int(body.get("from", 0))
        size = _page_size(body.get("size", DEFAULT_PAGE_SIZE))
    except (TypeError, ValueError) as e:
        raise QueryError(f"from/size inválidos: {e}") from e
    if offset < 0:
        raise QueryError("from deve ser >= 0")
    with_source = bool(body.get("_source", False))
    sharded = isinstance(target, ShardSet)

    started = time.perf_counter()
    total = 0
    gathered = []
    for shard_no, member in enumerate(_members(target)):
        snapshot = member.snapshot()
        result = search(snapshot, ast, limit=offset + size)
        total += result.total_docs
        gathered.extend((shard_no, snapshot, hit) for hit in result.hits)
    gathered.sort(key=lambda item: (item[0], item[2].doc_id))

    hits = []
    for shard_no, snapshot, hit in gathered[offset:offset + size]:
        entry = vars(hit).copy()
        if sharded:
            entry["shard"] = shard_no
        if with_source:
            doc = snapshot.get_document(hit.doc_id)
            entry["_source"] = {"text": doc.text, **doc.metadata}
        hits.append(entry)
    return {"took": round((time.perf_counter() - started) * 1000, 3), "total": total, "hits": hits}


def _count(target: Target, body: Dict) -> int:
    query = body.get("query", {"match_all": {}})
    ast = parse_query(query) if query else MatchAll()
    if isinstance(target, ShardSet):
        return scatter_gather_count(target, ast)
    return search(target, ast, limit=0).total_docs


# _reindex

def reindex(registry: IndexRegistry, body: Dict):
    source = body.get("source") or {}
    dest = (body.get("dest") or {}).get("index")
    if not isinstance(source, dict) or not dest:
        raise UnparseableAction("_reindex precisa de source e dest.index")
    names = source.get("index")
    names = [names] if isinstance(names, str) else list(names or [])
    if not names:
        raise UnparseableAction("source.index ausente")

    remote = source.get("remote")
    if remote:
        host = str(remote.get("host", "")).rstrip("/")
        if not host.startswith(("http://", "https://")):
            raise UnparseableAction(f"source.remote.host inválido: {host!r}")
        sources = [f"{host}/{name}" for name in names]
    else:
        sources = [registry.get(name) for name in names]

    dest_target = registry.get(dest)
    if isinstance(dest_target, ShardSet):
        raise UnparseableAction("Destino do _reindex deve ser um índice simples")
    with registry.write_lock(dest):
        report = merge_indices(
            sources,
            dest_target,
            dedup=bool(body.get("dedup", False)),
            append=bool(body.get("append", False)),
            page_size=int(body.get("size", 1000)),
        )
    return report.to_dict()


def _json_body(raw: bytes) -> Dict:
    if not raw.strip():
        return {}
    try:
        body = json.loads(raw)
    except ValueError as e:
        raise QueryError(f"JSON inválido: {e}") from e
    if not isinstance(body, dict):
        raise QueryError("O corpo deve ser um objeto JSON")
    return body


async def _read_body(request: Request, limit: int) -> bytes:
    declared = request.headers.get("content-length")
    if declared and declared.isdigit() and int(declared) > limit:
        raise BodyTooLarge(f"Corpo de {declared} bytes excede o limite de {limit}")
    raw = await request.body()
    if len(raw) > limit:
        raise BodyTooLarge(f"Corpo de {len(raw)} bytes excede o limite de {limit}")
    return raw


def _analyzer_from(body: Dict) -> Optional[AnalyzerConfig]:
    setting = body.get("analyzer")
    if setting is None:
        return None
    if isinstance(setting, str):
        if setting not in ANALYZERS:
            raise UnparseableAction(f"Analyzer desconhecido: {setting}")
        return ANALYZERS[setting]
    return AnalyzerConfig(**setting)


def create_app(config: Optional[ServerConfig] = None, registry: Optional[IndexRegistry] = None) -> FastAPI:
    """Monta a aplicação FastAPI sobre os índices em config.data_dir"""
    config = config or ServerConfig()
    registry = registry or IndexRegistry(config.data_dir)
    app = FastAPI(title="indexacao-corpus")
    app.state.config = config
    app.state.registry = registry

    @app.exception_handler(IndexingError)
    async def indexing_error(request: Request, exc: IndexingError):
        status = next((code for cls, code in _ERROR_STATUS if isinstance(exc, cls)), 500)
        if status >= 500:
            logger.error(f"{request.method} {request.url.path}: {type(exc).__name__}: {exc}")
        return JSONResponse({"error": {"type": type(exc).__name__, "reason": str(exc)}, "status": status},
                            status_code=status)

    @app.exception_handler(ValidationError)
    async def validation_error(request: Request, exc: ValidationError):
        return JSONResponse({"error": {"type": "ValidationError", "reason": str(exc)}, "status": 400},
                            status_code=400)

    @app.on_event("shutdown")
    def shutdown():
        registry.close_all()

    @app.get("/_health")
    def health():
        return {"status": "ok", "indices": registry.names()}

    @app.post("/_reindex")
    async def handle_reindex(request: Request):
        body = _json_body(await _read_body(request, config.max_body_bytes))
        return await run_in_threadpool(reindex, registry, body)

    @app.put("/{index}")
    async def handle_create_index(index: str, request: Request):
        body = _json_body(await _read_body(request, config.max_body_bytes))
        shards = int(body.get("shards", 1))
        if shards < 1:
            raise UnparseableAction("shards deve ser >= 1")
        registry.create(index, analyzer=_analyzer_from(body), shards=shards,
                        exist_ok=bool(body.get("exist_ok", False)))
        logger.info(f"Índice criado via HTTP: {index} ({shards} shard(s))")
        return {"acknowledged": True, "index": index, "shards": shards}

    @app.post("/{index}/_bulk")
    async def handle_bulk(index: str, request: Request, refresh: bool = True, dedup: bool = False):
        raw = await _read_body(request, config.max_body_bytes)
        target = registry.get(index)
        items = parse_bulk_body(raw)

        def run():
            started = time.perf_counter()
            with registry.write_lock(index):
                results = apply_bulk(target, items, dedup=dedup)
                if refresh:
                    _refresh(target)
                for member in _members(target):
                    member.record_ingest(time.perf_counter() - started)
            return results

        results = await run_in_threadpool(run)
        errors = any(next(iter(r.values()))["status"] >= 400 for r in results)
        logger.info(f"_bulk {index}: {len(results)} itens, erros={errors}")
        return {"errors": errors, "items": results}

    @app.api_route("/{index}/_refresh", methods=["POST", "GET"])
    async def handle_refresh(index: str):
        target = registry.get(index)

        def run():
            with registry.write_lock(index):
                _refresh(target)

        await run_in_threadpool(run)
        return {"acknowledged": True}

    @app.api_route("/{index}/_search", methods=["GET", "POST"])
    async def handle_search(index: str, request: Request):
        body = _json_body(await _read_body(request, config.max_body_bytes))
        target = registry.get(index)
        return await run_in_threadpool(search_page, target, body)

    @app.api_route("/{index}/_count", methods=["GET", "POST"])
    async def handle_count(index: str, request: Request):
        body = _json_body(await _read_body(request, config.max_body_bytes))
        target = registry.get(index)
        return {"count": await run_in_threadpool(_count, target, body)}

    @app.get("/{index}/_stats")
    def handle_stats(index: str):
        return snapshot_stats(registry.get(index), index).to_dict()

    return app


def serve(config: ServerConfig, on_bound: Optional[Callable[[str, int], None]] = None, log_level: str = "info"):
    """
    Sobe o servidor com uvicorn; porta 0 escolhe uma porta livre

    Args:
        config: endereço, porta e diretório de dados
        on_bound: chamado com (host, porta efetiva) antes de aceitar conexões
    """
    sock = socket.socket(socket.AF_INET6 if ":" in config.bind else socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((config.bind, config.port))
    port = sock.getsockname()[1]
    if on_bound:
        on_bound(config.bind, port)
    logger.info(f"Servidor em http://{config.bind}:{port} (dados em {config.data_dir})")

    app = create_app(config)
    server = uvicorn.Server(uvicorn.Config(app, log_level=log_level, log_config=None))
    server.run(sockets=[sock])
