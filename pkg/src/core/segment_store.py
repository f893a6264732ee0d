"""Formato em disco dos segmentos.

Arquivo de postings (.ftsg), little-endian:

    magic "FTSG" | versão u32 | crc32 do corpo u32 | tamanho do corpo u64
    corpo:
        doc_count u64 | raw_bytes u64 | term_count u32
        dicionário: por termo (ordenado por bytes) varint(len) termo varint(offset)
        postings:   por termo varint(n_docs), e por doc
                    varint(delta doc_id) varint(n_pos) varint(delta pos)...

Documentos (.docs): registros u64(len) + JSON utf-8, em ordem de doc_id.
"""
import errno
import hashlib
import json
import logging
import mmap
import struct
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

from core.exceptions import BadMagic, Corrupt, InvalidUtf8, IoFailure, StorageFull, UnsupportedVersion

logger = logging.getLogger(__name__)

MAGIC = b"FTSG"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_BODY_HEAD = struct.Struct("<QQI")
_RECORD_LEN = struct.Struct("<Q")


def content_hash(text: str) -> bytes:
    """SHA-256 do texto em UTF-8 (32 bytes)"""
    try:
        data = text.encode("utf-8")
    except UnicodeEncodeError as e:
        raise InvalidUtf8(f"Texto não representável em UTF-8: {e}") from e
    return hashlib.sha256(data).digest()


@dataclass
class Document:
    text: str
    external_id: Optional[str] = None
    metadata: Dict[str, Optional[str]] = None
    doc_id: Optional[int] = None
    content_hash: bytes = None

    def __post_init__(self):
        if isinstance(self.text, (bytes, bytearray)):
            try:
                self.text = bytes(self.text).decode("utf-8")
            except UnicodeDecodeError as e:
                raise InvalidUtf8(f"Documento {self.external_id!r}: {e}") from e
        if self.metadata is None:
            self.metadata = {}
        if self.content_hash is None:
            self.content_hash = content_hash(self.text)

    @property
    def language(self) -> str:
        return self.metadata.get("language") or "und"

    @property
    def size_bytes(self) -> int:
        return len(self.text.encode("utf-8"))

    def to_dict(self) -> Dict:
        return {
            "doc_id": self.doc_id,
            "external_id": self.external_id,
            "text": self.text,
            "metadata": self.metadata,
            "content_hash": self.content_hash.hex(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Document":
        return cls(
            text=data["text"],
            external_id=data.get("external_id"),
            metadata=data.get("metadata") or {},
            doc_id=data.get("doc_id"),
            content_hash=bytes.fromhex(data["content_hash"]) if data.get("content_hash") else None,
        )


@dataclass(frozen=True)
class Posting:
    doc_id: int
    positions: Tuple[int, ...]


@dataclass
class SegmentInfo:
    segment_id: int
    doc_count: int
    raw_bytes: int
    index_bytes: int
    path: str


@dataclass
class SegmentBuilder:
    """Segmento em memória, ainda não visível para buscas"""
    segment_id: int
    postings: Dict[str, Dict[int, List[int]]] = field(default_factory=dict)
    documents: List[Document] = field(default_factory=list)
    raw_bytes: int = 0

    @property
    def doc_count(self) -> int:
        return len(self.documents)

    def add(self, doc: Document, terms: List[str]):
        # doc_ids chegam em ordem crescente (atribuídos pelo writer)
        for position, term in enumerate(terms):
            by_doc = self.postings.get(term)
            if by_doc is None:
                by_doc = self.postings[term] = {}
            positions = by_doc.get(doc.doc_id)
            if positions is None:
                by_doc[doc.doc_id] = [position]
            else:
                positions.append(position)
        self.documents.append(doc)
        self.raw_bytes += doc.size_bytes

    def lookup(self, term: str) -> Dict[int, List[int]]:
        return self.postings.get(term, {})


def _put_varint(buf: bytearray, value: int):
    while value >= 0x80:
        buf.append((value & 0x7F) | 0x80)
        value >>= 7
    buf.append(value)


def _get_varint(data, pos: int) -> Tuple[int, int]:
    result = 0
    shift = 0
    while True:
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if byte < 0x80:
            return result, pos
        shift += 7


def docs_path_for(path: Path) -> Path:
    return Path(path).with_suffix(".docs")


def _write_file(path: Path, payload: bytes):
    try:
        with open(path, "wb") as f:
            f.write(payload)
    except OSError as e:
        if e.errno == errno.ENOSPC:
            raise StorageFull(f"Sem espaço para gravar {path}") from e
        raise IoFailure(f"Erro ao gravar {path}: {e}") from e


def encode_postings(postings: Dict[str, Dict[int, List[int]]]) -> Tuple[bytearray, bytearray]:
    dictionary = bytearray()
    block = bytearray()
    for term in sorted(postings):
        term_bytes = term.encode("utf-8")
        _put_varint(dictionary, len(term_bytes))
        dictionary += term_bytes
        _put_varint(dictionary, len(block))

        by_doc = postings[term]
        _put_varint(block, len(by_doc))
        previous_doc = 0
        for doc_id in sorted(by_doc):
            positions = by_doc[doc_id]
            _put_varint(block, doc_id - previous_doc)
            previous_doc = doc_id
            _put_varint(block, len(positions))
            previous_pos = 0
            for p in positions:
                _put_varint(block, p - previous_pos)
                previous_pos = p
    return dictionary, block


def write_segment(segment, path) -> int:
    """
    Grava o segmento (postings + documentos) e devolve o total de bytes em disco

    Args:
        segment: SegmentBuilder (ou qualquer objeto com postings/documents/raw_bytes)
        path: caminho do arquivo .ftsg; o .docs é gravado ao lado

    Returns:
        index_bytes: soma dos tamanhos dos dois arquivos
    """
    path = Path(path)
    dictionary, block = encode_postings(segment.postings)
    body = bytearray(_BODY_HEAD.pack(len(segment.documents), segment.raw_bytes, len(segment.postings)))
    _put_varint(body, len(dictionary))
    body += dictionary
    body += block
    header = _HEADER.pack(MAGIC, VERSION, zlib.crc32(body), len(body))
    _write_file(path, bytes(header) + bytes(body))

    records = bytearray()
    for doc in segment.documents:
        payload = json.dumps(doc.to_dict(), ensure_ascii=False).encode("utf-8")
        records += _RECORD_LEN.pack(len(payload))
        records += payload
    _write_file(docs_path_for(path), bytes(records))

    index_bytes = len(header) + len(body) + len(records)
    logger.debug(f"Segmento gravado em {path}: {len(segment.documents)} docs, {index_bytes} bytes")
    return index_bytes


class SegmentReader:
    """Segmento selado, somente leitura. Seguro para leitores concorrentes."""

    def __init__(self, path, use_mmap: bool = False, segment_id: Optional[int] = None):
        self.path = Path(path)
        self.segment_id = segment_id if segment_id is not None else _segment_id_from(self.path)
        self._data = self._load(self.path, use_mmap)
        self._parse_header()
        self._doc_offsets: Dict[int, Tuple[int, int]] = {}
        self._docs_data = self._load(docs_path_for(self.path), use_mmap)
        self._scan_documents()
        self.index_bytes = len(self._data) + len(self._docs_data)
        self._decode = lru_cache(maxsize=4096)(self._decode_postings)

    @staticmethod
    def _load(path: Path, use_mmap: bool):
        try:
            with open(path, "rb") as f:
                if use_mmap and path.stat().st_size > 0:
                    return mmap.mmap(f.fileno(), 0, access=mmap.ACCESS_READ)
                return f.read()
        except OSError as e:
            raise IoFailure(f"Erro ao ler {path}: {e}") from e

    def _parse_header(self):
        data = self._data
        if len(data) < _HEADER.size or bytes(data[:4]) != MAGIC:
            raise BadMagic(f"{self.path} não é um segmento FTSG")
        _, version, checksum, body_len = _HEADER.unpack_from(data, 0)
        if version != VERSION:
            raise UnsupportedVersion(f"{self.path}: versão {version} não suportada")
        body = data[_HEADER.size:]
        if len(body) != body_len or zlib.crc32(body) != checksum:
            raise Corrupt(f"{self.path}: checksum não confere")

        pos = _HEADER.size
        self.doc_count, self.raw_bytes, term_count = _BODY_HEAD.unpack_from(data, pos)
        pos += _BODY_HEAD.size
        dict_len, pos = _get_varint(data, pos)
        dict_end = pos + dict_len
        self._postings_start = dict_end

        self.term_dictionary: Dict[str, int] = {}
        while pos < dict_end:
            term_len, pos = _get_varint(data, pos)
            term = bytes(data[pos:pos + term_len]).decode("utf-8")
            pos += term_len
            offset, pos = _get_varint(data, pos)
            self.term_dictionary[term] = offset
        if len(self.term_dictionary) != term_count:
            raise Corrupt(f"{self.path}: dicionário com {len(self.term_dictionary)} termos, esperado {term_count}")

    def _scan_documents(self):
        data = self._docs_data
        pos = 0
        while pos < len(data):
            (length,) = _RECORD_LEN.unpack_from(data, pos)
            pos += _RECORD_LEN.size
            if pos + length > len(data):
                raise Corrupt(f"{self.path}: registro de documento truncado")
            head = json.loads(bytes(data[pos:pos + length]))
            self._doc_offsets[head["doc_id"]] = (pos, length)
            pos += length
        if len(self._doc_offsets) != self.doc_count:
            raise Corrupt(f"{self.path}: {len(self._doc_offsets)} documentos, esperado {self.doc_count}")
        self.doc_ids = sorted(self._doc_offsets)

    def _decode_postings(self, term: str) -> Dict[int, Tuple[int, ...]]:
        offset = self.term_dictionary.get(term)
        if offset is None:
            return {}
        data = self._data
        pos = self._postings_start + offset
        n_docs, pos = _get_varint(data, pos)
        result = {}
        doc_id = 0
        for _ in range(n_docs):
            delta, pos = _get_varint(data, pos)
            doc_id += delta
            n_pos, pos = _get_varint(data, pos)
            positions = []
            p = 0
            for _ in range(n_pos):
                d, pos = _get_varint(data, pos)
                p += d
                positions.append(p)
            result[doc_id] = tuple(positions)
        return result

    def lookup(self, term: str) -> Dict[int, Tuple[int, ...]]:
        """doc_id -> posições do termo neste segmento"""
        return self._decode(term)

    def postings(self, term: str) -> List[Posting]:
        return [Posting(doc_id, positions) for doc_id, positions in sorted(self.lookup(term).items())]

    def terms(self) -> List[str]:
        return list(self.term_dictionary)

    def has_doc(self, doc_id: int) -> bool:
        return doc_id in self._doc_offsets

    def get_document(self, doc_id: int) -> Document:
        pos, length = self._doc_offsets[doc_id]
        return Document.from_dict(json.loads(bytes(self._docs_data[pos:pos + length])))

    def iter_documents(self) -> Iterator[Document]:
        for doc_id in self.doc_ids:
            yield self.get_document(doc_id)

    def info(self) -> SegmentInfo:
        return SegmentInfo(self.segment_id, self.doc_count, self.raw_bytes, self.index_bytes, str(self.path))


def _segment_id_from(path: Path) -> int:
    try:
        return int(path.stem.split("_")[-1])
    except ValueError:
        return 0


def open_segment(path, use_mmap: bool = False) -> SegmentReader:
    return SegmentReader(path, use_mmap=use_mmap)
