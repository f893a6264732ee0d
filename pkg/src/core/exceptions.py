"""Exceções do motor de indexação.

Erros por documento/termo/item não passam por aqui: são registrados como dados
nos relatórios (BulkReport, AuditReport, resposta do _bulk).
"""


class IndexingError(Exception):
    """Raiz de todos os erros do projeto"""


# índice / armazenamento
class IndexClosed(IndexingError):
    pass


class InvalidUtf8(IndexingError):
    pass


class StorageFull(IndexingError):
    pass


class IoFailure(IndexingError):
    pass


class SegmentFormatError(IndexingError):
    pass


class BadMagic(SegmentFormatError):
    pass


class UnsupportedVersion(SegmentFormatError):
    pass


class Corrupt(SegmentFormatError):
    pass


class UnknownIndex(IndexingError):
    pass


class AlreadyExists(IndexingError):
    pass


class BadName(IndexingError):
    pass


# ingestão
class InfeasibleBudget(IndexingError):
    pass


class InputUnreadable(IndexingError):
    pass


# consultas
class QueryError(IndexingError):
    pass


class UnknownField(QueryError):
    pass


class EmptyQueryAfterAnalysis(QueryError):
    pass


class BadQuery(QueryError):
    pass


# shards / merge
class ShardUnavailable(IndexingError):
    def __init__(self, shard_id: int, reason: str = ""):
        self.shard_id = shard_id
        super().__init__(f"Shard {shard_id} indisponível {reason}".strip())


class SourceUnreachable(IndexingError):
    pass


class DestNotEmpty(IndexingError):
    pass


# métricas
class CorpusTooSmall(IndexingError):
    def __init__(self, length: int):
        self.length = length
        super().__init__(f"Nenhum documento com pelo menos {length} tokens")


# auditoria
class EmptyDictionary(IndexingError):
    pass


class MalformedCsv(IndexingError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        super().__init__(f"CSV malformado na linha {line}: {detail}")


class UnknownLanguage(IndexingError):
    pass


# servidor HTTP
class BodyTooLarge(IndexingError):
    pass


class UnparseableAction(IndexingError):
    pass
