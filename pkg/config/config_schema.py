from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.metrics import DEFAULT_LENGTHS, DEFAULT_SAMPLES
from core.textanalysis import DEFAULT_STAGES


class AnalyzerSettings(BaseModel):
    name: str = Field(default="web_content_analyzer")
    stages: List[str] = Field(default_factory=lambda: list(DEFAULT_STAGES))


class IndexSettings(BaseModel):
    dedup: bool = Field(default=False)
    use_mmap: bool = Field(default=False)
    refresh_interval_seconds: Optional[float] = Field(default=None, gt=0)
    shards: int = Field(default=1, ge=1)
    route_by: str = Field(default="id", pattern="^(id|content)$")


class BulkSettings(BaseModel):
    # None = planejado a partir do orçamento de RAM e dos núcleos
    worker_count: Optional[int] = Field(default=None, ge=1)
    chunk_size: Optional[int] = Field(default=None, ge=1)
    max_chunk_bytes: int = Field(default=100 * 1024 * 1024, gt=0)
    queue_size: int = Field(default=4, ge=1)
    ram_budget_bytes: int = Field(default=2 * 1024 ** 3, gt=0)


class QuerySettings(BaseModel):
    default_slop: int = Field(default=0, ge=0)
    default_limit: int = Field(default=10, ge=0)


class BenchSettings(BaseModel):
    lengths: List[int] = Field(default_factory=lambda: list(DEFAULT_LENGTHS))
    samples_per_length: int = Field(default=DEFAULT_SAMPLES, ge=1)
    seed: int = Field(default=0)

    @field_validator("lengths")
    @classmethod
    def _positive_lengths(cls, value):
        if not value or any(length < 1 for length in value):
            raise ValueError("lengths deve ter comprimentos >= 1")
        return value


class AuditSettings(BaseModel):
    slop: int = Field(default=0, ge=0)
    top_k: int = Field(default=5, ge=1)
    dictionary_format: str = Field(default="lines", pattern="^(lines|csv)$")
    min_words: int = Field(default=1, ge=1)
    max_words: int = Field(default=5, ge=1)


class ServerSettings(BaseModel):
    bind: str = Field(default="127.0.0.1")
    port: int = Field(default=9200, ge=0, le=65535)
    data_dir: Path = Field(default=Path("data/indices"))
    max_body_bytes: int = Field(default=100 * 1024 * 1024, gt=0)
    allow_non_loopback: bool = Field(default=False)


class Config(BaseModel):
    model_config = ConfigDict(validate_assignment=True)

    log_level: str = Field(default="INFO", pattern="^(DEBUG|INFO|WARNING|ERROR)$")
    analyzer: AnalyzerSettings = Field(default_factory=AnalyzerSettings)
    index: IndexSettings = Field(default_factory=IndexSettings)
    bulk: BulkSettings = Field(default_factory=BulkSettings)
    query: QuerySettings = Field(default_factory=QuerySettings)
    bench: BenchSettings = Field(default_factory=BenchSettings)
    audit: AuditSettings = Field(default_factory=AuditSettings)
    server: ServerSettings = Field(default_factory=ServerSettings)
