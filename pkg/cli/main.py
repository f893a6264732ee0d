"""Linha de comando: index, search, count, audit, bench, merge, serve, generate e config.

Saída para máquinas (JSON) no stdout; logs no stderr.
Códigos de saída: 0 sucesso, 1 falha operacional, 2 erro de uso.
"""
import functools
import itertools
import json
import logging
import os
from pathlib import Path

import click
from rich.console import Console
from rich.table import Table

from cli.config_cli import config_group
from config.config_manager import ConfigManager
from config.config_schema import Config
from core.audit import export_report, load_dictionary, run_audit, top_k
from core.bulkingest import BulkParams, bulk_index, plan_bulk_params, read_documents
from core.exceptions import IndexingError
from core.invindex import Index
from core.metrics import bench_query_latency, snapshot_stats, spearman, write_bench_csv, write_bench_json, write_stats_csv
from core.queryengine import Match, MatchPhrase, parse_query, query_to_dict
from core.server import ServerConfig, search_page, serve
from core.shardctl import ShardSet, merge_indices, scatter_gather_count, scatter_gather_occurrences
from core.textanalysis import AnalyzerConfig
from utils.generate_fake_data import generate_corpus, save_corpus
from utils.log import configure_logging

logger = logging.getLogger(__name__)

console = Console(stderr=True)

PLANNER_SAMPLE_DOCS = 1000


def _emit(payload):
    click.echo(json.dumps(payload, ensure_ascii=False, default=str))


def operational(func):
    """Converte erros do motor em saída 1 com mensagem no stderr"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (IndexingError, OSError, ValueError) as e:
            logger.debug("Falha operacional", exc_info=True)
            raise click.ClickException(f"{type(e).__name__}: {e}")
    return wrapper


def _open_target(path):
    if ShardSet.is_shard_set(path):
        return ShardSet.open(path)
    return Index.open(path)


def _build_query(phrase, match, query, slop):
    chosen = [q for q in (phrase, match, query) if q is not None]
    if len(chosen) != 1:
        raise click.UsageError("Informe exatamente um de --phrase, --match ou --query")
    if phrase is not None:
        return MatchPhrase(phrase, slop)
    if match is not None:
        return Match(match)
    return parse_query(query)


def _parse_lengths(value):
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"lista de inteiros separados por vírgula: {value!r}")


def _average_doc_size(inputs) -> int:
    sizes = [
        len(str(record.get("text", "")).encode("utf-8"))
        for record in itertools.islice(read_documents(inputs), PLANNER_SAMPLE_DOCS)
        if isinstance(record, dict)
    ]
    return max(1, sum(sizes) // len(sizes)) if sizes else 1


@click.group()
@click.option('--config', 'config_path', default=None, type=click.Path(dir_okay=False),
              help='Arquivo YAML de configuração (padrão: config/config.yaml do pacote)')
@click.option('--log-level', default=None,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
              help='Nível de log (padrão: o da configuração)')
@click.pass_context
def cli(ctx, config_path, log_level):
    """Indexação e busca full-text com auditoria de termos"""
    try:
        cfg = ConfigManager(config_path).load()
    except (OSError, ValueError) as e:
        raise click.ClickException(f"Configuração inválida: {e}")
    configure_logging(log_level or cfg.log_level)
    ctx.obj = cfg


cli.add_command(config_group, name="config")


@cli.command("index")
@click.option('--input', 'inputs', multiple=True, required=True, type=click.Path(),
              help='Arquivos JSONL, JSONL.gz ou Parquet (repita a opção)')
@click.option('--index', 'index_path', required=True, type=click.Path(file_okay=False), help='Diretório do índice')
@click.option('--workers', type=int, default=None, help='Threads de ingestão (padrão: planejado)')
@click.option('--chunk-size', type=int, default=None, help='Documentos por chunk (padrão: planejado)')
@click.option('--max-chunk-bytes', type=int, default=None, help='Teto de bytes por chunk (padrão: configuração)')
@click.option('--queue-size', type=int, default=None, help='Chunks na fila (padrão: configuração, 4)')
@click.option('--ram-budget', type=int, default=None, help='Orçamento de RAM para o planejador (bytes)')
@click.option('--dedup/--no-dedup', default=None, help='Pula documentos com SHA-256 repetido')
@click.option('--shards', type=int, default=None, help='Número de shards (padrão: configuração, 1)')
@click.option('--refresh-interval', type=float, default=None, help='Refresh a cada N segundos durante a carga')
@click.option('--sample-rss', is_flag=True, default=False, help='Amostra o RSS do processo (psutil)')
@click.option('--stats-out', type=click.Path(dir_okay=False), default=None, help='CSV de estatísticas (acrescenta linha)')
@click.option('--label', default=None, help='Rótulo do dataset nas estatísticas (padrão: nome do índice)')
@click.pass_obj
@operational
def cmd_index(cfg: Config, inputs, index_path, workers, chunk_size, max_chunk_bytes, queue_size,
              ram_budget, dedup, shards, refresh_interval, sample_rss, stats_out, label):
    """Indexa um corpus"""
    for path in inputs:
        if not Path(path).exists():
            raise click.ClickException(f"Entrada não encontrada: {path}")

    bulk_cfg = cfg.bulk
    max_chunk_bytes = max_chunk_bytes or bulk_cfg.max_chunk_bytes
    queue_size = queue_size or bulk_cfg.queue_size
    workers = workers or bulk_cfg.worker_count
    chunk_size = chunk_size or bulk_cfg.chunk_size
    if workers is None or chunk_size is None:
        planned = plan_bulk_params(
            avg_doc_size=_average_doc_size(inputs),
            max_chunk_bytes=max_chunk_bytes,
            cores=os.cpu_count() or 1,
            ram_budget=ram_budget or bulk_cfg.ram_budget_bytes,
            queue_size=queue_size,
        )
        workers = workers or planned.worker_count
        chunk_size = chunk_size or planned.chunk_size
        max_chunk_bytes = planned.max_chunk_bytes
    params = BulkParams(
        worker_count=workers,
        chunk_size=chunk_size,
        max_chunk_bytes=max_chunk_bytes,
        queue_size=queue_size,
        refresh_interval_seconds=refresh_interval or cfg.index.refresh_interval_seconds,
    )
    console.print(f"[cyan]Parâmetros:[/cyan] {params.model_dump()}")

    dedup = cfg.index.dedup if dedup is None else dedup
    shards = shards or cfg.index.shards
    analyzer = AnalyzerConfig(**cfg.analyzer.model_dump())
    records = read_documents(inputs)
    if shards > 1:
        if ShardSet.is_shard_set(index_path):
            target = ShardSet.open(index_path)
        else:
            # dedup entre shards exige que duplicatas caiam no mesmo shard
            route_by = "content" if dedup else cfg.index.route_by
            target = ShardSet.create(index_path, shards, analyzer=analyzer, route_by=route_by)
        report = target.bulk_index(records, params, dedup=dedup)
    else:
        target = Index.open_or_create(index_path, analyzer=analyzer, use_mmap=cfg.index.use_mmap)
        report = bulk_index(target, records, params, dedup=dedup, sample_rss=sample_rss)

    stats = snapshot_stats(target, label or Path(index_path).name)
    target.close()
    if stats_out:
        write_stats_csv([stats], stats_out, append=True)

    _emit({"params": params.model_dump(), "bulk": report.to_dict(), "stats": stats.to_dict()})


@cli.command("search")
@click.option('--index', 'index_path', required=True, type=click.Path(), help='Diretório do índice ou shards')
@click.option('--phrase', default=None, help='Consulta match_phrase')
@click.option('--match', default=None, help='Consulta match (qualquer termo)')
@click.option('--query', default=None, help='Consulta na gramática JSON')
@click.option('--slop', type=click.IntRange(min=0), default=None, help='Folga da frase (padrão: configuração, 0)')
@click.option('--limit', type=click.IntRange(min=0), default=None, help='Máximo de hits (0 = só o total)')
@click.option('--offset', type=click.IntRange(min=0), default=0, show_default=True, help='Paginação')
@click.option('--source', is_flag=True, default=False, help='Inclui o texto e metadados de cada hit')
@click.pass_obj
@operational
def cmd_search(cfg: Config, index_path, phrase, match, query, slop, limit, offset, source):
    """Busca e imprime JSON lines (resumo e um hit por linha)"""
    slop = cfg.query.default_slop if slop is None else slop
    limit = cfg.query.default_limit if limit is None else limit
    ast = _build_query(phrase, match, query, slop)
    target = _open_target(index_path)
    page = search_page(target, {"query": query_to_dict(ast), "from": offset, "size": limit, "_source": source})
    _emit({"total_docs": page["total"], "took": page["took"]})
    for hit in page["hits"]:
        _emit(hit)


@cli.command("count")
@click.option('--index', 'index_path', required=True, type=click.Path(), help='Diretório do índice ou shards')
@click.option('--phrase', default=None, help='Consulta match_phrase')
@click.option('--match', default=None, help='Consulta match (qualquer termo)')
@click.option('--query', default=None, help='Consulta na gramática JSON')
@click.option('--slop', type=click.IntRange(min=0), default=None, help='Folga da frase (padrão: configuração, 0)')
@click.option('--occurrences', is_flag=True, default=False, help='Também conta ocorrências (apenas frases)')
@click.pass_obj
@operational
def cmd_count(cfg: Config, index_path, phrase, match, query, slop, occurrences):
    """Conta documentos que casam com a consulta"""
    slop = cfg.query.default_slop if slop is None else slop
    ast = _build_query(phrase, match, query, slop)
    target = _open_target(index_path)
    shards = target.shards if isinstance(target, ShardSet) else [target]
    result = {"count": scatter_gather_count(shards, ast, fail_on_empty=True)}
    if occurrences:
        result["occurrences"] = scatter_gather_occurrences(shards, ast, fail_on_empty=True)
    _emit(result)


@cli.command("audit")
@click.option('--index', 'index_path', required=True, type=click.Path(), help='Diretório do índice ou shards')
@click.option('--dict', 'dict_path', required=True, type=click.Path(dir_okay=False), help='Arquivo do dicionário')
@click.option('--format', 'dict_format', type=click.Choice(['lines', 'csv']), default=None,
              help='Formato do dicionário (padrão: configuração, lines)')
@click.option('--lang', default='und', show_default=True, help='Idioma (ISO 639-3) dos termos no formato lines')
@click.option('--slop', type=click.IntRange(min=0), default=None, help='Folga das frases (padrão: configuração, 0)')
@click.option('--all-languages', is_flag=True, default=False, help='Não filtra documentos pelo idioma')
@click.option('--out', type=click.Path(dir_okay=False), default=None, help='Relatório .csv ou .json')
@click.option('--heatmap', type=click.Path(dir_okay=False), default=None, help='Matriz idioma x termo (CSV)')
@click.option('--measure', type=click.Choice(['doc_count', 'occurrence_count']), default='doc_count',
              show_default=True, help='Medida do heatmap')
@click.option('--top-k', 'top_k_n', type=click.IntRange(min=1), default=None, help='Ranking por idioma (padrão: configuração, 5)')
@click.option('--plot', type=click.Path(dir_okay=False), default=None, help='Heatmap em HTML (plotly)')
@click.pass_obj
@operational
def cmd_audit(cfg: Config, index_path, dict_path, dict_format, lang, slop, all_languages, out, heatmap,
              measure, top_k_n, plot):
    """Audita o índice com um dicionário de termos"""
    dictionary = load_dictionary(
        dict_path,
        format=dict_format or cfg.audit.dictionary_format,
        language=lang,
        min_words=cfg.audit.min_words,
        max_words=cfg.audit.max_words,
    )
    target = _open_target(index_path)
    report = run_audit(target, dictionary, slop=cfg.audit.slop if slop is None else slop,
                       scope_by_language=not all_languages)

    if out:
        export_report(report, out, format="json" if out.endswith(".json") else "csv")
    if heatmap:
        export_report(report, heatmap, format="heatmap_csv", measure=measure)
    if plot:
        from dashboard.charts import heatmap_figure, save_figure
        save_figure(heatmap_figure(report, measure), plot)

    k = top_k_n or cfg.audit.top_k
    ranking = {
        language: [
            {"term": r.term, "doc_count": r.doc_count, "occurrence_count": r.occurrence_count}
            for r in top_k(report, language, k, by="occurrence_count")
        ]
        for language in report.languages
    }
    _emit({
        "dictionary": report.dictionary,
        "slop": report.slop,
        "terms": len(report.rows),
        "language_totals": report.language_totals,
        "top_k": ranking,
        "errors": report.errors,
    })


@cli.command("bench")
@click.option('--index', 'index_path', required=True, type=click.Path(file_okay=False), help='Diretório do índice')
@click.option('--lengths', default=None, help='Comprimentos separados por vírgula (padrão: grade de 13)')
@click.option('--samples', type=click.IntRange(min=1), default=None, help='Consultas por comprimento (padrão: 25)')
@click.option('--seed', type=int, default=None, help='Semente do sorteio (padrão: configuração, 0)')
@click.option('--out', type=click.Path(dir_okay=False), default=None, help='Resultado .csv ou .json')
@click.option('--plot', type=click.Path(dir_okay=False), default=None, help='Gráfico em HTML (plotly)')
@click.pass_obj
@operational
def cmd_bench(cfg: Config, index_path, lengths, samples, seed, out, plot):
    """Mede a latência de match_phrase por comprimento de consulta"""
    index = Index.open(index_path, use_mmap=cfg.index.use_mmap)
    report = bench_query_latency(
        index,
        lengths=_parse_lengths(lengths) if lengths else cfg.bench.lengths,
        samples_per_length=samples or cfg.bench.samples_per_length,
        seed=cfg.bench.seed if seed is None else seed,
    )
    if out:
        (write_bench_json if out.endswith(".json") else write_bench_csv)(report, out)
    if plot:
        from dashboard.charts import latency_figure, save_figure
        save_figure(latency_figure(report), plot)

    table = Table(show_header=True, header_style="bold magenta")
    for column in ("length", "mean_ms", "std_ms"):
        table.add_column(column, style="cyan")
    for row in report.to_frame().itertuples():
        table.add_row(str(row.length), f"{row.mean_ms:.3f}", f"{row.std_ms:.3f}")
    console.print(table)

    correlation = spearman(report) if len(report.lengths) > 1 else None
    _emit({
        "measurements": report.measurements,
        "samples_per_length": report.samples_per_length,
        "spearman": correlation,
        "per_length": report.to_frame().to_dict(orient="records"),
    })


@cli.command("merge")
@click.option('--sources', multiple=True, required=True, help='Índices, diretórios de shards ou http://host:port/índice')
@click.option('--dest', required=True, type=click.Path(file_okay=False), help='Índice de destino')
@click.option('--dedup', is_flag=True, default=False, help='Pula documentos já presentes no destino')
@click.option('--append', is_flag=True, default=False, help='Permite destino não vazio')
@click.option('--page-size', type=click.IntRange(min=1), default=1000, show_default=True,
              help='Página para fontes remotas')
@click.pass_obj
@operational
def cmd_merge(cfg: Config, sources, dest, dedup, append, page_size):
    """Reindexa várias fontes em um único índice"""
    analyzer = AnalyzerConfig(**cfg.analyzer.model_dump())
    report = merge_indices(list(sources), dest, dedup=dedup, append=append,
                           page_size=page_size, analyzer=analyzer)
    _emit(report.to_dict())


@cli.command("serve")
@click.option('--bind', default=None, help='Endereço (padrão: configuração, 127.0.0.1)')
@click.option('--port', type=click.IntRange(0, 65535), default=None, help='Porta (0 = livre; padrão: 9200)')
@click.option('--data-dir', type=click.Path(file_okay=False), default=None, help='Diretório dos índices')
@click.option('--max-body-bytes', type=int, default=None, help='Tamanho máximo da requisição')
@click.option('--allow-non-loopback', is_flag=True, default=False, help='Permite bind fora do loopback')
@click.pass_obj
@operational
def cmd_serve(cfg: Config, bind, port, data_dir, max_body_bytes, allow_non_loopback):
    """Sobe o serviço HTTP"""
    settings = cfg.server
    config = ServerConfig(
        bind=bind or settings.bind,
        port=settings.port if port is None else port,
        data_dir=data_dir or settings.data_dir,
        max_body_bytes=max_body_bytes or settings.max_body_bytes,
        allow_non_loopback=allow_non_loopback or settings.allow_non_loopback,
    )

    def announce(host, chosen_port):
        _emit({"host": host, "port": chosen_port})

    serve(config, on_bound=announce, log_level=cfg.log_level.lower())


@cli.command("generate")
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Arquivo .jsonl, .jsonl.gz ou .parquet')
@click.option('--docs', type=click.IntRange(min=1), default=1000, show_default=True, help='Documentos únicos')
@click.option('--seed', type=int, default=42, show_default=True, help='Semente')
@click.option('--languages', default='eng', show_default=True, help='Idiomas separados por vírgula')
@click.option('--dup-factor', type=click.IntRange(min=1), default=1, show_default=True, help='Cópias por documento')
@click.option('--doc-bytes', type=click.IntRange(min=1), default=1024, show_default=True, help='Tamanho médio')
@operational
def cmd_generate(out, docs, seed, languages, dup_factor, doc_bytes):
    """Gera um corpus sintético"""
    df = generate_corpus(
        n_docs=docs,
        seed=seed,
        languages=tuple(lang.strip() for lang in languages.split(",") if lang.strip()),
        dup_factor=dup_factor,
        doc_bytes=doc_bytes,
    )
    save_corpus(df, out)
    _emit({"out": out, "records": len(df), "unique": docs})


if __name__ == '__main__':
    cli()
