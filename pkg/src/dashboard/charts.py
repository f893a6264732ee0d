import plotly.graph_objects as go
import plotly.express as px

from core.audit import AuditReport, heatmap_matrix
from core.metrics import LatencyBenchReport


def latency_figure(report: LatencyBenchReport) -> go.Figure:
    # latência média (± desvio) por comprimento da consulta

    frame = report.to_frame()

    fig = go.Figure()

    fig.add_trace(go.Scatter(
        x=frame['length'],
        y=frame['mean_ms'],
        error_y=dict(type='data', array=frame['std_ms'], visible=True),
        mode='lines+markers',
        name='match_phrase (slop 0)',
        line=dict(color='#2E86AB', width=3),
        marker=dict(size=8),
    ))

    fig.update_layout(
        title=f"Tempo de consulta x comprimento ({report.samples_per_length} amostras por comprimento)",
        xaxis_title="Comprimento da consulta (palavras)",
        yaxis_title="Latência (ms)",
        hovermode='x unified',
        template='plotly_white',
        height=400
    )

    return fig


def heatmap_figure(report: AuditReport, measure: str = "doc_count") -> go.Figure:
    ## heatmap idioma x termo

    matrix = heatmap_matrix(report, measure)

    fig = px.imshow(
        matrix.values,
        x=list(matrix.columns),
        y=list(matrix.index),
        color_continuous_scale='Reds',
        text_auto=True,
        aspect='auto',
    )

    fig.update_layout(
        title=f"Presença de termos do dicionário '{report.dictionary}' ({measure})",
        xaxis_title="Termo",
        yaxis_title="Idioma",
        template='plotly_white',
        height=400
    )

    return fig


def save_figure(fig: go.Figure, path):
    fig.write_html(str(path))
