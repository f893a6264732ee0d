import click
from pathlib import Path
from config.config_manager import ConfigManager
from config.config_schema import Config
from rich.console import Console
from rich.table import Table


console = Console()


@click.group()
def config_group():
    """Gerencia o arquivo YAML de configuração"""


@config_group.command()
@click.option('--config', default=None, help='Arquivo de configuração (padrão: config/config.yaml)')
def show(config):
    ##Mostra config atual
    try:
        cfg = ConfigManager(config).load()
    except (OSError, ValueError) as e:
        raise click.ClickException(f"Erro ao carregar: {e}")

    table = Table(show_header=True, header_style="bold magenta", title="Configuração Atual")
    table.add_column("Seção", style="cyan")
    table.add_column("Chave", style="green")
    table.add_column("Valor", style="yellow")

    for section, values in cfg.model_dump(mode="json").items():
        if isinstance(values, dict):
            for key, value in values.items():
                table.add_row(section, key, str(value))
        else:
            table.add_row(section, "", str(values))

    console.print(table)


@config_group.command()
@click.option('--config', default=None, help='Arquivo de configuração (padrão: config/config.yaml)')
def validate(config):
    ##Validação do arquivo de configuração
    try:
        ConfigManager(config).load()
    except (OSError, ValueError) as e:
        raise click.ClickException(f"Erro na validação: {e}")
    console.print("Configuração válida!")


@config_group.command(name="set")
@click.argument('section')
@click.argument('key')
@click.argument('value')
@click.option('--config', default=None, help='Arquivo de configuração (padrão: config/config.yaml)')
def set_value(section, key, value, config):
    """Altera um valor (section key value)"""
    manager = ConfigManager(config)
    try:
        cfg = manager.load()
    except (OSError, ValueError) as e:
        raise click.ClickException(f"Erro ao carregar: {e}")
    config_dict = cfg.model_dump(mode="json")

    if section not in config_dict or not isinstance(config_dict[section], dict):
        raise click.ClickException(f"Seção '{section}' não encontrada")
    if key not in config_dict[section]:
        raise click.ClickException(f"Chave '{key}' não encontrada na seção '{section}'")

    current = config_dict[section][key]
    try:
        if isinstance(current, bool):
            value = value.lower() in ('true', '1', 'yes')
        elif isinstance(current, int):
            value = int(value)
        elif isinstance(current, float):
            value = float(value)
        elif isinstance(current, list):
            value = [int(v) for v in value.split(",")]
    except ValueError:
        raise click.ClickException("Tipo de valor inválido")

    config_dict[section][key] = value
    try:
        manager.save(Config(**config_dict))
    except ValueError as e:
        raise click.ClickException(f"Valor rejeitado: {e}")
    console.print(f"Atualizado: {section}.{key} = {value}")


@config_group.command()
@click.option('--config', default='config.yaml', show_default=True, help='Arquivo a criar')
def init(config):
    """Cria um arquivo de configuração com os valores padrão"""
    config = Path(config)
    if config.exists():
        raise click.ClickException(f"Arquivo de configuração já existe: {config}")

    config.parent.mkdir(parents=True, exist_ok=True)
    ConfigManager(config).save(Config())
    console.print(f"Arquivo de configuração criado: {config}")
