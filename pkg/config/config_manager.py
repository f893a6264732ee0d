import logging
from pathlib import Path
from typing import Optional

import yaml

from config.config_schema import Config

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).parent / "config.yaml"


class ConfigManager:
    def __init__(self, config_path: Optional[str] = None):
        if config_path is None:
            config_path = DEFAULT_CONFIG_PATH
        self.config_path = Path(config_path)
        self._config: Optional[Config] = None

    def load(self) -> Config:
        if not self.config_path.exists():
            raise FileNotFoundError(f"Arquivo de configuração não encontrado: {self.config_path}")

        with open(self.config_path, 'r', encoding='utf-8') as f:
            config_data = yaml.safe_load(f) or {}

        self._config = Config(**config_data)
        logger.debug(f"Configuração carregada de {self.config_path}")
        return self._config

    def get(self) -> Config:
        if self._config is None:
            self.load()
        return self._config

    def save(self, config: Config):
        config_dict = config.model_dump(mode="json")
        with open(self.config_path, 'w', encoding='utf-8') as f:
            yaml.dump(config_dict, f, default_flow_style=False, sort_keys=False, allow_unicode=True)
        self._config = config

    def reload(self) -> Config:
        self._config = None
        return self.load()


def get_config(config_path: Optional[str] = None) -> Config:
    return ConfigManager(config_path).get()
