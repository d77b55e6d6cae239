"""Environment-selected settings and logging setup tests."""
import logging

import pytest

from bpve import configure_logging
from bpve.config import Config, DevelopmentConfig, ProductionConfig, get_config
from bpve.errors import ConfigurationError


@pytest.fixture
def root_logger():
    """Restore the root logger after a test reconfigures it."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield root
    root.handlers = handlers
    root.setLevel(level)


def test_get_config_returns_settings_instance(monkeypatch):
    """Test the selected environment is instantiated, with unknown names falling back to the base."""
    monkeypatch.setenv('BPVE_ENV', 'development')
    assert isinstance(get_config(), DevelopmentConfig)

    monkeypatch.setenv('BPVE_ENV', 'staging')
    assert type(get_config()) is Config


def test_production_requires_output_root(monkeypatch):
    """Test production settings fail without an explicit output root."""
    monkeypatch.setenv('BPVE_ENV', 'production')
    monkeypatch.delenv('BPVE_OUTPUT_ROOT', raising=False)
    with pytest.raises(ConfigurationError):
        get_config()

    monkeypatch.setenv('BPVE_OUTPUT_ROOT', '/data/reports')
    settings = get_config()
    assert isinstance(settings, ProductionConfig)
    assert settings.OUTPUT_ROOT == '/data/reports'


def test_settings_carry_only_used_switches():
    """Test no environment defines flags that nothing reads."""
    for name in ('DEBUG', 'TESTING'):
        assert not hasattr(Config, name)
        assert not hasattr(DevelopmentConfig, name)


def test_log_level_follows_settings(root_logger):
    """Test configure_logging applies the level and format of the given settings."""
    settings = DevelopmentConfig()
    configure_logging(settings)

    assert root_logger.level == getattr(logging, settings.LOG_LEVEL.upper())
    assert len(root_logger.handlers) == 1
