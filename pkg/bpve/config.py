"""Configuration module for the bpve engines and command-line runner."""
import os

from .errors import ConfigurationError


class Config:
    """Base configuration."""

    # Logging
    LOG_LEVEL = os.environ.get('BPVE_LOG_LEVEL', 'INFO')
    LOG_FORMAT = os.environ.get('BPVE_LOG_FORMAT', 'console')

    # Generating-function arithmetic
    TRUNCATION_ORDER = int(os.environ.get('BPVE_TRUNCATION_ORDER', '256'))

    # Exact engine
    HORIZON_CAP = int(os.environ.get('BPVE_HORIZON_CAP', str(10**6)))
    SEGMENT_CACHE_SIZE = int(os.environ.get('BPVE_SEGMENT_CACHE_SIZE', '512'))

    # Monte Carlo
    POPULATION_CAP = int(os.environ.get('BPVE_POPULATION_CAP', str(10**6)))
    COMPOUND_THRESHOLD = int(os.environ.get('BPVE_COMPOUND_THRESHOLD', str(10**4)))
    BATCH_SIZE = int(os.environ.get('BPVE_BATCH_SIZE', '5000'))
    DEFAULT_WORKERS = int(os.environ.get('BPVE_WORKERS', '1'))

    # Where reports go when --out is not given
    OUTPUT_ROOT = os.environ.get('BPVE_OUTPUT_ROOT', 'reports')


class DevelopmentConfig(Config):
    """Development configuration."""
    LOG_LEVEL = os.environ.get('BPVE_LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration."""
    LOG_LEVEL = os.environ.get('BPVE_LOG_LEVEL', 'INFO')
    LOG_FORMAT = os.environ.get('BPVE_LOG_FORMAT', 'json')

    def __init__(self):
        # Long sweeps must write somewhere explicit
        self.OUTPUT_ROOT = os.environ.get('BPVE_OUTPUT_ROOT') or None
        if not self.OUTPUT_ROOT:
            raise ConfigurationError("BPVE_OUTPUT_ROOT environment variable must be set in production")


class TestingConfig(Config):
    """Testing configuration."""

    # Small batches keep test runs quick
    BATCH_SIZE = 2000
    DEFAULT_WORKERS = 1


config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config
}


def get_config() -> Config:
    """Settings for the environment named by ``BPVE_ENV``.

    Raises:
        ConfigurationError: If the selected environment is missing a required variable
    """
    env = os.environ.get('BPVE_ENV', 'default')
    return config.get(env, config['default'])()
