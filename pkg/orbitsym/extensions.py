"""
Shared Extensions
Process-wide logging setup, error reporting and seeded random streams
"""
import logging
import zlib

import numpy as np

from orbitsym.config import Config

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_configured = False


def configure_logging(level=None):
    """Configure root logging once per process"""
    global _configured
    level = (level or Config.LOG_LEVEL).upper()
    if not _configured:
        logging.basicConfig(level=level, format=LOG_FORMAT)
        _configured = True
    logging.getLogger().setLevel(level)


def init_error_reporting(dsn=None):
    """Enable sentry reporting when a DSN is configured"""
    dsn = dsn if dsn is not None else Config.SENTRY_DSN
    if not dsn:
        return False
    import sentry_sdk

    sentry_sdk.init(dsn=dsn, traces_sample_rate=0.0)
    logging.getLogger(__name__).info("error reporting enabled")
    return True


class SeedStreams:
    """
    Named random sub-streams derived from one root seed.
    Streams are independent of the order in which they are requested.
    """

    def __init__(self, root_seed):
        self.root_seed = int(root_seed)

    def seed_sequence(self, name, index=None):
        key = [zlib.crc32(name.encode("utf-8"))]
        if index is not None:
            key.append(int(index))
        return np.random.SeedSequence(self.root_seed, spawn_key=tuple(key))

    def generator(self, name, index=None):
        return np.random.default_rng(self.seed_sequence(name, index))

    def seed(self, name, index=None):
        """Integer seed for components that take a plain seed"""
        return int(self.seed_sequence(name, index).generate_state(1, dtype=np.uint32)[0])
