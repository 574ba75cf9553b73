import pytest
from hypothesis import HealthCheck, settings

from lsmjoin.lsm import StorageConfig

settings.register_profile(
    "repo", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.load_profile("repo")


@pytest.fixture
def tiny():
    """Small blocks and buffer so a few hundred writes build several levels."""
    return StorageConfig(block_size=256, write_buffer_bytes=2048, size_ratio=3, bloom_bits_per_key=10)


@pytest.fixture
def small():
    return StorageConfig(block_size=4096, write_buffer_bytes=32 * 1024, size_ratio=5, bloom_bits_per_key=10)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
