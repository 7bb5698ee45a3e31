import numpy as np
import pytest
from hypothesis import settings

from hierbeam.codebook import CodebookTree
from hierbeam.fixtures import reference_codebook, reference_traffic, reference_tree

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def fixture_tree():
    return reference_tree()


@pytest.fixture
def fixture_codebook():
    return reference_codebook()


@pytest.fixture
def fixture_traffic():
    return reference_traffic()


@pytest.fixture
def line2():
    return CodebookTree.line(2)


@pytest.fixture
def fork():
    """Root 1 with children 2 and 3."""
    return CodebookTree.from_edges([(1, 2), (1, 3)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import SUMMARY
    if SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in SUMMARY:
            terminalreporter.write_line(line)
