import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).parent))

from phashbench import corpus  # noqa: E402

FIXTURE_DIR = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def corpus_images():
    """The packaged 20-image photo corpus as (name, array) pairs."""
    return corpus.load_corpus(corpus.default_corpus_dir())


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURE_DIR
