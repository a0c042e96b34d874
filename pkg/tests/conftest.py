import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpus_util import generate_ratings_corpus  # noqa: E402


@pytest.fixture(scope="session")
def small_ratings_file(tmp_path_factory):
    """A compact ratings corpus for fast dataset-mode tests."""
    path = tmp_path_factory.mktemp("ratings") / "small.dat"
    return generate_ratings_corpus(
        path, num_users=60, num_items=50, min_activity=20, max_activity=40, seed=7
    )
