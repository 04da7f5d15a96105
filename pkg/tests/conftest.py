import os
import sys

import pytest

# Ensure project root is on sys.path so that `import src...` works when running tests directly.
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from src.services.models import BipartiteConfig, SynthConfig  # noqa: E402
from src.services.repositories import CorpusRepository  # noqa: E402
from src.services.synth import generate_cdrs  # noqa: E402


@pytest.fixture(scope="session")
def small_synth() -> SynthConfig:
    return SynthConfig(n_users=600, seed=11, bipartite=BipartiteConfig(n_b_users=400))


@pytest.fixture(scope="session")
def small_corpus(small_synth):
    return generate_cdrs(small_synth)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, small_corpus):
    out = tmp_path_factory.mktemp("corpus")
    CorpusRepository().write_corpus(small_corpus, out)
    return out


@pytest.fixture
def write_lines(tmp_path):
    """Write text lines to a file under tmp_path and return its path."""
    def _write(name: str, lines: list[str]):
        path = tmp_path / name
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
        return path
    return _write
