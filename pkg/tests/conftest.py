import pytest

from bookcoref.formats import write_jsonl
from bookcoref.synthetic import make_reference_corpus


@pytest.fixture(scope="session")
def gold_corpus():
    """The calibrated three-book stand-in corpus (deterministic, seed 13)."""
    return make_reference_corpus()


@pytest.fixture(scope="session")
def gold_jsonl(gold_corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "gold.jsonl"
    write_jsonl(gold_corpus, str(path))
    return str(path)
