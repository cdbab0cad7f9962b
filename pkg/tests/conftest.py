import pytest

from eas import fixtures
from eas.dataset import load_manifest
from eas.model import load_model


@pytest.fixture(scope="session")
def tiny():
    """(config, echo weights, vocab) for the tiny preset."""
    cfg = fixtures.make_config("tiny")
    return cfg, fixtures.echo_weights(cfg), fixtures.echo_vocab()


@pytest.fixture(scope="session")
def tiny_examples(tiny):
    cfg, _, _ = tiny
    return [fixtures.make_echo_example(cfg, seed=0, index=i) for i in range(12)]


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """A generated tiny fixture directory (model + 12-example dataset)."""
    out = tmp_path_factory.mktemp("fixture")
    fixtures.write_fixtures(out, "tiny", n_examples=12, seed=0, scheme="echo")
    return out


@pytest.fixture(scope="session")
def loaded_fixture(fixture_dir):
    cfg, weights, vocab = load_model(fixture_dir / "model.json")
    dataset = load_manifest(fixture_dir / "manifest.jsonl")
    return cfg, weights, vocab, dataset
