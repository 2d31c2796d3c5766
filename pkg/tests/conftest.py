import json
import os

import pytest

from lifetaint import default_config, load_app, load_models

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CORPUS = os.path.join(ROOT, "corpus")


def corpus_path(name):
    return os.path.join(CORPUS, name + ".app")


def corpus_app(name):
    return load_app(corpus_path(name))


def all_corpus_paths():
    return sorted(
        os.path.join(CORPUS, f) for f in os.listdir(CORPUS) if f.endswith(".app")
    )


@pytest.fixture(scope="session")
def models():
    return load_models()


@pytest.fixture(scope="session")
def config():
    return default_config()


@pytest.fixture()
def tmp_app(tmp_path):
    """Write an app dict to disk and return its path."""

    def write(doc, name="app.app"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return write
