from __future__ import annotations

from pathlib import Path

import pytest

import semchain as sc

FIXTURES = Path(__file__).parent / "fixtures"
TOY = FIXTURES / "toy"
GOLDEN = FIXTURES / "golden"


@pytest.fixture(scope="session")
def toy_dir() -> Path:
    return TOY


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def toy_tables():
    return sc.load_tables(TOY / "sources")


@pytest.fixture(scope="session")
def toy_golds():
    return sc.load_gold_models(TOY / "gold")


@pytest.fixture(scope="session")
def toy_ontology():
    return sc.parse_ontology((TOY / "ontology.json").read_text(encoding="utf-8"))


@pytest.fixture
def toy_config(tmp_path):
    def factory(**overrides):
        params = {
            "sources_dir": TOY / "sources",
            "ontology_path": TOY / "ontology.json",
            "gold_dir": TOY / "gold",
            "out_dir": tmp_path / "run",
        }
        params.update(overrides)
        return sc.ExperimentConfig(**params)

    return factory
