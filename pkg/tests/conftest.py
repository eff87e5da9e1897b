from importlib.resources import files

import pytest

from qtrsim import model


@pytest.fixture(scope="session")
def table1_text() -> str:
    return files("qtrsim.data").joinpath("table1.params").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def table1(table1_text) -> model.SystemParams:
    return model.parse_params(table1_text)


@pytest.fixture(scope="session")
def table1_small(table1) -> model.SystemParams:
    """Table-1 physics at reduced truncation for fast eigensolves."""
    return model.with_levels(table1, 4, 3)
