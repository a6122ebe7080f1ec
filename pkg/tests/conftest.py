import pytest

from scenetree import default_taxonomy


@pytest.fixture(scope="session")
def food_taxonomy():
    return default_taxonomy()
