import pytest

from src.gf import FieldSpec, make_rng


@pytest.fixture
def gf2():
    return FieldSpec.preset(2)


@pytest.fixture
def gf3():
    return FieldSpec.preset(3)


@pytest.fixture
def gf256():
    return FieldSpec.preset(2, 8)


@pytest.fixture
def rng():
    return make_rng(1234)
