import pytest

from src.tools.laws import ModelParams, OffspringLaw
from src.utils.rng import Stream
from src.utils.settings import reset_settings


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """Fresh settings per test, artifacts under tmp_path, console quiet."""
    monkeypatch.setenv("STRMLAB_OUTPUT_DIR", str(tmp_path / "output"))
    monkeypatch.setenv("STRMLAB_QUIET", "true")
    monkeypatch.delenv("STRMLAB_THREADS", raising=False)
    monkeypatch.delenv("STRMLAB_POPULATION_CAP", raising=False)
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def stream():
    return Stream(12345)


@pytest.fixture
def critical_2d():
    """Poisson(4) on the 2x2 grid: E[R] = 1."""
    return ModelParams(d=2, B=2, offspring=OffspringLaw.poisson(4.0))


@pytest.fixture
def subcritical_3d():
    """Poisson(4) on the 2x2x2 grid: E[R] = 1/2."""
    return ModelParams(d=3, B=2, offspring=OffspringLaw.poisson(4.0))
