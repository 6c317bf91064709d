from __future__ import annotations

import numpy as np
import pytest

from corrbandit.core.environment.builders import build_lb_cov
from corrbandit.core.environment.covariance import CovarianceModel
from corrbandit.core.study.config import StudyConfig
from corrbandit.infra.config.config_manager import deep_merge, get_default_config_path, load_yaml


class ScriptedSampler:
    """
    Deterministic stand-in for Environment.

    pull(pair, count) returns the two columns of the pair's Cholesky factor
    scaled by sqrt(count), padded with zero rows.  The second moments of every
    batch are then exactly count * marginal(i, j), so the per-pair estimator
    reproduces the true correlations and MSEs.
    """

    def __init__(self, model: CovarianceModel) -> None:
        self.model = model
        self.seed = None
        self.calls: list[tuple[tuple[int, int], int]] = []

    def pull(self, pair: tuple[int, int], count: int) -> np.ndarray:
        assert count >= 2, "scripted batches need at least two rows"
        i, j = pair
        L = np.linalg.cholesky(self.model.marginal(i, j))
        out = np.zeros((count, 2))
        out[0] = np.sqrt(count) * L[:, 0]
        out[1] = np.sqrt(count) * L[:, 1]
        self.calls.append(((i, j), count))
        return out


@pytest.fixture
def scripted():
    return ScriptedSampler


@pytest.fixture
def lb5():
    return build_lb_cov(5, 0.5)


@pytest.fixture(autouse=True)
def app_home(tmp_path, monkeypatch):
    """Keep log files out of the real home directory."""
    home = tmp_path / "home"
    monkeypatch.setenv("CORRBANDIT_HOME", str(home))
    return home


@pytest.fixture
def make_config():
    def _make(**overrides) -> StudyConfig:
        raw = deep_merge(load_yaml(get_default_config_path()), overrides)
        return StudyConfig.from_mapping(raw)

    return _make
