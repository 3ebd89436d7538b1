import numpy as np
import pytest

from src.errors import ConfigError
from src.verification.synthetic import SyntheticSpec, gen_synthetic


def test_zero_noise_gives_constant_rows():
    w = gen_synthetic(SyntheticSpec(8, 5, epsilon=0.0)).data
    assert (w == w[:, :1]).all()


def test_same_seed_same_tensor():
    first = gen_synthetic(SyntheticSpec(4, 4, seed=11))
    second = gen_synthetic(SyntheticSpec(4, 4, seed=11))
    assert first.same_values(second)
    assert not first.same_values(gen_synthetic(SyntheticSpec(4, 4, seed=12)))


def test_row_means_follow_sigma():
    mean_spreads, noise_spreads = [], []
    for seed in range(200):
        w = gen_synthetic(SyntheticSpec(64, 64, sigma=1.0, epsilon=0.05, seed=seed)).data.astype(np.float64)
        mean_spreads.append(w.mean(axis=1).std(ddof=1))
        noise_spreads.append((w - w.mean(axis=1, keepdims=True)).std())
    mean_spreads = np.asarray(mean_spreads)
    assert abs(mean_spreads.mean() - 1.0) < 0.05
    assert np.mean((mean_spreads >= 0.7) & (mean_spreads <= 1.3)) >= 0.95
    assert abs(float(np.mean(noise_spreads)) - 0.05) < 0.005


def test_shared_generator_advances():
    rng = np.random.default_rng(0)
    spec = SyntheticSpec(3, 3, seed=None)
    assert not gen_synthetic(spec, rng).same_values(gen_synthetic(spec, rng))


@pytest.mark.parametrize("kwargs", [{"rows": 0, "cols": 3}, {"rows": 3, "cols": 3, "sigma": -1.0},
                                    {"rows": 3, "cols": 3, "epsilon": -0.1}])
def test_invalid_parameters(kwargs):
    with pytest.raises(ConfigError):
        SyntheticSpec(**kwargs)
