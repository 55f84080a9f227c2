import numpy as np
import pytest

from diffsep import engine as eg
from diffsep.losses import LossWeights
from diffsep.windows import generate_synthetic_dataset

# Small geometry shared by the heavier fixtures: 4 channels, 96 samples,
# windows of 32 with stride 16 -> 5 stacks, 16-sample overlaps.
SMALL = dict(channels=4, length=96, window=32, stride=16, stacks=5, sample_rate=128.0)


def small_config(**over) -> eg.TrainConfig:
    base = dict(
        T=60, beta_start=1e-4, beta_end=0.05,
        window=SMALL["window"], stride=SMALL["stride"],
        weights=LossWeights(1.0, 0.1, 0.1, 0.5), r=30.0, m=0.5,
        learning_rate=1e-3, batch_size=16, total_steps=40, pretrain_steps=200,
        seed=0, width_config=(8, 16, 24), subject_width=8, token_dim=16,
        n_heads=4, time_dim=16, embed_dim=32, pretrain_lr=2e-3,
        checkpoint_interval=0, metrics_flush=200,
    )
    base.update(over)
    return eg.TrainConfig(**base)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic_dataset(
        n_subjects=3, n_classes=4, trials_per_cell=8,
        channels=SMALL["channels"], length=SMALL["length"],
        sample_rate=SMALL["sample_rate"], snr=1.0, seed=42)


def numeric_grad(f, arrays: dict, name: str, flat_idx: int, h: float = 1e-5) -> float:
    """Central finite difference of scalar f(arrays) in one coordinate."""
    plus = {k: v.astype(np.float64).copy() for k, v in arrays.items()}
    plus[name].flat[flat_idx] += h
    minus = {k: v.astype(np.float64).copy() for k, v in arrays.items()}
    minus[name].flat[flat_idx] -= h
    return (f(plus) - f(minus)) / (2 * h)


def assert_grads_close(analytic: dict, f, arrays: dict, rng: np.random.Generator,
                       n_coords: int = 20, rtol: float = 1e-3, atol: float = 1e-7):
    """Compare analytic grads against central differences on random coords."""
    names = sorted(analytic)
    for _ in range(n_coords):
        name = names[rng.integers(len(names))]
        idx = int(rng.integers(arrays[name].size))
        fd = numeric_grad(f, arrays, name, idx)
        an = analytic[name].flat[idx]
        assert abs(an - fd) <= atol + rtol * max(abs(an), abs(fd)), (
            f"grad mismatch at {name}[{idx}]: analytic {an}, fd {fd}")
