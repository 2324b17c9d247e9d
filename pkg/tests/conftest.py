import numpy as np
import pytest

from dnamite.binning import BinSpec
from dnamite.embedding import EmbeddingTable
from dnamite.model import DnamiteModel, ShapeNet
from dnamite.survstats import censor_curve


def random_model(
    seed: int = 0,
    p: int = 4,
    k: int = 8,
    d: int = 8,
    hidden: int = 16,
    n_bins: int = 6,
    pairs=((0, 2),),
    nam_mode: bool = False,
):
    """Small random model plus matching random survival labels."""
    rng = np.random.default_rng(seed)
    specs = tuple(
        BinSpec(
            kind="continuous",
            n_bins=n_bins,
            cut_points=tuple(np.sort(rng.uniform(0.0, 1.0, n_bins - 1))),
            vmin=0.0,
            vmax=1.0,
        )
        for _ in range(p)
    )
    in_dim = 1 if nam_mode else d
    tables = [
        None if nam_mode else EmbeddingTable.init(rng, n_bins, d, 1.0, 3) for _ in range(p)
    ]
    nets = [ShapeNet.init(rng, in_dim, hidden, k) for _ in range(p)]
    eval_times = np.sort(rng.uniform(0.1, 2.0, k))
    z = rng.uniform(0.05, 2.2, 200)
    event = rng.uniform(size=200) < 0.7
    model = DnamiteModel(
        feature_names=tuple(f"x{j}" for j in range(p)),
        bin_specs=specs,
        eval_times=eval_times,
        censor=censor_curve(z, event),
        gamma=1.0,
        width=3,
        dim=d,
        nam_mode=nam_mode,
        main_tables=tables,
        main_nets=nets,
    )
    for j, l in pairs:
        model.pair_list.append((j, l))
        model.pair_tables.append(
            None if nam_mode else (tables[j].copy(), tables[l].copy())
        )
        model.pair_nets.append(ShapeNet.init(rng, 2 if nam_mode else 2 * d, hidden, k))
        model.pair_offsets.append(np.zeros(k))
    return model, z, event


def random_rows(rng: np.random.Generator, n: int, p: int):
    """Raw feature rows in [0, 1] with a sprinkle of missing values."""
    x = rng.uniform(size=(n, p)).astype(object)
    mask = rng.uniform(size=(n, p)) < 0.05
    x[mask] = None
    return [list(row) for row in x]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
