"""Training protocol: Adam with early stopping, two-stage main/interaction
fitting, interaction-pair selection, intercept centering, and B-fold
ensembling over seeded train/validation splits.
"""

from __future__ import annotations

import copy
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .binning import CATEGORICAL, BinSpec, fit_bins, fit_levels
from .data import SplitIndices, SurvivalDataset, split
from .embedding import EmbeddingTable
from .model import (
    DnamiteModel,
    EncodedBatch,
    ShapeNet,
    TrainingDiverged,
    batch_loss,
    encode_columns,
    loss_and_gradients,
)
from .survstats import IpcwWeights, censor_curve, ipcw_weights

log = logging.getLogger(__name__)

# rng stream tags, mixed with the run seed
_INIT_STREAM = 1
_SHUFFLE_STREAM = 2
_PAIR_INIT_STREAM = 3


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one fit; defaults follow the documented protocol."""

    learning_rate: float = 5e-4
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 5
    val_fraction: float = 0.2
    n_pairs: int = 0
    pair_list: tuple[tuple[int, int], ...] | None = None
    ensemble_b: int = 5
    seed: int = 0
    gamma: float = 1.0
    width: int = 8
    dim: int = 32
    n_times: int = 32
    max_bins: int = 32
    hidden_dim: int = 32
    g_floor: float = 0.05
    nam_mode: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning_rate, batch_size, max_epochs must be positive")
        if not 1 <= self.patience <= self.max_epochs:
            raise ValueError("patience must lie in 1..max_epochs")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.n_pairs < 0 or self.ensemble_b < 1:
            raise ValueError("n_pairs must be >= 0 and ensemble_b >= 1")
        if self.gamma < 0 or self.width < 0:
            raise ValueError("gamma and width must be >= 0")
        if min(self.dim, self.n_times, self.hidden_dim) < 1 or self.max_bins < 2:
            raise ValueError("dim, n_times, hidden_dim >= 1 and max_bins >= 2 required")

    def to_file(self, path):
        """Flat key=value dump; round-trips through :meth:`from_file`."""
        with open(path, "w", encoding="utf-8") as fh:
            for f in fields(self):
                v = getattr(self, f.name)
                if f.name == "pair_list":
                    v = "none" if v is None else ",".join(f"{a}:{b}" for a, b in v)
                fh.write(f"{f.name} = {v}\n")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        raw = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"bad config line: {line!r}")
                key, val = (s.strip() for s in line.split("=", 1))
                raw[key] = val
        kwargs = {}
        by_name = {f.name: f for f in fields(cls)}
        for key, val in raw.items():
            if key not in by_name:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _parse_config_value(key, val)
        return cls(**kwargs)


def _parse_config_value(key: str, val: str):
    if key == "pair_list":
        return None if val.lower() == "none" else parse_pair_list(val)
    if key == "nam_mode":
        return val.lower() in ("1", "true", "yes")
    if key in ("learning_rate", "val_fraction", "gamma", "g_floor"):
        return float(val)
    return int(val)


def parse_pair_list(text: str) -> tuple[tuple[int, int], ...]:
    pairs = []
    for chunk in text.split(","):
        a, _, b = chunk.partition(":")
        pairs.append((int(a), int(b)))
    return tuple(pairs)


class Adam:
    """Standard Adam with bias-corrected first/second moment estimates."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def fit_bin_specs(ds: SurvivalDataset, max_bins: int) -> tuple[BinSpec, ...]:
    specs = []
    for kind, col in zip(ds.feature_kinds, ds.columns):
        specs.append(fit_levels(col) if kind == CATEGORICAL else fit_bins(col, max_bins))
    return tuple(specs)


def eval_time_grid(time, event, n_times: int) -> np.ndarray:
    """Evaluation times at quantiles i/(K+1) of observed event times.

    Duplicate quantiles collapse, so the grid may be shorter than K.
    """
    et = np.asarray(time, dtype=float)[np.asarray(event, dtype=bool)]
    if et.size == 0:
        raise ValueError("no observed events to place evaluation times")
    qs = np.arange(1, n_times + 1) / (n_times + 1)
    ts = np.unique(np.quantile(et, qs, method="linear"))
    ts = ts[ts > 0]
    if ts.size == 0:
        raise ValueError("all candidate evaluation times are nonpositive")
    return ts


def init_model(
    ds: SurvivalDataset,
    bin_specs: tuple[BinSpec, ...],
    eval_times: np.ndarray,
    censor,
    config: TrainConfig,
    seed: int,
) -> DnamiteModel:
    rng = np.random.default_rng([seed, _INIT_STREAM])
    k = len(eval_times)
    in_dim = 1 if config.nam_mode else config.dim
    tables, nets = [], []
    for spec in bin_specs:
        if config.nam_mode:
            tables.append(None)
        else:
            tables.append(
                EmbeddingTable.init(rng, spec.n_bins, config.dim, config.gamma, config.width)
            )
        nets.append(ShapeNet.init(rng, in_dim, config.hidden_dim, k))
    return DnamiteModel(
        feature_names=ds.feature_names,
        bin_specs=bin_specs,
        eval_times=eval_times,
        censor=censor,
        gamma=config.gamma,
        width=config.width,
        dim=config.dim,
        nam_mode=config.nam_mode,
        main_tables=tables,
        main_nets=nets,
    )


def _optimize(
    model: DnamiteModel,
    scope: str,
    enc_train: EncodedBatch,
    w_train: IpcwWeights,
    enc_val: EncodedBatch,
    w_val: IpcwWeights,
    config: TrainConfig,
    seed: int,
    base_train: np.ndarray | None = None,
    base_val: np.ndarray | None = None,
):
    """Mini-batch Adam with early stopping; reverts to the best epoch."""
    named = model.parameter_arrays(scope)
    names = [n for n, _ in named]
    params = [a for _, a in named]
    adam = Adam(params, config.learning_rate)
    rng = np.random.default_rng([seed, _SHUFFLE_STREAM])
    n = enc_train.n
    best_val = np.inf
    best = model.snapshot(scope)
    stale = 0
    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        epochs_run = epoch
        perm = rng.permutation(n)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            try:
                _, grads = loss_and_gradients(
                    model,
                    enc_train.take(idx),
                    w_train.take(idx),
                    scope=scope,
                    base_logits=None if base_train is None else base_train[idx],
                )
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"epoch {epoch}, batch {b}: {exc}") from None
            adam.step(params, [grads[name] for name in names])
        val = batch_loss(model, enc_val, w_val, base_logits=base_val)
        if val < best_val:
            best_val = val
            best = model.snapshot(scope)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                log.info("early stop at epoch %d (best val %.6g)", epoch, best_val)
                break
    model.restore(best, scope)
    model.fit_epochs = epochs_run
    model.best_val_loss = best_val
    return model


def _mains_logits(model: DnamiteModel, enc: EncodedBatch) -> np.ndarray:
    logits = np.tile(model.intercept, (enc.n, 1))
    for j in range(model.n_features):
        logits += model.main_contribution(j, enc)
    return logits


def fit_main_effects(
    ds: SurvivalDataset,
    split_idx: SplitIndices,
    config: TrainConfig,
    bin_specs: tuple[BinSpec, ...] | None = None,
    eval_times: np.ndarray | None = None,
    seed: int | None = None,
) -> DnamiteModel:
    """Stage-1 fit of the per-feature shape functions.

    Bin specs and evaluation times are fitted on the full dataset; the
    censoring curve on the training partition only.
    """
    seed = config.seed if seed is None else seed
    if bin_specs is None:
        bin_specs = fit_bin_specs(ds, config.max_bins)
    if eval_times is None:
        eval_times = eval_time_grid(ds.time, ds.event, config.n_times)
    tr, va = split_idx.train, split_idx.validation
    ghat = censor_curve(ds.time[tr], ds.event[tr])
    model = init_model(ds, bin_specs, eval_times, ghat, config, seed)
    enc = encode_columns(bin_specs, ds.columns)
    w_tr = ipcw_weights(ds.time[tr], ds.event[tr], ghat, eval_times, floor=config.g_floor)
    w_va = ipcw_weights(ds.time[va], ds.event[va], ghat, eval_times, floor=config.g_floor)
    if w_tr.n_clamped or w_va.n_clamped:
        log.warning(
            "censoring survival clamped at %g for %d loss terms",
            config.g_floor,
            w_tr.n_clamped + w_va.n_clamped,
        )
    return _optimize(model, "mains", enc.take(tr), w_tr, enc.take(va), w_va, config, seed)


def rank_pairs(ranked, k: int) -> list[tuple[int, int]]:
    """First k pairs enumerated over a growing prefix of ranked features.

    Growing the prefix by one feature pairs it with every earlier feature,
    so the first pairs involve only the strongest features; tuples keep
    rank order (stronger feature first).
    """
    ranked = list(ranked)
    pairs: list[tuple[int, int]] = []
    for m in range(1, len(ranked)):
        for i in range(m):
            pairs.append((int(ranked[i]), int(ranked[m])))
        if len(pairs) >= k:
            break
    return pairs[:k]


def select_pairs(model: DnamiteModel, ds: SurvivalDataset, k: int) -> list[tuple[int, int]]:
    """Pick k feature pairs by ranking main effects on across-time mean
    importance and enumerating over the top-ranked features.
    """
    from .interpret import importance_matrix

    p = model.n_features
    if k < 0 or k > p * (p - 1) // 2:
        raise ValueError(f"k must lie in 0..{p * (p - 1) // 2}")
    if k == 0:
        return []
    tmp = copy.deepcopy(model)
    center_model(tmp, ds)
    mains, _ = importance_matrix(tmp, ds)
    ranked = np.argsort(-mains.mean(axis=1), kind="stable")
    return rank_pairs(ranked, k)


def fit_interactions(
    model: DnamiteModel,
    pairs: list[tuple[int, int]],
    ds: SurvivalDataset,
    split_idx: SplitIndices,
    config: TrainConfig,
    seed: int | None = None,
) -> DnamiteModel:
    """Stage-2 fit: freeze mains, warm-start pair embeddings, train pairs.

    Main-effect parameters are untouched (bit-identical before/after).
    """
    if not pairs:
        return model
    seed = config.seed if seed is None else seed
    p = model.n_features
    for j, l in pairs:
        if j == l or not (0 <= j < p and 0 <= l < p):
            raise ValueError(f"invalid feature pair ({j}, {l})")
    rng = np.random.default_rng([seed, _PAIR_INIT_STREAM])
    k = model.n_times
    in_dim = 2 if model.nam_mode else 2 * config.dim
    enc = encode_columns(model.bin_specs, ds.columns)
    tr, va = split_idx.train, split_idx.validation
    # frozen mains contribute a fixed logit offset throughout stage 2
    base_tr = _mains_logits(model, enc.take(tr))
    base_va = _mains_logits(model, enc.take(va))
    model.pair_list = [(int(j), int(l)) for j, l in pairs]
    model.pair_tables = []
    model.pair_nets = []
    model.pair_offsets = []
    for j, l in model.pair_list:
        if model.nam_mode:
            model.pair_tables.append(None)
        else:
            model.pair_tables.append(
                (model.main_tables[j].copy(), model.main_tables[l].copy())
            )
        model.pair_nets.append(ShapeNet.init(rng, in_dim, config.hidden_dim, k))
        model.pair_offsets.append(np.zeros(k))
    ghat = model.censor
    w_tr = ipcw_weights(ds.time[tr], ds.event[tr], ghat, model.eval_times, floor=config.g_floor)
    w_va = ipcw_weights(ds.time[va], ds.event[va], ghat, model.eval_times, floor=config.g_floor)
    return _optimize(
        model,
        "pairs",
        enc.take(tr),
        w_tr,
        enc.take(va),
        w_va,
        config,
        seed,
        base_train=base_tr,
        base_val=base_va,
    )


def center_model(model: DnamiteModel, train_data) -> DnamiteModel:
    """Zero each shape function's training-set mean, accumulating the
    pre-centering means into the intercept; predictions are unchanged.

    Also records the training bin occupancy used for data-free importance
    reporting.  Idempotent.
    """
    enc = model.encode(train_data)
    n = enc.n
    for j in range(model.n_features):
        mean = model.main_contribution(j, enc).mean(axis=0)
        model.main_offsets[j] = model.main_offsets[j] + mean
        model.intercept = model.intercept + mean
    for i in range(len(model.pair_list)):
        mean = model.pair_contribution(i, enc).mean(axis=0)
        model.pair_offsets[i] = model.pair_offsets[i] + mean
        model.intercept = model.intercept + mean
    counts = []
    for j, spec in enumerate(model.bin_specs):
        counts.append(np.bincount(enc.bins[:, j], minlength=spec.n_bins + 1))
    pair_counts = []
    for j, l in model.pair_list:
        grid = np.zeros(
            (model.bin_specs[j].n_bins + 1, model.bin_specs[l].n_bins + 1), dtype=np.int64
        )
        np.add.at(grid, (enc.bins[:, j], enc.bins[:, l]), 1)
        pair_counts.append(grid)
    model.train_bin_counts = counts
    model.train_pair_counts = pair_counts
    model.centered = True
    return model


@dataclass
class EnsembleModel:
    """B independently fitted models sharing bin specs and eval times."""

    members: list[DnamiteModel]

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble needs at least one member")

    @property
    def eval_times(self) -> np.ndarray:
        return self.members[0].eval_times

    @property
    def bin_specs(self):
        return self.members[0].bin_specs

    @property
    def feature_names(self):
        return self.members[0].feature_names

    @property
    def n_features(self) -> int:
        return self.members[0].n_features

    @property
    def n_times(self) -> int:
        return self.members[0].n_times

    @property
    def nam_mode(self) -> bool:
        return self.members[0].nam_mode

    def encode(self, data) -> EncodedBatch:
        return self.members[0].encode(data)

    def predict_cif(self, data) -> np.ndarray:
        enc = self.encode(data)
        acc = self.members[0].predict_cif(enc)
        for m in self.members[1:]:
            acc = acc + m.predict_cif(enc)
        return acc / len(self.members)


def fit_ensemble(ds: SurvivalDataset, config: TrainConfig) -> EnsembleModel:
    """Full protocol: B seed-offset runs of split, stage-1, pair selection,
    stage-2, and centering; member b uses seed config.seed + b.

    Member fits are independent; DNAMITE_THREADS > 1 runs them in a thread
    pool (results are deterministic either way).
    """
    bin_specs = fit_bin_specs(ds, config.max_bins)
    eval_times = eval_time_grid(ds.time, ds.event, config.n_times)

    def fit_member(b: int) -> DnamiteModel:
        seed = config.seed + b
        sp = split(ds, config.val_fraction, seed)
        model = fit_main_effects(
            ds, sp, config, bin_specs=bin_specs, eval_times=eval_times, seed=seed
        )
        if config.pair_list is not None:
            pairs = [tuple(p) for p in config.pair_list]
        elif config.n_pairs > 0:
            pairs = select_pairs(model, ds, config.n_pairs)
        else:
            pairs = []
        if pairs:
            model = fit_interactions(model, pairs, ds, sp, config, seed=seed)
        center_model(model, ds.subset(sp.train))
        log.info("member %d fitted (%d pairs)", b, len(pairs))
        return model

    threads = int(os.environ.get("DNAMITE_THREADS", "1"))
    if threads > 1 and config.ensemble_b > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            members = list(pool.map(fit_member, range(config.ensemble_b)))
    else:
        members = [fit_member(b) for b in range(config.ensemble_b)]
    return EnsembleModel(members=members)
