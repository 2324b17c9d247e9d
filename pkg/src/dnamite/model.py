"""Additive model core: per-feature and per-pair shape networks mapping
smoothed bin embeddings to K-dimensional logit contributions, summed with
an intercept and passed through a sigmoid to yield CIF estimates.

Shape functions of a fitted model depend on the input only through the bin
index, so batched evaluation computes each feature's network once per bin
and gathers rows per sample; no per-feature-per-sample inner loop exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as sigmoid

from .binning import CONTINUOUS, BinSpec, apply_bins_array
from .data import SurvivalDataset
from .embedding import EmbeddingTable
from .survstats import IpcwWeights, StepCurve

HIDDEN_LAYERS = 2


class ShapeNet:
    """Small MLP with rectifier hidden activations and linear output."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases):
            raise ValueError("weights and biases must pair up")
        for i in range(len(weights) - 1):
            if weights[i].shape[1] != weights[i + 1].shape[0]:
                raise ValueError("consecutive layer dimensions must chain")
        for w, b in zip(weights, biases):
            if b.shape != (w.shape[1],):
                raise ValueError("bias shape must match layer output")
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, hidden_dim: int, out_dim: int) -> "ShapeNet":
        dims = [in_dim] + [hidden_dim] * HIDDEN_LAYERS + [out_dim]
        weights, biases = [], []
        for a, b in zip(dims[:-1], dims[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b)))
            biases.append(np.zeros(b))
        return cls(weights, biases)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, x: np.ndarray):
        """Returns (output, cache); cache feeds :meth:`backward`."""
        act = x
        cache = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = act @ w + b
            cache.append((act, z))
            act = z if i == last else np.maximum(z, 0.0)
        return act, cache

    def backward(self, cache, dout: np.ndarray, need_dx: bool = False):
        """Backpropagate dL/doutput; returns (dweights, dbiases, dx)."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        d = dout
        dx = None
        for i in range(len(self.weights) - 1, -1, -1):
            act_prev, _ = cache[i]
            grads_w[i] = act_prev.T @ d
            grads_b[i] = d.sum(axis=0)
            if i > 0:
                d = (d @ self.weights[i].T) * (cache[i - 1][1] > 0.0)
            elif need_dx:
                dx = d @ self.weights[0].T
        return grads_w, grads_b, dx

    def copy(self) -> "ShapeNet":
        return ShapeNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class Contribution:
    """One shape function's additive K-vector output for one sample."""

    source: int | tuple[int, int]
    logits: np.ndarray


@dataclass(frozen=True)
class EncodedBatch:
    """Bin indices plus min-max scaled raw values for a batch of rows."""

    bins: np.ndarray    # (n, p) int64
    scaled: np.ndarray  # (n, p) float64, in [0, 1], missing -> 0.5

    @property
    def n(self) -> int:
        return self.bins.shape[0]

    def take(self, idx) -> "EncodedBatch":
        return EncodedBatch(bins=self.bins[idx], scaled=self.scaled[idx])


def _scale_column(column: np.ndarray, bins: np.ndarray, spec: BinSpec) -> np.ndarray:
    if spec.kind == CONTINUOUS:
        lo, hi = spec.vmin, spec.vmax
        if lo is None or hi is None or hi <= lo:
            return np.full(bins.shape[0], 0.5)
        v = np.asarray(column, dtype=float)
        out = np.clip((v - lo) / (hi - lo), 0.0, 1.0)
        return np.where(np.isfinite(v), out, 0.5)
    if spec.n_bins <= 1:
        return np.full(bins.shape[0], 0.5)
    return np.where(bins > 0, (bins - 1) / (spec.n_bins - 1), 0.5)


def encode_columns(bin_specs, columns) -> EncodedBatch:
    """Bin (and min-max scale) raw feature columns against fitted specs."""
    n = len(columns[0]) if columns else 0
    p = len(bin_specs)
    bins = np.zeros((n, p), dtype=np.int64)
    scaled = np.zeros((n, p))
    for j, (spec, col) in enumerate(zip(bin_specs, columns)):
        col = np.asarray(col, dtype=float if spec.kind == CONTINUOUS else object)
        bins[:, j] = apply_bins_array(col, spec)
        scaled[:, j] = _scale_column(col, bins[:, j], spec)
    return EncodedBatch(bins=bins, scaled=scaled)


@dataclass
class DnamiteModel:
    """A fitted (or fitting) additive CIF model.

    ``main_tables``/``pair_tables`` are None in nam_mode, where each shape
    network consumes the min-max scaled raw value directly instead of a
    smoothed bin embedding.
    """

    feature_names: tuple[str, ...]
    bin_specs: tuple[BinSpec, ...]
    eval_times: np.ndarray
    censor: StepCurve
    gamma: float
    width: int
    dim: int
    nam_mode: bool
    main_tables: list[EmbeddingTable | None]
    main_nets: list[ShapeNet]
    pair_list: list[tuple[int, int]] = field(default_factory=list)
    pair_tables: list[tuple[EmbeddingTable, EmbeddingTable] | None] = field(default_factory=list)
    pair_nets: list[ShapeNet] = field(default_factory=list)
    intercept: np.ndarray = None
    main_offsets: list[np.ndarray] = None
    pair_offsets: list[np.ndarray] = field(default_factory=list)
    centered: bool = False
    train_bin_counts: list[np.ndarray] | None = None
    train_pair_counts: list[np.ndarray] | None = None

    def __post_init__(self):
        self.eval_times = np.asarray(self.eval_times, dtype=float)
        if self.eval_times.size == 0 or np.any(self.eval_times <= 0):
            raise ValueError("eval_times must be positive")
        if np.any(np.diff(self.eval_times) <= 0):
            raise ValueError("eval_times must be strictly increasing")
        if self.intercept is None:
            self.intercept = np.zeros(self.n_times)
        if self.main_offsets is None:
            self.main_offsets = [np.zeros(self.n_times) for _ in self.main_nets]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_times(self) -> int:
        return self.eval_times.shape[0]

    # ---- encoding ----

    def encode(self, data) -> EncodedBatch:
        if isinstance(data, EncodedBatch):
            return data
        if isinstance(data, SurvivalDataset):
            if data.feature_names != self.feature_names:
                raise ValueError("dataset feature names do not match the model")
            return encode_columns(self.bin_specs, data.columns)
        return self._encode_rows(data)

    def _encode_rows(self, rows) -> EncodedBatch:
        rows = list(rows)
        p = self.n_features
        cols = []
        for j, spec in enumerate(self.bin_specs):
            vals = [row[j] for row in rows]
            if len(vals) != len(rows) or any(len(r) != p for r in rows):
                raise ValueError(f"rows must have exactly {p} feature slots")
            cols.append(np.array(vals, dtype=float if spec.kind == CONTINUOUS else object))
        return encode_columns(self.bin_specs, cols)

    # ---- per-source contributions ----

    def main_bin_outputs(self, j: int) -> np.ndarray:
        """Network output per bin (n_bins+1, K); embedding mode only."""
        out, _ = self.main_nets[j].forward(self.main_tables[j].smoothed())
        return out

    def main_contribution(self, j: int, enc: EncodedBatch) -> np.ndarray:
        if self.nam_mode:
            out, _ = self.main_nets[j].forward(enc.scaled[:, j : j + 1])
            return out - self.main_offsets[j]
        return self.main_bin_outputs(j)[enc.bins[:, j]] - self.main_offsets[j]

    def pair_input(self, i: int, enc: EncodedBatch) -> np.ndarray:
        j, l = self.pair_list[i]
        if self.nam_mode:
            return enc.scaled[:, [j, l]]
        ta, tb = self.pair_tables[i]
        return np.hstack(
            [ta.smoothed()[enc.bins[:, j]], tb.smoothed()[enc.bins[:, l]]]
        )

    def pair_contribution(self, i: int, enc: EncodedBatch) -> np.ndarray:
        out, _ = self.pair_nets[i].forward(self.pair_input(i, enc))
        return out - self.pair_offsets[i]

    # ---- prediction ----

    def predict_logits(self, data, with_contributions: bool = False):
        enc = self.encode(data)
        logits = np.tile(self.intercept, (enc.n, 1))
        contribs = [] if with_contributions else None
        for j in range(self.n_features):
            c = self.main_contribution(j, enc)
            logits += c
            if with_contributions:
                contribs.append((j, c))
        for i, pair in enumerate(self.pair_list):
            c = self.pair_contribution(i, enc)
            logits += c
            if with_contributions:
                contribs.append((pair, c))
        return logits, contribs

    def predict_cif(self, data) -> np.ndarray:
        """CIF estimates, shape (n, K); entries strictly inside (0, 1)."""
        logits, _ = self.predict_logits(data)
        return sigmoid(logits)

    def forward(self, row):
        """Single-row forward pass returning per-source contributions."""
        logits, contribs = self.predict_logits([row], with_contributions=True)
        out = [Contribution(source=s, logits=c[0]) for s, c in contribs]
        return out, sigmoid(logits[0])

    # ---- parameters ----

    def parameter_arrays(self, scope: str = "all") -> list[tuple[str, np.ndarray]]:
        """Named trainable arrays, in a stable order.

        scope selects 'mains', 'pairs', or 'all'; the intercept is not a
        trained parameter (it is set by centering).
        """
        if scope not in ("all", "mains", "pairs"):
            raise ValueError(f"unknown scope {scope!r}")
        out = []
        if scope in ("all", "mains"):
            for j in range(self.n_features):
                if not self.nam_mode:
                    out.append((f"main_table[{j}]", self.main_tables[j].weights))
                net = self.main_nets[j]
                for l in range(len(net.weights)):
                    out.append((f"main_net[{j}].w[{l}]", net.weights[l]))
                    out.append((f"main_net[{j}].b[{l}]", net.biases[l]))
        if scope in ("all", "pairs"):
            for i in range(len(self.pair_list)):
                if not self.nam_mode:
                    ta, tb = self.pair_tables[i]
                    out.append((f"pair_table[{i}].a", ta.weights))
                    out.append((f"pair_table[{i}].b", tb.weights))
                net = self.pair_nets[i]
                for l in range(len(net.weights)):
                    out.append((f"pair_net[{i}].w[{l}]", net.weights[l]))
                    out.append((f"pair_net[{i}].b[{l}]", net.biases[l]))
        return out

    def snapshot(self, scope: str = "all") -> list[np.ndarray]:
        return [a.copy() for _, a in self.parameter_arrays(scope)]

    def restore(self, saved: list[np.ndarray], scope: str = "all"):
        for (_, a), s in zip(self.parameter_arrays(scope), saved):
            a[...] = s


class TrainingDiverged(RuntimeError):
    pass


def loss_and_gradients(
    model: DnamiteModel,
    enc: EncodedBatch,
    weights: IpcwWeights,
    scope: str = "all",
    base_logits: np.ndarray | None = None,
):
    """Mean IPCW loss over the batch and its exact analytic gradients.

    Returns (loss, grads) where grads maps parameter names (as emitted by
    ``parameter_arrays('all')``) to arrays; parameters outside ``scope``
    get exact zeros.  ``base_logits`` supplies the frozen intercept + main
    contribution sum during interaction training.
    """
    n = enc.n
    k = model.n_times
    train_mains = scope in ("all", "mains")
    train_pairs = scope in ("all", "pairs")

    main_caches = [None] * model.n_features
    pair_caches = [None] * len(model.pair_list)
    pair_inputs = [None] * len(model.pair_list)

    if base_logits is not None and not train_mains:
        logits = base_logits.copy()
    else:
        logits = np.tile(model.intercept, (n, 1))
        for j in range(model.n_features):
            if model.nam_mode:
                out, cache = model.main_nets[j].forward(enc.scaled[:, j : j + 1])
            else:
                out, cache = model.main_nets[j].forward(model.main_tables[j].smoothed())
                out = out[enc.bins[:, j]]
            if train_mains:
                main_caches[j] = cache
            logits += out - model.main_offsets[j]
    for i in range(len(model.pair_list)):
        x = model.pair_input(i, enc)
        out, cache = model.pair_nets[i].forward(x)
        if train_pairs:
            pair_caches[i] = cache
            pair_inputs[i] = x
        logits += out - model.pair_offsets[i]

    p = sigmoid(logits)
    loss = float((weights.surv * p**2 + weights.observed * (1.0 - p) ** 2).sum() / n)
    if not np.isfinite(loss):
        raise TrainingDiverged("non-finite loss")

    # d loss / d logit, including the sigmoid derivative p (1 - p)
    dlogits = (
        (2.0 * weights.surv * p - 2.0 * weights.observed * (1.0 - p)) * p * (1.0 - p) / n
    )

    grads: dict[str, np.ndarray] = {}
    for name, arr in model.parameter_arrays("all"):
        grads[name] = np.zeros_like(arr)

    if train_mains:
        for j in range(model.n_features):
            if model.nam_mode:
                gw, gb, _ = model.main_nets[j].backward(main_caches[j], dlogits)
            else:
                n_rows = model.main_tables[j].n_bins + 1
                dout = np.zeros((n_rows, k))
                np.add.at(dout, enc.bins[:, j], dlogits)
                gw, gb, dx = model.main_nets[j].backward(
                    main_caches[j], dout, need_dx=True
                )
                smoother = model.main_tables[j].smoother()
                grads[f"main_table[{j}]"][...] = smoother.T @ dx
            for l in range(len(gw)):
                grads[f"main_net[{j}].w[{l}]"][...] = gw[l]
                grads[f"main_net[{j}].b[{l}]"][...] = gb[l]

    if train_pairs:
        for i, (j, l_feat) in enumerate(model.pair_list):
            need_dx = not model.nam_mode
            gw, gb, dx = model.pair_nets[i].backward(
                pair_caches[i], dlogits, need_dx=need_dx
            )
            if need_dx:
                ta, tb = model.pair_tables[i]
                d = ta.dim
                dea = np.zeros((ta.n_bins + 1, d))
                deb = np.zeros((tb.n_bins + 1, d))
                np.add.at(dea, enc.bins[:, j], dx[:, :d])
                np.add.at(deb, enc.bins[:, l_feat], dx[:, d:])
                grads[f"pair_table[{i}].a"][...] = ta.smoother().T @ dea
                grads[f"pair_table[{i}].b"][...] = tb.smoother().T @ deb
            for l in range(len(gw)):
                grads[f"pair_net[{i}].w[{l}]"][...] = gw[l]
                grads[f"pair_net[{i}].b[{l}]"][...] = gb[l]

    return loss, grads


def batch_loss(
    model: DnamiteModel,
    enc: EncodedBatch,
    weights: IpcwWeights,
    base_logits: np.ndarray | None = None,
) -> float:
    """Loss only (no gradients); used for validation scoring."""
    if base_logits is not None:
        logits = base_logits.copy()
        for i in range(len(model.pair_list)):
            out, _ = model.pair_nets[i].forward(model.pair_input(i, enc))
            logits += out - model.pair_offsets[i]
    else:
        logits, _ = model.predict_logits(enc)
    p = sigmoid(logits)
    loss = float((weights.surv * p**2 + weights.observed * (1.0 - p) ** 2).sum() / enc.n)
    if not np.isfinite(loss):
        raise TrainingDiverged("non-finite loss")
    return loss
