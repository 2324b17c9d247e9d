"""Versioned, lossless model serialization.

Models are stored as a single JSON document with full-precision decimal
floats (shortest round-trip encoding), so save -> load -> predict is
bit-exact and save(load(file)) reproduces the file byte for byte.
"""

from __future__ import annotations

import json

import numpy as np

from .binning import CATEGORICAL, CONTINUOUS, BinSpec
from .embedding import EmbeddingTable
from .model import DnamiteModel, ShapeNet
from .survstats import StepCurve
from .train import EnsembleModel

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _floats(arr) -> list:
    return np.asarray(arr, dtype=float).tolist()


def _net_doc(net: ShapeNet) -> dict:
    return {
        "weights": [_floats(w) for w in net.weights],
        "biases": [_floats(b) for b in net.biases],
    }


def _bin_doc(name: str, spec: BinSpec) -> dict:
    return {
        "name": name,
        "kind": spec.kind,
        "n_bins": spec.n_bins,
        "cut_points": list(spec.cut_points),
        "levels": list(spec.levels),
        "vmin": spec.vmin,
        "vmax": spec.vmax,
    }


def _member_doc(model: DnamiteModel) -> dict:
    mains = []
    for j in range(model.n_features):
        counts = None
        if model.train_bin_counts is not None:
            counts = [int(c) for c in model.train_bin_counts[j]]
        mains.append(
            {
                "table": None if model.nam_mode else _floats(model.main_tables[j].weights),
                "net": _net_doc(model.main_nets[j]),
                "bin_counts": counts,
            }
        )
    pair_members = []
    for i in range(len(model.pair_list)):
        counts = None
        if model.train_pair_counts is not None:
            counts = [[int(c) for c in row] for row in model.train_pair_counts[i]]
        if model.nam_mode:
            ta = tb = None
        else:
            ta = _floats(model.pair_tables[i][0].weights)
            tb = _floats(model.pair_tables[i][1].weights)
        pair_members.append(
            {
                "table_a": ta,
                "table_b": tb,
                "net": _net_doc(model.pair_nets[i]),
                "bin_counts": counts,
            }
        )
    return {
        "censor_curve": {
            "times": _floats(model.censor.times),
            "values": _floats(model.censor.values),
        },
        "mains": mains,
        "pairs": {"list": [list(p) for p in model.pair_list], "members": pair_members},
        "intercept": _floats(model.intercept),
        "offsets": {
            "mains": [_floats(o) for o in model.main_offsets],
            "pairs": [_floats(o) for o in model.pair_offsets],
        },
    }


def _model_doc(model) -> dict:
    if isinstance(model, EnsembleModel):
        ref = model.members[0]
        kind = "ensemble"
    else:
        ref = model
        kind = "model"
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "hyperparameters": {
            "gamma": float(ref.gamma),
            "width": int(ref.width),
            "dim": int(ref.dim),
            "n_times": int(ref.n_times),
            "nam_mode": bool(ref.nam_mode),
        },
        "bins": [
            _bin_doc(name, spec) for name, spec in zip(ref.feature_names, ref.bin_specs)
        ],
        "eval_times": _floats(ref.eval_times),
    }
    if kind == "model":
        doc.update(_member_doc(ref))
        doc["ensemble"] = None
    else:
        doc.update(
            {"censor_curve": None, "mains": None, "pairs": None, "intercept": None, "offsets": None}
        )
        doc["ensemble"] = {"members": [_member_doc(m) for m in model.members]}
    return doc


def save_model(model, path):
    """Serialize a centered model or ensemble to ``path``."""
    members = model.members if isinstance(model, EnsembleModel) else [model]
    for m in members:
        if not m.centered:
            raise ValueError("refusing to save an uncentered model")
    doc = _model_doc(model)
    text = json.dumps(doc, indent=1, allow_nan=False) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _expect(cond: bool, message: str):
    if not cond:
        raise ModelFormatError(message)


def _load_array(obj, block: str, ndim: int, dtype=float) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=dtype)
    except (TypeError, ValueError):
        raise ModelFormatError(f"block {block!r}: malformed or truncated array") from None
    _expect(arr.ndim == ndim, f"block {block!r}: expected {ndim}-D array")
    _expect(bool(np.isfinite(arr).all()) if dtype is float else True, f"block {block!r}: non-finite entries")
    return arr


def _load_net(doc, block: str, in_dim: int, out_dim: int) -> ShapeNet:
    _expect(isinstance(doc, dict) and "weights" in doc and "biases" in doc, f"block {block!r}: missing net arrays")
    ws = [_load_array(w, f"{block}.weights[{i}]", 2) for i, w in enumerate(doc["weights"])]
    bs = [_load_array(b, f"{block}.biases[{i}]", 1) for i, b in enumerate(doc["biases"])]
    try:
        net = ShapeNet(ws, bs)
    except ValueError as exc:
        raise ModelFormatError(f"block {block!r}: {exc}") from None
    _expect(net.in_dim == in_dim, f"block {block!r}: input dimension mismatch")
    _expect(net.out_dim == out_dim, f"block {block!r}: output dimension mismatch")
    return net


def _load_bin_spec(doc) -> tuple[str, BinSpec]:
    name = doc.get("name")
    try:
        spec = BinSpec(
            kind=doc.get("kind"),
            n_bins=doc.get("n_bins"),
            cut_points=tuple(doc.get("cut_points") or ()),
            levels=tuple(doc.get("levels") or ()),
            vmin=doc.get("vmin"),
            vmax=doc.get("vmax"),
        )
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"block 'bins' ({name}): {exc}") from None
    return name, spec


def _load_member(doc, names, specs, eval_times, hp) -> DnamiteModel:
    k = len(eval_times)
    dim = hp["dim"]
    nam = hp["nam_mode"]
    cc = doc.get("censor_curve")
    _expect(isinstance(cc, dict), "block 'censor_curve': missing")
    try:
        censor = StepCurve(
            times=_load_array(cc.get("times"), "censor_curve.times", 1),
            values=_load_array(cc.get("values"), "censor_curve.values", 1),
        )
    except ValueError as exc:
        raise ModelFormatError(f"block 'censor_curve': {exc}") from None

    mains_doc = doc.get("mains")
    _expect(isinstance(mains_doc, list) and len(mains_doc) == len(specs), "block 'mains': wrong feature count")
    tables, nets, counts = [], [], []
    have_counts = True
    for j, mdoc in enumerate(mains_doc):
        if nam:
            tables.append(None)
        else:
            t = _load_array(mdoc.get("table"), f"mains[{j}].table", 2)
            _expect(
                t.shape == (specs[j].n_bins + 1, dim),
                f"block 'mains[{j}].table': expected shape ({specs[j].n_bins + 1}, {dim})",
            )
            tables.append(EmbeddingTable(weights=t, gamma=hp["gamma"], width=hp["width"]))
        nets.append(_load_net(mdoc.get("net"), f"mains[{j}].net", 1 if nam else dim, k))
        if mdoc.get("bin_counts") is None:
            have_counts = False
        else:
            counts.append(_load_array(mdoc["bin_counts"], f"mains[{j}].bin_counts", 1, dtype=np.int64))

    pairs_doc = doc.get("pairs") or {"list": [], "members": []}
    pair_list = [tuple(int(v) for v in p) for p in pairs_doc.get("list", [])]
    pm = pairs_doc.get("members", [])
    _expect(len(pm) == len(pair_list), "block 'pairs': list/members length mismatch")
    pair_tables, pair_nets, pair_counts = [], [], []
    have_pair_counts = True
    for i, ((a, b), pdoc) in enumerate(zip(pair_list, pm)):
        _expect(0 <= a < len(specs) and 0 <= b < len(specs) and a != b, f"block 'pairs[{i}]': bad feature indices")
        if nam:
            pair_tables.append(None)
        else:
            ta = _load_array(pdoc.get("table_a"), f"pairs[{i}].table_a", 2)
            tb = _load_array(pdoc.get("table_b"), f"pairs[{i}].table_b", 2)
            _expect(ta.shape == (specs[a].n_bins + 1, dim), f"block 'pairs[{i}].table_a': bad shape")
            _expect(tb.shape == (specs[b].n_bins + 1, dim), f"block 'pairs[{i}].table_b': bad shape")
            pair_tables.append(
                (
                    EmbeddingTable(weights=ta, gamma=hp["gamma"], width=hp["width"]),
                    EmbeddingTable(weights=tb, gamma=hp["gamma"], width=hp["width"]),
                )
            )
        pair_nets.append(_load_net(pdoc.get("net"), f"pairs[{i}].net", 2 if nam else 2 * dim, k))
        if pdoc.get("bin_counts") is None:
            have_pair_counts = False
        else:
            pair_counts.append(_load_array(pdoc["bin_counts"], f"pairs[{i}].bin_counts", 2, dtype=np.int64))

    offsets_doc = doc.get("offsets")
    _expect(isinstance(offsets_doc, dict), "block 'offsets': missing")
    main_offsets = [
        _load_array(o, f"offsets.mains[{j}]", 1) for j, o in enumerate(offsets_doc.get("mains", []))
    ]
    pair_offsets = [
        _load_array(o, f"offsets.pairs[{i}]", 1) for i, o in enumerate(offsets_doc.get("pairs", []))
    ]
    _expect(len(main_offsets) == len(specs), "block 'offsets.mains': wrong count")
    _expect(len(pair_offsets) == len(pair_list), "block 'offsets.pairs': wrong count")
    for j, o in enumerate(main_offsets):
        _expect(o.shape == (k,), f"block 'offsets.mains[{j}]': expected length {k}")
    for i, o in enumerate(pair_offsets):
        _expect(o.shape == (k,), f"block 'offsets.pairs[{i}]': expected length {k}")
    intercept = _load_array(doc.get("intercept"), "intercept", 1)
    _expect(intercept.shape == (k,), f"block 'intercept': expected length {k}")

    try:
        model = DnamiteModel(
            feature_names=tuple(names),
            bin_specs=tuple(specs),
            eval_times=eval_times,
            censor=censor,
            gamma=hp["gamma"],
            width=hp["width"],
            dim=dim,
            nam_mode=nam,
            main_tables=tables,
            main_nets=nets,
            pair_list=pair_list,
            pair_tables=pair_tables,
            pair_nets=pair_nets,
            intercept=intercept,
            main_offsets=main_offsets,
            pair_offsets=pair_offsets,
            centered=True,
            train_bin_counts=counts if have_counts else None,
            train_pair_counts=pair_counts if have_pair_counts else None,
        )
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None
    return model


def load_model(path):
    """Reconstruct a model or ensemble, validating every type invariant."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"unparseable model file: {exc}") from None
    _expect(isinstance(doc, dict), "model file is not a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unknown format version {version!r} (supported: {FORMAT_VERSION})")
    hp = doc.get("hyperparameters")
    _expect(isinstance(hp, dict), "block 'hyperparameters': missing")
    for key in ("gamma", "width", "dim", "n_times", "nam_mode"):
        _expect(key in hp, f"block 'hyperparameters': missing key {key!r}")
    bins_doc = doc.get("bins")
    _expect(isinstance(bins_doc, list) and bins_doc, "block 'bins': missing or empty")
    names, specs = zip(*[_load_bin_spec(b) for b in bins_doc])
    eval_times = _load_array(doc.get("eval_times"), "eval_times", 1)
    _expect(eval_times.size == hp["n_times"], "block 'eval_times': length disagrees with hyperparameters")

    kind = doc.get("kind")
    if kind == "model":
        return _load_member(doc, names, specs, eval_times, hp)
    if kind == "ensemble":
        ens = doc.get("ensemble")
        _expect(isinstance(ens, dict) and isinstance(ens.get("members"), list), "block 'ensemble': missing members")
        members = [_load_member(m, names, specs, eval_times, hp) for m in ens["members"]]
        _expect(len(members) >= 1, "block 'ensemble': empty")
        return EnsembleModel(members=members)
    raise ModelFormatError(f"unknown model kind {kind!r}")
