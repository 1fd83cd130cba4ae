"""Histogram-based gradient-boosted regression trees with second-order objectives.

The engine trains on a :class:`~fairlend.tabular.BinnedMatrix` and predicts on
raw :class:`~fairlend.tabular.ApplicationTable` rows. Margins are log-odds of
the denial event; approval probability is ``1 - sigmoid(margin)``.

Determinism contract: training and prediction are bit-reproducible for fixed
inputs, including when histogram accumulation is spread across threads (each
feature's histogram is built independently and consumed in feature order).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from ._util import float_to_hex, hex_to_float, sigmoid
from .errors import (
    EmptyTrainingSet,
    InvalidConfig,
    ModelFormatError,
    MuOutOfRange,
    UnknownFeature,
)
from .tabular import ApplicationTable, BinnedMatrix

PROB_EPS = 1e-7
LABEL_CONVENTION = "margin is log-odds of denial"


@dataclass(frozen=True)
class BoostParams:
    """Engine hyperparameters (second-order boosting with L2 leaf penalty)."""

    n_rounds: int
    learning_rate: float = 0.3
    max_depth: int = 6
    min_child_weight: float = 1.0
    l2_reg: float = 1.0
    split_gain_floor: float = 0.0
    max_bins: int = 256

    def __post_init__(self):
        if self.n_rounds < 0:
            raise InvalidConfig("n_rounds must be nonnegative")
        if not (0.0 < self.learning_rate <= 1.0):
            raise InvalidConfig("learning_rate must be in (0, 1]")
        if self.max_depth < 1:
            raise InvalidConfig("max_depth must be at least 1")
        if self.min_child_weight < 0.0:
            raise InvalidConfig("min_child_weight must be nonnegative")
        if self.l2_reg < 0.0:
            raise InvalidConfig("l2_reg must be nonnegative")


@dataclass(frozen=True)
class FairObjectiveParams:
    """Weight on the term that decouples predictions from the group flag."""

    mu: float = 0.2

    def __post_init__(self):
        if not (0.0 <= self.mu < 1.0):
            raise MuOutOfRange(f"mu must be in [0, 1), got {self.mu}")


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

def logistic_objective(margins: np.ndarray, denial_labels: np.ndarray):
    """Gradient/hessian of cross-entropy between sigmoid(margin) and labels."""
    margins = np.asarray(margins, dtype=np.float64)
    d = np.asarray(denial_labels, dtype=np.float64)
    if margins.shape != d.shape:
        raise InvalidConfig("margins and labels must have equal length")
    p = np.clip(sigmoid(margins), PROB_EPS, 1.0 - PROB_EPS)
    return p - d, p * (1.0 - p)


def fair_logistic_objective(
    margins: np.ndarray,
    denial_labels: np.ndarray,
    group_flags: np.ndarray,
    mu: float,
):
    """Joint objective: prediction cross-entropy minus mu times the
    cross-entropy between predictions and the group flag.

    At mu = 0 the output is bit-identical to :func:`logistic_objective`.
    """
    if not (0.0 <= mu < 1.0):
        raise MuOutOfRange(f"mu must be in [0, 1), got {mu}")
    margins = np.asarray(margins, dtype=np.float64)
    d = np.asarray(denial_labels, dtype=np.float64)
    s = np.asarray(group_flags, dtype=np.float64)
    if not (margins.shape == d.shape == s.shape):
        raise InvalidConfig("margins, labels and group flags must have equal length")
    p = np.clip(sigmoid(margins), PROB_EPS, 1.0 - PROB_EPS)
    grad = (p - d) - mu * (p - s)
    hess = (1.0 - mu) * (p * (1.0 - p))
    return grad, hess


# ---------------------------------------------------------------------------
# Split finding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureHistogram:
    """Per-bin gradient/hessian sums for one feature at one node.

    The last slot of each array is the dedicated missing-value bin.
    """

    grad: np.ndarray
    hess: np.ndarray
    categorical: bool = False


@dataclass(frozen=True)
class SplitDecision:
    feature: int
    gain: float
    missing_left: bool
    threshold_bin: Optional[int] = None
    left_categories: Optional[tuple[int, ...]] = None


@dataclass(frozen=True)
class LeafDecision:
    weight: float


def _gain_term(G, H, lam):
    denom = H + lam
    return np.where(denom > 0.0, G * G / np.where(denom > 0.0, denom, 1.0), 0.0)


def leaf_weight(G: float, H: float, lam: float) -> float:
    denom = H + lam
    if denom <= 0.0:
        return 0.0
    return -G / denom


def find_best_split(
    histograms: Sequence[FeatureHistogram], params: BoostParams
) -> Union[SplitDecision, LeafDecision]:
    """Best split over all features/candidates, or a leaf when none qualifies.

    Gain for a candidate partition (L, R) of the node's mass:
    ``0.5 * (GL^2/(HL+lam) + GR^2/(HR+lam) - (GL+GR)^2/(HL+HR+lam))`` minus
    ``split_gain_floor``; both children must carry hessian mass of at least
    ``min_child_weight``. Missing values may be routed to either side; the
    better direction is kept. Candidate order (feature, then threshold or
    subset, then missing-left before missing-right) breaks exact ties.
    """
    lam = params.l2_reg
    mcw = params.min_child_weight
    floor = params.split_gain_floor

    tot_G = 0.0
    tot_H = 0.0
    for h in histograms:
        tot_G += float(h.grad.sum())
        tot_H += float(h.hess.sum())

    best: Optional[SplitDecision] = None

    for f, hist in enumerate(histograms):
        g, h = hist.grad, hist.hess
        fG = float(g.sum())
        fH = float(h.sum())
        g_miss = float(g[-1])
        h_miss = float(h[-1])
        parent_term = float(_gain_term(np.float64(fG), np.float64(fH), lam))

        if not hist.categorical:
            n_reg = g.shape[0] - 1
            if n_reg < 2:
                continue
            cG = np.cumsum(g[:-1])[:-1]
            cH = np.cumsum(h[:-1])[:-1]
            for missing_left in (True, False):
                GL = cG + (g_miss if missing_left else 0.0)
                HL = cH + (h_miss if missing_left else 0.0)
                GR = fG - GL
                HR = fH - HL
                ok = (HL >= mcw) & (HR >= mcw)
                if not ok.any():
                    continue
                gains = 0.5 * (_gain_term(GL, HL, lam) + _gain_term(GR, HR, lam) - parent_term)
                gains = gains - floor
                gains[~ok] = -np.inf
                t = int(np.argmax(gains))
                gain = float(gains[t])
                if gain > 0.0 and (best is None or gain > best.gain):
                    best = SplitDecision(
                        feature=f, gain=gain, missing_left=missing_left, threshold_bin=t
                    )
        else:
            n_cats = g.shape[0] - 1
            present = [
                c for c in range(n_cats) if h[c] > 0.0 or g[c] != 0.0
            ]
            if len(present) < 2 and not (present and (h_miss > 0.0 or g_miss != 0.0)):
                continue
            candidates: list[tuple[int, ...]] = [(c,) for c in present]
            if len(present) > 2:
                ratio = [float(g[c]) / (float(h[c]) + lam) for c in present]
                order = [c for _, c in sorted(zip(ratio, present))]
                for k in range(2, len(order)):
                    candidates.append(tuple(sorted(order[:k])))
            for subset in candidates:
                sG = float(g[list(subset)].sum())
                sH = float(h[list(subset)].sum())
                for missing_left in (True, False):
                    GL = sG + (g_miss if missing_left else 0.0)
                    HL = sH + (h_miss if missing_left else 0.0)
                    GR = fG - GL
                    HR = fH - HL
                    if HL < mcw or HR < mcw:
                        continue
                    gain = float(
                        0.5 * (_gain_term(np.float64(GL), np.float64(HL), lam)
                               + _gain_term(np.float64(GR), np.float64(HR), lam)
                               - parent_term)
                    ) - floor
                    if gain > 0.0 and (best is None or gain > best.gain):
                        best = SplitDecision(
                            feature=f,
                            gain=gain,
                            missing_left=missing_left,
                            left_categories=subset,
                        )

    if best is None:
        return LeafDecision(weight=leaf_weight(tot_G, tot_H, lam))
    return best


# ---------------------------------------------------------------------------
# Trees and ensembles
# ---------------------------------------------------------------------------

@dataclass
class TreeNode:
    """Either an internal split node or a leaf (``weight`` set).

    Numeric splits store the threshold in original feature units and send
    ``value <= threshold`` left. Categorical splits store the left-going
    category labels. Missing values follow ``missing_left``.
    """

    feature: Optional[str] = None
    threshold: Optional[float] = None
    category_subset: Optional[tuple[str, ...]] = None
    missing_left: bool = True
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    weight: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return self.weight is not None


@dataclass(frozen=True)
class BoostedEnsemble:
    """An ordered list of regression trees plus the base margin.

    ``predict_margin`` returns ``base_margin + learning_rate * sum(tree
    outputs)``; the denial probability is ``sigmoid(margin)``.
    """

    base_margin: float
    trees: tuple[TreeNode, ...]
    params: BoostParams
    feature_names: tuple[str, ...]
    feature_kinds: tuple[str, ...]
    label_convention: str = LABEL_CONVENTION


def _sum_grad_hess(grad, hess, idx):
    return float(grad[idx].sum()), float(hess[idx].sum())


def _node_histograms(binned, grad, hess, idx, pool) -> list[FeatureHistogram]:
    codes = binned.codes

    def one(f):
        length = binned.n_bins[f] + 1
        c = codes[f, idx]
        return FeatureHistogram(
            grad=np.bincount(c, weights=grad[idx], minlength=length),
            hess=np.bincount(c, weights=hess[idx], minlength=length),
            categorical=binned.kinds[f] == "categorical",
        )

    n_features = codes.shape[0]
    if pool is None:
        return [one(f) for f in range(n_features)]
    return list(pool.map(one, range(n_features)))


def _grow_tree(binned, grad, hess, params, pool):
    """Depth-first growth of one tree in bin space.

    Returns the root node (bin-space thresholds) and the per-row raw leaf
    weights for the training rows.
    """
    lam = params.l2_reg
    out = np.zeros(binned.n_rows, dtype=np.float64)

    def build(idx, depth):
        G, H = _sum_grad_hess(grad, hess, idx)
        if (
            depth >= params.max_depth
            or idx.size < 2
            or H < 2.0 * params.min_child_weight
        ):
            w = leaf_weight(G, H, lam)
            out[idx] = w
            return {"leaf": w}
        hists = _node_histograms(binned, grad, hess, idx, pool)
        dec = find_best_split(hists, params)
        if isinstance(dec, LeafDecision):
            out[idx] = dec.weight
            return {"leaf": dec.weight}
        f = dec.feature
        c = binned.codes[f, idx]
        missing = c == binned.missing_bin(f)
        if dec.threshold_bin is not None:
            go_left = (c <= dec.threshold_bin) & ~missing
        else:
            go_left = np.isin(c, np.asarray(dec.left_categories, dtype=c.dtype))
            go_left &= ~missing
        if dec.missing_left:
            go_left |= missing
        left = build(idx[go_left], depth + 1)
        right = build(idx[~go_left], depth + 1)
        return {
            "feature": f,
            "threshold_bin": dec.threshold_bin,
            "left_categories": dec.left_categories,
            "missing_left": dec.missing_left,
            "left": left,
            "right": right,
        }

    root = build(np.arange(binned.n_rows), 0)
    return root, out


def _to_tree_node(node, binned) -> TreeNode:
    if "leaf" in node:
        return TreeNode(weight=node["leaf"])
    f = node["feature"]
    name = binned.feature_names[f]
    threshold = None
    subset = None
    if node["threshold_bin"] is not None:
        threshold = float(binned.boundaries[name][node["threshold_bin"]])
    else:
        labels = binned.categories[name]
        subset = tuple(sorted(labels[c] for c in node["left_categories"]))
    return TreeNode(
        feature=name,
        threshold=threshold,
        category_subset=subset,
        missing_left=node["missing_left"],
        left=_to_tree_node(node["left"], binned),
        right=_to_tree_node(node["right"], binned),
    )


def _base_margin(rate: float) -> float:
    p = min(max(rate, PROB_EPS), 1.0 - PROB_EPS)
    return float(np.log(p / (1.0 - p)))


def train(
    binned: BinnedMatrix,
    denial_labels: np.ndarray,
    params: BoostParams,
    objective: str = "logistic",
    group_flags: Optional[np.ndarray] = None,
    fair_params: Optional[FairObjectiveParams] = None,
    n_threads: int = 1,
) -> BoostedEnsemble:
    """Train an ensemble on binned rows against binary denial labels.

    ``objective`` is ``"logistic"`` or ``"fair"``; the fair objective needs
    ``group_flags`` for the same rows and a :class:`FairObjectiveParams`.
    Degenerate labels (all one class) yield a zero-tree constant model.
    """
    d = np.asarray(denial_labels, dtype=np.uint8)
    if binned.n_rows == 0 or d.size == 0:
        raise EmptyTrainingSet("no training rows")
    if d.shape[0] != binned.n_rows:
        raise InvalidConfig("labels do not match binned row count")
    if objective == "fair":
        if group_flags is None:
            raise InvalidConfig("fair objective requires group_flags")
        if fair_params is None:
            raise InvalidConfig("fair objective requires FairObjectiveParams")
        s = np.asarray(group_flags, dtype=np.float64)
        if s.shape[0] != binned.n_rows:
            raise InvalidConfig("group_flags do not match binned row count")
    elif objective != "logistic":
        raise InvalidConfig(f"unknown objective {objective!r}")

    kinds = tuple(
        "categorical" if k == "categorical" else "numeric" for k in binned.kinds
    )
    rate = float(d.mean())
    base = _base_margin(rate)
    if rate == 0.0 or rate == 1.0:
        return BoostedEnsemble(
            base_margin=base,
            trees=(),
            params=params,
            feature_names=binned.feature_names,
            feature_kinds=kinds,
        )

    pool = ThreadPoolExecutor(max_workers=n_threads) if n_threads > 1 else None
    try:
        margins = np.full(binned.n_rows, base, dtype=np.float64)
        trees: list[TreeNode] = []
        for _ in range(params.n_rounds):
            if objective == "fair":
                grad, hess = fair_logistic_objective(margins, d, s, fair_params.mu)
            else:
                grad, hess = logistic_objective(margins, d)
            root, out = _grow_tree(binned, grad, hess, params, pool)
            margins += params.learning_rate * out
            trees.append(_to_tree_node(root, binned))
    finally:
        if pool is not None:
            pool.shutdown()

    return BoostedEnsemble(
        base_margin=base,
        trees=tuple(trees),
        params=params,
        feature_names=binned.feature_names,
        feature_kinds=kinds,
    )


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def _resolve_columns(ensemble, table: ApplicationTable, overrides=None):
    """Materialize the model's feature columns from a table, with overrides.

    Returns per-feature (kind, values) where categorical values are table
    codes, plus per-feature label->code maps for subset resolution.
    """
    overrides = overrides or {}
    cols = {}
    lookups = {}
    n = table.n_rows
    for name, kind in zip(ensemble.feature_names, ensemble.feature_kinds):
        if name in overrides:
            v = overrides[name]
            arr = np.full(n, v) if np.isscalar(v) else np.asarray(v)
            if kind == "numeric":
                cols[name] = ("numeric", arr.astype(np.float64))
            else:
                cols[name] = ("categorical", arr.astype(np.int64))
        elif name == "group" and "group" not in table.categorical_features:
            cols[name] = ("categorical", table.group.astype(np.int64))
        elif name in table.numeric_features:
            if kind != "numeric":
                raise UnknownFeature(f"feature {name!r} kind mismatch")
            cols[name] = ("numeric", table.numeric_features[name])
        elif name in table.categorical_features:
            cols[name] = ("categorical", table.categorical_features[name].astype(np.int64))
        else:
            raise UnknownFeature(f"table lacks feature {name!r}")
        if cols[name][0] == "categorical":
            if name == "group" and "group" not in table.categorical_features:
                lookups[name] = {"0": 0, "1": 1}
            else:
                labels = table.categories.get(name, ("0", "1"))
                lookups[name] = {lab: i for i, lab in enumerate(labels)}
    return cols, lookups


def _route_tree(node: TreeNode, cols, lookups, idx, out):
    if node.is_leaf:
        out[idx] += node.weight
        return
    kind, values = cols[node.feature]
    v = values[idx]
    if kind == "numeric":
        missing = np.isnan(v)
        go_left = np.zeros(v.shape, dtype=bool)
        fin = ~missing
        go_left[fin] = v[fin] <= node.threshold
        if node.missing_left:
            go_left |= missing
    else:
        table_codes = lookups[node.feature]
        wanted = [table_codes[lab] for lab in node.category_subset if lab in table_codes]
        go_left = np.isin(v, np.asarray(wanted, dtype=np.int64))
    _route_tree(node.left, cols, lookups, idx[go_left], out)
    _route_tree(node.right, cols, lookups, idx[~go_left], out)


def predict_margin(
    ensemble: BoostedEnsemble,
    table: ApplicationTable,
    row_ids: Optional[np.ndarray] = None,
    overrides: Optional[dict] = None,
) -> np.ndarray:
    """Denial-margin predictions for table rows (all rows by default)."""
    cols, lookups = _resolve_columns(ensemble, table, overrides)
    if row_ids is None:
        idx = np.arange(table.n_rows, dtype=np.int64)
    else:
        idx = np.asarray(row_ids, dtype=np.int64)
    out = np.zeros(table.n_rows, dtype=np.float64)
    for tree in ensemble.trees:
        _route_tree(tree, cols, lookups, idx, out)
    return ensemble.base_margin + ensemble.params.learning_rate * out[idx]


def predict_denial_prob(ensemble, table, row_ids=None, overrides=None) -> np.ndarray:
    return sigmoid(predict_margin(ensemble, table, row_ids, overrides))


def predict_approval_prob(ensemble, table, row_ids=None, overrides=None) -> np.ndarray:
    return 1.0 - predict_denial_prob(ensemble, table, row_ids, overrides)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

MODEL_MAGIC = "fairlend-model v1"


def _write_nodes(node: TreeNode, lines: list[str]):
    if node.is_leaf:
        lines.append(json.dumps({"leaf": float_to_hex(node.weight)}))
        return
    rec = {
        "feature": node.feature,
        "missing": "left" if node.missing_left else "right",
    }
    if node.threshold is not None:
        rec["thr"] = float_to_hex(node.threshold)
    else:
        rec["cats"] = list(node.category_subset)
    lines.append(json.dumps(rec, sort_keys=True))
    _write_nodes(node.left, lines)
    _write_nodes(node.right, lines)


def save_model(ensemble: BoostedEnsemble, path):
    p = ensemble.params
    lines = [
        MODEL_MAGIC,
        f"base_margin {float_to_hex(ensemble.base_margin)}",
        f"label_convention {ensemble.label_convention}",
        f"param n_rounds {p.n_rounds}",
        f"param learning_rate {float_to_hex(p.learning_rate)}",
        f"param max_depth {p.max_depth}",
        f"param min_child_weight {float_to_hex(p.min_child_weight)}",
        f"param l2_reg {float_to_hex(p.l2_reg)}",
        f"param split_gain_floor {float_to_hex(p.split_gain_floor)}",
        f"param max_bins {p.max_bins}",
    ]
    for name, kind in zip(ensemble.feature_names, ensemble.feature_kinds):
        lines.append(f"feature {kind} {json.dumps(name)}")
    for i, tree in enumerate(ensemble.trees):
        lines.append(f"tree {i}")
        _write_nodes(tree, lines)
        lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_nodes(lines, pos) -> tuple[TreeNode, int]:
    rec = json.loads(lines[pos])
    pos += 1
    if "leaf" in rec:
        return TreeNode(weight=hex_to_float(rec["leaf"])), pos
    left, pos = _read_nodes(lines, pos)
    right, pos = _read_nodes(lines, pos)
    return (
        TreeNode(
            feature=rec["feature"],
            threshold=hex_to_float(rec["thr"]) if "thr" in rec else None,
            category_subset=tuple(rec["cats"]) if "cats" in rec else None,
            missing_left=rec["missing"] == "left",
            left=left,
            right=right,
        ),
        pos,
    )


def load_model(path) -> BoostedEnsemble:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a {MODEL_MAGIC} file")
    base_margin = None
    label_convention = LABEL_CONVENTION
    raw_params: dict[str, str] = {}
    names: list[str] = []
    kinds: list[str] = []
    trees: list[TreeNode] = []
    pos = 1
    while pos < len(lines):
        line = lines[pos]
        if line.startswith("tree "):
            node, pos2 = _read_nodes(lines, pos + 1)
            if lines[pos2] != "end":
                raise ModelFormatError(f"{path}: tree not terminated with 'end'")
            trees.append(node)
            pos = pos2 + 1
            continue
        if line.startswith("base_margin "):
            base_margin = hex_to_float(line.split(" ", 1)[1])
        elif line.startswith("label_convention "):
            label_convention = line.split(" ", 1)[1]
        elif line.startswith("param "):
            _, key, val = line.split(" ", 2)
            raw_params[key] = val
        elif line.startswith("feature "):
            _, kind, name_json = line.split(" ", 2)
            kinds.append(kind)
            names.append(json.loads(name_json))
        elif line.strip():
            raise ModelFormatError(f"{path}: unrecognized line {line!r}")
        pos += 1
    if base_margin is None:
        raise ModelFormatError(f"{path}: missing base_margin")
    try:
        params = BoostParams(
            n_rounds=int(raw_params["n_rounds"]),
            learning_rate=hex_to_float(raw_params["learning_rate"]),
            max_depth=int(raw_params["max_depth"]),
            min_child_weight=hex_to_float(raw_params["min_child_weight"]),
            l2_reg=hex_to_float(raw_params["l2_reg"]),
            split_gain_floor=hex_to_float(raw_params["split_gain_floor"]),
            max_bins=int(raw_params["max_bins"]),
        )
    except KeyError as e:
        raise ModelFormatError(f"{path}: missing param {e}") from None
    return BoostedEnsemble(
        base_margin=base_margin,
        trees=tuple(trees),
        params=params,
        feature_names=tuple(names),
        feature_kinds=tuple(kinds),
        label_convention=label_convention,
    )


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamGrid:
    """Grid over (learning_rate, max_depth, min_child_weight); every round
    count up to ``max_rounds`` is evaluated via staged predictions."""

    learning_rates: tuple[float, ...] = (0.1, 0.2, 0.3)
    max_depths: tuple[int, ...] = (2, 4, 6, 8, 10)
    min_child_weights: tuple[float, ...] = (1.0, 5.0, 25.0, 125.0, 625.0)
    max_rounds: int = 500
    l2_reg: float = 1.0
    split_gain_floor: float = 0.0
    max_bins: int = 256


def default_param_grid() -> ParamGrid:
    """Default cross-validation grid (a zero learning rate trains nothing and
    is excluded)."""
    return ParamGrid()


@dataclass(frozen=True)
class CVResult:
    best_params: BoostParams
    best_mean_auc: float


def _route_bin_tree(node, binned, missing_bins, idx, out):
    if "leaf" in node:
        out[idx] += node["leaf"]
        return
    f = node["feature"]
    c = binned.codes[f, idx]
    missing = c == missing_bins[f]
    if node["threshold_bin"] is not None:
        go_left = (c <= node["threshold_bin"]) & ~missing
    else:
        go_left = np.isin(c, np.asarray(node["left_categories"], dtype=c.dtype))
        go_left &= ~missing
    if node["missing_left"]:
        go_left |= missing
    _route_bin_tree(node["left"], binned, missing_bins, idx[go_left], out)
    _route_bin_tree(node["right"], binned, missing_bins, idx[~go_left], out)


def cross_validate(
    binned: BinnedMatrix,
    denial_labels: np.ndarray,
    grid: ParamGrid,
    folds: int = 5,
    metric: str = "auc",
    seed: int = 0,
    n_threads: int = 1,
) -> CVResult:
    """Grid search by mean held-out-fold AUC.

    Folds partition the rows exhaustively and disjointly (seeded shuffle).
    For each (learning_rate, depth, min_child_weight) cell one max-length
    model is boosted per fold and the held-out AUC is recorded after every
    round, so the round count is searched at no extra training cost.
    Tie-break: fewer rounds, then smaller depth, then smaller learning rate,
    then smaller min_child_weight.
    """
    from .evaluation import auc as auc_metric

    if metric != "auc":
        raise InvalidConfig(f"unsupported CV metric {metric!r}")
    if not (grid.learning_rates and grid.max_depths and grid.min_child_weights):
        raise InvalidConfig("parameter grid is empty")
    if grid.max_rounds < 1:
        raise InvalidConfig("max_rounds must be positive")

    d = np.asarray(denial_labels, dtype=np.uint8)
    n = binned.n_rows
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    fold_ids = np.array_split(perm, folds)

    fold_data = []
    for held in fold_ids:
        mask = np.ones(n, dtype=bool)
        mask[held] = False
        tr_idx = np.flatnonzero(mask)
        d_tr, d_ho = d[tr_idx], d[held]
        if len(np.unique(d_tr)) < 2 or len(np.unique(d_ho)) < 2:
            raise InvalidConfig(
                "a CV fold contains a single label class; use fewer folds or more data"
            )
        fold_data.append((binned.subset(tr_idx), binned.subset(held), d_tr, d_ho))

    missing_bins = [binned.missing_bin(f) for f in range(len(binned.feature_names))]
    pool = ThreadPoolExecutor(max_workers=n_threads) if n_threads > 1 else None
    candidates = []
    try:
        for lr in grid.learning_rates:
            for depth in grid.max_depths:
                for mcw in grid.min_child_weights:
                    params = BoostParams(
                        n_rounds=grid.max_rounds,
                        learning_rate=lr,
                        max_depth=depth,
                        min_child_weight=mcw,
                        l2_reg=grid.l2_reg,
                        split_gain_floor=grid.split_gain_floor,
                        max_bins=grid.max_bins,
                    )
                    auc_by_round = np.zeros(grid.max_rounds, dtype=np.float64)
                    for b_tr, b_ho, d_tr, d_ho in fold_data:
                        base = _base_margin(float(d_tr.mean()))
                        m_tr = np.full(b_tr.n_rows, base)
                        m_ho = np.full(b_ho.n_rows, base)
                        ho_idx = np.arange(b_ho.n_rows)
                        for r in range(grid.max_rounds):
                            grad, hess = logistic_objective(m_tr, d_tr)
                            root, out_tr = _grow_tree(b_tr, grad, hess, params, pool)
                            m_tr += lr * out_tr
                            out_ho = np.zeros(b_ho.n_rows)
                            _route_bin_tree(root, b_ho, missing_bins, ho_idx, out_ho)
                            m_ho += lr * out_ho
                            auc_by_round[r] += auc_metric(m_ho, d_ho)
                    auc_by_round /= folds
                    r_best = int(np.argmax(auc_by_round))
                    candidates.append(
                        (
                            float(auc_by_round[r_best]),
                            replace(params, n_rounds=r_best + 1),
                        )
                    )
    finally:
        if pool is not None:
            pool.shutdown()

    def sort_key(item):
        score, p = item
        return (score, -p.n_rounds, -p.max_depth, -p.learning_rate, -p.min_child_weight)

    best_score, best_params = max(candidates, key=sort_key)
    return CVResult(best_params=best_params, best_mean_auc=best_score)
