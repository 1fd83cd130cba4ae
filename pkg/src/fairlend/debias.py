"""The four de-biasing strategies and threshold calibration.

Every method yields approval scores that are invariant to the scored row's
own group: exclusion and the regularized objective never see the flag at
inference, and the averaging/max methods overwrite it with substituted
values before predicting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._util import round_half_up
from .boosting import (
    BoostedEnsemble,
    BoostParams,
    FairObjectiveParams,
    predict_approval_prob,
    train,
)
from .errors import (
    DegenerateScores,
    InvalidConfig,
    ModelMissingProhibitedFeature,
)
from .tabular import ApplicationTable, LabelSet, build_bins

METHODS = ("exclusion", "fair_regularized", "average_over_prohibited", "max_over_groups")


@dataclass(frozen=True)
class DebiasSpec:
    """Which de-bias method to run and its parameters."""

    method: str
    prohibited_vars: tuple[str, ...] = ("group",)
    mu: float = 0.2  # fair_regularized only
    gamma_mode: str = "fixed"  # "fixed" | "mean_match"
    gamma: float = 1.0
    mode: str = "sampled"  # averaging: "sampled" | "exact"
    n_draws: int = 500
    draw_seed: int = 0
    rescale: bool = False  # averaging: apply mean-match scaling

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidConfig(
                f"unknown method {self.method!r} (valid: {', '.join(METHODS)})"
            )
        if self.gamma <= 0.0:
            raise InvalidConfig("gamma must be positive")
        if self.n_draws < 1:
            raise InvalidConfig("n_draws must be at least 1")
        if self.gamma_mode not in ("fixed", "mean_match"):
            raise InvalidConfig(f"unknown gamma_mode {self.gamma_mode!r}")
        if self.mode not in ("sampled", "exact"):
            raise InvalidConfig(f"unknown averaging mode {self.mode!r}")
        if self.method in ("average_over_prohibited", "max_over_groups"):
            if not self.prohibited_vars:
                raise InvalidConfig("prohibited_vars must be nonempty")
            if "group" not in self.prohibited_vars:
                raise InvalidConfig("prohibited_vars must include the group flag")


@dataclass(frozen=True)
class DecisionThreshold:
    threshold: float
    target_rate: float
    achieved_rate: float


def calibrate_threshold(
    approval_scores: np.ndarray,
    target_denial_rate: float,
    row_ids: Optional[np.ndarray] = None,
) -> tuple[DecisionThreshold, np.ndarray]:
    """Deny exactly the k lowest approval scores, k = round(rate * n).

    Ties break by ascending row id, so the achieved denial rate is k/n
    exactly regardless of score ties. Returns the threshold (k-th lowest
    score; -inf when k = 0) and the denial decisions (True = denied).
    """
    s = np.asarray(approval_scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise InvalidConfig("approval scores must be finite")
    if not (0.0 <= target_denial_rate <= 1.0):
        raise InvalidConfig("target_denial_rate must be in [0, 1]")
    n = s.shape[0]
    ids = np.arange(n, dtype=np.int64) if row_ids is None else np.asarray(row_ids)
    k = round_half_up(target_denial_rate * n)
    order = np.lexsort((ids, s))
    denied = np.zeros(n, dtype=bool)
    denied[order[:k]] = True
    threshold = float(s[order[k - 1]]) if k > 0 else float("-inf")
    return (
        DecisionThreshold(
            threshold=threshold,
            target_rate=float(target_denial_rate),
            achieved_rate=k / n if n else 0.0,
        ),
        denied,
    )


def compute_gamma(debiased_scores: np.ndarray, reference_scores: np.ndarray) -> float:
    """Mean-match scale: mean(reference)/mean(debiased), clamped to (0, 1]."""
    deb = np.asarray(debiased_scores, dtype=np.float64)
    ref = np.asarray(reference_scores, dtype=np.float64)
    if deb.size == 0 or ref.size == 0 or deb.size != ref.size:
        raise InvalidConfig("score vectors must be nonempty and of equal length")
    m = float(deb.mean())
    if m <= 0.0:
        raise DegenerateScores("de-biased scores have nonpositive mean")
    return min(1.0, float(ref.mean()) / m)


# ---------------------------------------------------------------------------
# Substitution scoring
# ---------------------------------------------------------------------------

def _prohibited_value(table: ApplicationTable, var: str, row: int):
    if var == "group" and "group" not in table.categorical_features:
        return int(table.group[row])
    if var in table.categorical_features:
        return int(table.categorical_features[var][row])
    if var in table.numeric_features:
        return float(table.numeric_features[var][row])
    raise InvalidConfig(f"prohibited variable {var!r} not found in the population table")


def _check_model_has(model: BoostedEnsemble, prohibited_vars: Sequence[str]):
    for var in prohibited_vars:
        if var not in model.feature_names:
            raise ModelMissingProhibitedFeature(
                f"full model was trained without prohibited variable {var!r}"
            )


def _substitution_weights(
    table: ApplicationTable,
    population_ids: np.ndarray,
    prohibited_vars: Sequence[str],
    mode: str,
    n_draws: int,
    seed: int,
    value_weights=None,
):
    """Joint prohibited-value combinations and their averaging weights.

    Sampled mode draws ``n_draws`` population rows (one shared draw set,
    uniform with replacement) and keeps the joint values; exact mode requires
    the single binary group variable and uses population shares or the
    explicit ``value_weights=(w_for_0, w_for_1)``.
    """
    pop = np.asarray(population_ids, dtype=np.int64)
    if mode == "exact":
        if tuple(prohibited_vars) != ("group",):
            raise InvalidConfig("exact averaging supports only the single group variable")
        if value_weights is not None:
            w0, w1 = float(value_weights[0]), float(value_weights[1])
        else:
            w1 = float(np.asarray(table.group, dtype=np.float64)[pop].mean())
            w0 = 1.0 - w1
        return [((0,), w0), ((1,), w1)]

    rng = np.random.default_rng(seed)
    draws = pop[rng.integers(0, pop.size, size=n_draws)]
    value_matrix = np.empty((n_draws, len(prohibited_vars)), dtype=object)
    for j, var in enumerate(prohibited_vars):
        value_matrix[:, j] = [_prohibited_value(table, var, r) for r in draws]
    combos: dict[tuple, int] = {}
    for row in value_matrix:
        key = tuple(row)
        combos[key] = combos.get(key, 0) + 1
    return [(key, count / n_draws) for key, count in sorted(combos.items())]


def substituted_scores(
    model: BoostedEnsemble,
    table: ApplicationTable,
    row_ids: np.ndarray,
    prohibited_vars: Sequence[str],
    combos_with_weights,
) -> np.ndarray:
    """Weighted average of approval probabilities over substituted values."""
    _check_model_has(model, prohibited_vars)
    idx = np.asarray(row_ids, dtype=np.int64)
    out = np.zeros(idx.shape[0], dtype=np.float64)
    for values, weight in combos_with_weights:
        overrides = {var: values[j] for j, var in enumerate(prohibited_vars)}
        out += weight * predict_approval_prob(model, table, idx, overrides)
    return out


def avg_over_prohibited(
    full_model: BoostedEnsemble,
    table: ApplicationTable,
    row_id: int,
    prohibited_vars: Sequence[str],
    population_table: ApplicationTable,
    population_ids: np.ndarray,
    mode: str = "sampled",
    n_draws: int = 500,
    seed: int = 0,
    value_weights=None,
) -> float:
    """De-biased approval probability for one row by averaging over the joint
    prohibited-variable values observed in the population."""
    combos = _substitution_weights(
        population_table, population_ids, prohibited_vars, mode, n_draws, seed,
        value_weights=value_weights,
    )
    return float(
        substituted_scores(full_model, table, np.array([row_id]), prohibited_vars, combos)[0]
    )


def max_over_groups_scores(
    model: BoostedEnsemble,
    table: ApplicationTable,
    row_ids: np.ndarray,
    group_values: Sequence[int] = (0, 1),
    gamma: float = 1.0,
):
    """Gamma-scaled max of approval probabilities over group substitutions.

    Returns (scores, argmax_values, conditional matrix). The argmax records
    the row's own group on exact ties, so the audit only counts rows whose
    prediction genuinely came from the other group.
    """
    _check_model_has(model, ["group"])
    idx = np.asarray(row_ids, dtype=np.int64)
    cond = np.column_stack(
        [predict_approval_prob(model, table, idx, {"group": v}) for v in group_values]
    )
    best = cond.max(axis=1)
    own = np.asarray(table.group, dtype=np.int64)[idx]
    values = np.asarray(group_values, dtype=np.int64)
    argmax = values[np.argmax(cond, axis=1)]
    own_col = np.searchsorted(values, own)
    own_is_max = cond[np.arange(idx.size), own_col] >= best
    argmax = np.where(own_is_max, own, argmax)
    return gamma * best, argmax, cond


def max_over_groups(
    full_model: BoostedEnsemble,
    table: ApplicationTable,
    row_id: int,
    group_values: Sequence[int] = (0, 1),
    gamma: float = 1.0,
) -> float:
    """Single-row max-over-groups approval probability."""
    scores, _, _ = max_over_groups_scores(
        full_model, table, np.array([row_id]), group_values, gamma
    )
    return float(scores[0])


# ---------------------------------------------------------------------------
# Method runner
# ---------------------------------------------------------------------------

@dataclass
class MethodResult:
    spec: DebiasSpec
    model: BoostedEnsemble
    approval_scores: np.ndarray  # test rows, after any gamma scaling
    gamma: float
    argmax_group: Optional[np.ndarray] = None  # max audit
    conditional_scores: Optional[np.ndarray] = None  # (n_test, n_group_values)


def _feature_set(spec: DebiasSpec, base_features: Sequence[str]) -> tuple[str, ...]:
    if spec.method in ("exclusion", "fair_regularized"):
        dropped = set(spec.prohibited_vars)
        return tuple(f for f in base_features if f not in dropped)
    # full models carry every prohibited variable as a feature
    feats = [f for f in base_features if f != "group"]
    if "group" in spec.prohibited_vars:
        feats.append("group")
    missing = [v for v in spec.prohibited_vars if v != "group" and v not in feats]
    if missing:
        raise InvalidConfig(
            f"prohibited variables {missing} are not available as features"
        )
    return tuple(feats)


def run_method(
    spec: DebiasSpec,
    table: ApplicationTable,
    labels: LabelSet,
    train_ids: np.ndarray,
    test_ids: np.ndarray,
    params: BoostParams,
    base_features: Sequence[str],
    n_threads: int = 1,
    model: Optional[BoostedEnsemble] = None,
) -> MethodResult:
    """Train the method's model on biased training labels and score test rows.

    Exclusion and the regularized objective score directly; averaging and max
    train a full model including the prohibited variables and post-process.
    Mean-match gamma, when requested, is computed on the training split only.
    Pass ``model`` to reuse an already-trained (e.g. deserialized) ensemble.
    """
    train_ids = np.asarray(train_ids, dtype=np.int64)
    test_ids = np.asarray(test_ids, dtype=np.int64)

    if model is None:
        features = _feature_set(spec, base_features)
        binned = build_bins(table, train_ids, params.max_bins, feature_names=features)
        b_train = binned.subset(train_ids)
        denial = (1 - labels.biased).astype(np.uint8)
        if spec.method == "fair_regularized":
            model = train(
                b_train,
                denial[train_ids],
                params,
                objective="fair",
                group_flags=table.group[train_ids],
                fair_params=FairObjectiveParams(mu=spec.mu),
                n_threads=n_threads,
            )
        else:
            model = train(b_train, denial[train_ids], params, n_threads=n_threads)

    if spec.method in ("exclusion", "fair_regularized"):
        scores = predict_approval_prob(model, table, test_ids)
        return MethodResult(spec=spec, model=model, approval_scores=scores, gamma=1.0)

    if spec.method == "average_over_prohibited":
        combos = _substitution_weights(
            table, train_ids, spec.prohibited_vars, spec.mode, spec.n_draws, spec.draw_seed
        )
        raw_test = substituted_scores(model, table, test_ids, spec.prohibited_vars, combos)
        gamma = 1.0
        if spec.rescale:
            raw_train = substituted_scores(
                model, table, train_ids, spec.prohibited_vars, combos
            )
            reference = predict_approval_prob(model, table, train_ids)
            gamma = compute_gamma(raw_train, reference)
        return MethodResult(
            spec=spec, model=model, approval_scores=gamma * raw_test, gamma=gamma
        )

    # max_over_groups
    gamma = spec.gamma
    if spec.gamma_mode == "mean_match":
        raw_train, _, _ = max_over_groups_scores(model, table, train_ids)
        reference = predict_approval_prob(model, table, train_ids)
        gamma = compute_gamma(raw_train, reference)
    scores, argmax, cond = max_over_groups_scores(
        model, table, test_ids, gamma=gamma
    )
    return MethodResult(
        spec=spec,
        model=model,
        approval_scores=scores,
        gamma=gamma,
        argmax_group=argmax,
        conditional_scores=cond,
    )
