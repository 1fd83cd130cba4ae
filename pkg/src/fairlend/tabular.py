"""Application data model: CSV ingestion, synthetic generation, splitting, binning.

Conventions used throughout the package:

* approval labels: 1 = approved, 0 = denied.
* missing numeric cells are NaN; categorical cells are never missing (a blank
  string is its own category).
* ``row_id`` equals the positional row index (0..n-1) for tables produced by
  :func:`load_csv` and :func:`generate_synthetic`, so id arrays double as
  index arrays.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Optional, Sequence

import numpy as np

from ._util import round_half_up, sigmoid
from .errors import (
    BadLabelValue,
    EmptyFile,
    InconsistentRowLength,
    InvalidConfig,
    MissingColumn,
)

NUMERIC_FEATURES = ("credit_score", "cltv_pct", "dti_pct", "income", "property_value")
CATEGORICAL_FEATURES = (
    "construction_method",
    "property_type",
    "total_units",
    "state",
    "county",
    "tract",
)

SCHEMA_ROLES = (
    "approval",
    "group",
    "numeric_feature",
    "categorical_feature",
    "county",
    "tract",
    "ignore",
)


class Disposition(IntEnum):
    """Row status relative to the actual and biased label pair."""

    APPROVED_BOTH = 0
    COUNTERFACTUAL_DENIAL = 1
    ACTUAL_DENIAL = 2


DISPOSITION_NAMES = {
    Disposition.APPROVED_BOTH: "approved_both",
    Disposition.COUNTERFACTUAL_DENIAL: "counterfactual_denial",
    Disposition.ACTUAL_DENIAL: "actual_denial",
}


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ApplicationTable:
    """Columnar store of loan applications.

    Immutable after construction; all arrays are flagged read-only.
    """

    n_rows: int
    numeric_features: dict[str, np.ndarray]
    categorical_features: dict[str, np.ndarray]
    categories: dict[str, tuple[str, ...]]
    group: np.ndarray
    row_id: np.ndarray
    county_feature: Optional[str] = None
    tract_feature: Optional[str] = None

    def __post_init__(self):
        n = self.n_rows
        for name, col in self.numeric_features.items():
            if col.shape != (n,):
                raise InvalidConfig(f"numeric column {name!r} has wrong length")
            _freeze(col)
        for name, col in self.categorical_features.items():
            if col.shape != (n,):
                raise InvalidConfig(f"categorical column {name!r} has wrong length")
            ncat = len(self.categories[name])
            if col.size and (col.min() < 0 or col.max() >= ncat):
                raise InvalidConfig(f"category code out of range in {name!r}")
            _freeze(col)
        if self.group.shape != (n,) or self.row_id.shape != (n,):
            raise InvalidConfig("group/row_id length mismatch")
        if len(np.unique(self.row_id)) != n:
            raise InvalidConfig("row_id values are not unique")
        _freeze(self.group)
        _freeze(self.row_id)
        if self.county_feature and self.tract_feature:
            self._check_tract_nesting()

    def _check_tract_nesting(self):
        tract = self.categorical_features[self.tract_feature]
        county = self.categorical_features[self.county_feature]
        # each tract code must map to exactly one county code
        first = {}
        for t, c in zip(tract.tolist(), county.tolist()):
            prev = first.setdefault(t, c)
            if prev != c:
                raise InvalidConfig(
                    f"tract code {t} appears under counties {prev} and {c}"
                )

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(self.numeric_features) + tuple(self.categorical_features)

    def missing_mask(self, name: str) -> np.ndarray:
        return np.isnan(self.numeric_features[name])

    def column_kind(self, name: str) -> str:
        if name in self.numeric_features:
            return "numeric"
        if name in self.categorical_features:
            return "categorical"
        if name == "group":
            return "group"
        raise KeyError(name)


@dataclass(frozen=True)
class LabelSet:
    """Parallel label vectors: actual outcome, biased training target, disposition."""

    actual: np.ndarray
    biased: np.ndarray
    disposition: np.ndarray

    def __post_init__(self):
        a, b, d = self.actual, self.biased, self.disposition
        if not (a.shape == b.shape == d.shape):
            raise InvalidConfig("label vectors must have equal length")
        if np.any((a == 0) & (b == 1)):
            raise InvalidConfig("injection may not flip a denial to an approval")
        expect = np.where(
            a == 0,
            Disposition.ACTUAL_DENIAL,
            np.where(b == 0, Disposition.COUNTERFACTUAL_DENIAL, Disposition.APPROVED_BOTH),
        )
        if not np.array_equal(d, expect):
            raise InvalidConfig("disposition inconsistent with label pair")
        _freeze(a)
        _freeze(b)
        _freeze(d)

    @property
    def n_rows(self) -> int:
        return self.actual.shape[0]

    @classmethod
    def from_actual(cls, actual: np.ndarray) -> "LabelSet":
        actual = np.asarray(actual, dtype=np.uint8).copy()
        disp = np.where(
            actual == 0, Disposition.ACTUAL_DENIAL, Disposition.APPROVED_BOTH
        ).astype(np.int8)
        return cls(actual=actual, biased=actual.copy(), disposition=disp)

    def with_biased(self, biased: np.ndarray) -> "LabelSet":
        """New LabelSet with a replacement biased vector; dispositions recomputed."""
        biased = np.asarray(biased, dtype=np.uint8).copy()
        disp = np.where(
            self.actual == 0,
            Disposition.ACTUAL_DENIAL,
            np.where(biased == 0, Disposition.COUNTERFACTUAL_DENIAL, Disposition.APPROVED_BOTH),
        ).astype(np.int8)
        return LabelSet(actual=self.actual.copy(), biased=biased, disposition=disp)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def read_schema(path) -> dict[str, str]:
    """Parse a column-role schema file: one ``column = role`` pair per line."""
    schema: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidConfig(f"{path}:{lineno}: expected 'column = role'")
            name, role = (part.strip() for part in line.split("=", 1))
            if role not in SCHEMA_ROLES:
                raise InvalidConfig(
                    f"{path}:{lineno}: unknown role {role!r} (valid: {', '.join(SCHEMA_ROLES)})"
                )
            schema[name] = role
    return schema


def _parse_binary_column(values: list[str], column: str) -> np.ndarray:
    out = np.empty(len(values), dtype=np.uint8)
    for i, v in enumerate(values):
        v = v.strip()
        if v == "0":
            out[i] = 0
        elif v == "1":
            out[i] = 1
        else:
            raise BadLabelValue(
                f"column {column!r}, data row {i + 1}: expected 0 or 1, got {v!r}"
            )
    return out


def load_csv(path, schema: Mapping[str, str]) -> tuple[ApplicationTable, LabelSet]:
    """Load an application CSV per a column-role schema.

    The biased labels are initialized equal to the actual labels; run an
    injector afterwards to create counterfactual bias.
    """
    roles = dict(schema)
    approval_cols = [c for c, r in roles.items() if r == "approval"]
    group_cols = [c for c, r in roles.items() if r == "group"]
    feature_cols = [
        c for c, r in roles.items()
        if r in ("numeric_feature", "categorical_feature", "county", "tract")
    ]
    if len(approval_cols) != 1 or len(group_cols) != 1 or not feature_cols:
        raise InvalidConfig(
            "schema must name exactly one approval column, one group column, "
            "and at least one feature column"
        )

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: no header row") from None
        header = [h.strip() for h in header]
        for col in roles:
            if col not in header:
                raise MissingColumn(f"{path}: schema column {col!r} not in header")
        rows: list[list[str]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InconsistentRowLength(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise EmptyFile(f"{path}: no data rows")

    col_idx = {name: header.index(name) for name in roles}
    n = len(rows)

    numeric: dict[str, np.ndarray] = {}
    categorical: dict[str, np.ndarray] = {}
    categories: dict[str, tuple[str, ...]] = {}
    county_feature = None
    tract_feature = None

    for name, role in roles.items():
        if role == "ignore":
            continue
        raw = [rows[i][col_idx[name]] for i in range(n)]
        if role == "approval":
            actual = _parse_binary_column(raw, name)
        elif role == "group":
            group = _parse_binary_column(raw, name).astype(bool)
        elif role == "numeric_feature":
            vals = np.empty(n, dtype=np.float64)
            for i, cell in enumerate(raw):
                try:
                    vals[i] = float(cell)
                except ValueError:
                    vals[i] = np.nan  # unparseable cell becomes missing
            numeric[name] = vals
        else:  # categorical_feature / county / tract
            codes = np.empty(n, dtype=np.int32)
            lookup: dict[str, int] = {}
            for i, cell in enumerate(raw):
                code = lookup.setdefault(cell, len(lookup))
                codes[i] = code
            categorical[name] = codes
            categories[name] = tuple(lookup)
            if role == "county":
                county_feature = name
            elif role == "tract":
                tract_feature = name

    table = ApplicationTable(
        n_rows=n,
        numeric_features=numeric,
        categorical_features=categorical,
        categories=categories,
        group=group,
        row_id=np.arange(n, dtype=np.int64),
        county_feature=county_feature,
        tract_feature=tract_feature,
    )
    return table, LabelSet.from_actual(actual)


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossingRegion:
    """High-DTI region where the group's true denial rate undercuts the rest."""

    dti_threshold: float = 80.0
    group_coefficient_delta: float = 0.6


# Fair-rule term order; coefficients apply to standardized transforms with the
# fixed centering/scale constants below (independent of the sample drawn).
FAIR_RULE_TERMS = (
    "intercept",
    "credit_score",
    "cltv_pct",
    "dti_pct",
    "log_income",
    "log_property_value",
)
_STANDARDIZE = {
    "credit_score": (720.0, 50.0),
    "cltv_pct": (82.0, 13.0),
    "dti_pct": (36.0, 10.0),
    "log_income": (np.log(90.0), 0.55),
    "log_property_value": (np.log(290.0), 0.60),
}
DEFAULT_FAIR_RULE = (3.38, 0.95, -0.50, -1.05, 0.30, 0.10)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the seeded synthetic loan-application generator."""

    n_rows: int = 50_000
    group_share: float = 0.072
    n_counties: int = 24
    tracts_per_county: int = 6
    segregation_strength: float = 0.92
    fair_rule_coefficients: tuple[float, ...] = DEFAULT_FAIR_RULE
    noise_scale: float = 0.5
    crossing_region: Optional[CrossingRegion] = None
    seed: int = 0

    def validate(self):
        if self.n_rows <= 0:
            raise InvalidConfig("n_rows must be positive")
        if not (0.0 < self.group_share < 1.0):
            raise InvalidConfig("group_share must be in (0, 1)")
        if self.n_counties < 1 or self.tracts_per_county < 1:
            raise InvalidConfig("county/tract counts must be positive")
        if not (0.0 <= self.segregation_strength <= 1.0):
            raise InvalidConfig("segregation_strength must be in [0, 1]")
        if self.noise_scale < 0.0:
            raise InvalidConfig("noise_scale must be nonnegative")
        if len(self.fair_rule_coefficients) != len(FAIR_RULE_TERMS):
            raise InvalidConfig(
                f"fair_rule_coefficients needs {len(FAIR_RULE_TERMS)} entries "
                f"(order: {', '.join(FAIR_RULE_TERMS)})"
            )


# Group-conditional feature shifts. Sized so that the fair denial rates land
# near 9.5% (group) vs 6.2% (others) under the default fair rule.
_CREDIT_MEAN = (741.0, 722.0)   # (non-group, group)
_CREDIT_SD = (52.0, 55.0)
_CLTV_MEAN = (81.0, 83.5)
_CLTV_SD = (13.0, 12.5)
_DTI_MEAN = (35.5, 37.0)
_DTI_SD = (8.5, 8.5)
_DTI_STRESS_P = (0.015, 0.022)  # chance of a high-DTI (>60) application
_LOG_INCOME_MEAN = (np.log(95.0), np.log(78.0))
_LOG_INCOME_SD = (0.55, 0.53)
_MANUFACTURED_P = (0.035, 0.055)
_COUNTIES_PER_STATE = 6


def _fair_logit(cfg: SyntheticConfig, credit, cltv, dti, income, value, group):
    b = dict(zip(FAIR_RULE_TERMS, cfg.fair_rule_coefficients))
    z = np.full(credit.shape, b["intercept"], dtype=np.float64)
    for name, vals in (
        ("credit_score", credit),
        ("cltv_pct", cltv),
        ("dti_pct", dti),
        ("log_income", np.log(income)),
        ("log_property_value", np.log(value)),
    ):
        center, scale = _STANDARDIZE[name]
        z += b[name] * (vals - center) / scale
    if cfg.crossing_region is not None:
        cr = cfg.crossing_region
        z += np.where(group & (dti > cr.dti_threshold), cr.group_coefficient_delta, 0.0)
    return z


def generate_synthetic(cfg: SyntheticConfig) -> tuple[ApplicationTable, LabelSet]:
    """Generate a seeded synthetic sample with known-fair ground truth labels.

    The approval rule is a logistic function of the numeric features plus an
    unobserved residual, so the "actual" labels are fair by construction.
    Group membership correlates with geography (a small set of enclave tracts
    absorbs ``segregation_strength`` of the group) and with the numeric
    feature distributions, but never enters the fair rule directly.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_rows
    g = rng.random(n) < cfg.group_share

    # Geography. Enclave tracts fill the first few counties; weights within the
    # enclave descend so tract-level group shares vary.
    n_tracts = cfg.n_counties * cfg.tracts_per_county
    n_enclave_counties = max(1, round(cfg.n_counties / 12))
    n_enclave = min(n_tracts, n_enclave_counties * cfg.tracts_per_county)
    enclave_w = np.linspace(2.0, 0.4, n_enclave)
    enclave_w /= enclave_w.sum()
    enclave_pick = rng.choice(n_enclave, size=n, p=enclave_w)
    uniform_pick = rng.integers(0, n_tracts, size=n)
    in_enclave = g & (rng.random(n) < cfg.segregation_strength)
    tract = np.where(in_enclave, enclave_pick, uniform_pick).astype(np.int32)
    county = (tract // cfg.tracts_per_county).astype(np.int32)
    state = (county // _COUNTIES_PER_STATE).astype(np.int32)
    n_states = (cfg.n_counties + _COUNTIES_PER_STATE - 1) // _COUNTIES_PER_STATE

    gi = g.astype(np.intp)

    def pick(pair):
        return np.asarray(pair, dtype=np.float64)[gi]

    credit = rng.normal(pick(_CREDIT_MEAN), pick(_CREDIT_SD))
    credit = np.clip(np.rint(credit), 520, 850)
    cltv = np.clip(rng.normal(pick(_CLTV_MEAN), pick(_CLTV_SD)), 25.0, 115.0)
    dti = rng.normal(pick(_DTI_MEAN), pick(_DTI_SD))
    stressed = rng.random(n) < pick(_DTI_STRESS_P)
    dti = np.where(stressed, rng.uniform(62.0, 105.0, size=n), dti)
    dti = np.clip(dti, 5.0, 110.0)
    income = np.exp(rng.normal(pick(_LOG_INCOME_MEAN), pick(_LOG_INCOME_SD)))
    income = np.clip(income, 8.0, 2500.0)
    value = np.exp(np.log(income) + rng.normal(1.12, 0.38, size=n))
    value = np.clip(value, 25.0, 6000.0)

    construction = (rng.random(n) < pick(_MANUFACTURED_P)).astype(np.int32)
    property_type = rng.choice(3, size=n, p=[0.80, 0.12, 0.08]).astype(np.int32)
    total_units = rng.choice(4, size=n, p=[0.95, 0.03, 0.012, 0.008]).astype(np.int32)

    eps = rng.normal(0.0, cfg.noise_scale, size=n)
    u_label = rng.random(n)  # drawn last so the fair rule never shifts the stream

    z = _fair_logit(cfg, credit, cltv, dti, income, value, g)
    actual = (u_label < sigmoid(z + eps)).astype(np.uint8)

    if cfg.crossing_region is not None:
        thr = cfg.crossing_region.dti_threshold
        hi = dti > thr
        if not (np.any(hi & g) and np.any(hi & ~g)):
            raise InvalidConfig("crossing region is empty for one of the groups")
        rate_g = 1.0 - actual[hi & g].mean()
        rate_n = 1.0 - actual[hi & ~g].mean()
        if not rate_g < rate_n:
            raise InvalidConfig(
                f"crossing region not achieved (group denial {rate_g:.3f} vs "
                f"{rate_n:.3f} above dti>{thr}); raise group_coefficient_delta"
            )

    table = ApplicationTable(
        n_rows=n,
        numeric_features={
            "credit_score": credit.astype(np.float64),
            "cltv_pct": cltv,
            "dti_pct": dti,
            "income": income,
            "property_value": value,
        },
        categorical_features={
            "construction_method": construction,
            "property_type": property_type,
            "total_units": total_units,
            "state": state,
            "county": county,
            "tract": tract,
        },
        categories={
            "construction_method": ("site_built", "manufactured"),
            "property_type": ("single_family", "condo", "townhouse"),
            "total_units": ("1", "2", "3", "4"),
            "state": tuple(f"S{i:02d}" for i in range(n_states)),
            "county": tuple(f"C{i:03d}" for i in range(cfg.n_counties)),
            "tract": tuple(f"T{i:04d}" for i in range(n_tracts)),
        },
        group=g,
        row_id=np.arange(n, dtype=np.int64),
        county_feature="county",
        tract_feature="tract",
    )
    return table, LabelSet.from_actual(actual)


# ---------------------------------------------------------------------------
# Splitting and binning
# ---------------------------------------------------------------------------

def split_train_test(
    table: ApplicationTable, fraction: float = 0.8, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded uniform split into (train_ids, test_ids), sorted ascending."""
    if not (0.0 < fraction < 1.0):
        raise InvalidConfig("split fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(table.n_rows)
    k = round_half_up(fraction * table.n_rows)
    train = np.sort(table.row_id[perm[:k]])
    test = np.sort(table.row_id[perm[k:]])
    return train, test


@dataclass(frozen=True)
class BinnedMatrix:
    """Per-feature bin codes for every table row, with train-derived boundaries.

    For every feature, bins ``0..n_bins-1`` are the regular bins and the index
    ``n_bins`` is the dedicated missing-value bin. Numeric bin ``i`` covers
    ``(boundaries[i-1], boundaries[i]]``; values at or below a boundary fall
    left of it.
    """

    feature_names: tuple[str, ...]
    kinds: tuple[str, ...]
    codes: np.ndarray  # (n_features, n_rows) int32
    n_bins: tuple[int, ...]
    boundaries: dict[str, np.ndarray]
    categories: dict[str, tuple[str, ...]]
    row_ids: np.ndarray

    def __post_init__(self):
        _freeze(self.codes)
        _freeze(self.row_ids)
        for b in self.boundaries.values():
            _freeze(b)

    @property
    def n_rows(self) -> int:
        return self.codes.shape[1]

    def missing_bin(self, f: int) -> int:
        return self.n_bins[f]

    def subset(self, row_ids: np.ndarray) -> "BinnedMatrix":
        """Restrict to the given row ids (positions), keeping the boundaries."""
        idx = np.asarray(row_ids, dtype=np.int64)
        return BinnedMatrix(
            feature_names=self.feature_names,
            kinds=self.kinds,
            codes=self.codes[:, idx].copy(),
            n_bins=self.n_bins,
            boundaries=self.boundaries,
            categories=self.categories,
            row_ids=self.row_ids[idx].copy(),
        )


def build_bins(
    table: ApplicationTable,
    train_ids: np.ndarray,
    max_bins: int = 256,
    feature_names: Optional[Sequence[str]] = None,
) -> BinnedMatrix:
    """Quantile-bin numeric features on the training rows; pass categories through.

    ``feature_names`` may include ``"group"`` to expose the group flag as a
    two-category feature (needed by the full models that average or maximize
    over it). Defaults to every table feature.
    """
    if not (2 <= max_bins <= 256):
        raise InvalidConfig("max_bins must be in [2, 256]")
    if feature_names is None:
        feature_names = table.feature_names
    train_ids = np.asarray(train_ids, dtype=np.int64)

    names: list[str] = []
    kinds: list[str] = []
    nbins: list[int] = []
    boundaries: dict[str, np.ndarray] = {}
    categories: dict[str, tuple[str, ...]] = {}
    code_rows: list[np.ndarray] = []

    for name in feature_names:
        if name == "group":
            codes = table.group.astype(np.int32)
            names.append(name)
            kinds.append("categorical")
            nbins.append(2)
            categories[name] = ("0", "1")
            code_rows.append(codes)
            continue
        kind = table.column_kind(name)
        if kind == "numeric":
            col = table.numeric_features[name]
            train_vals = col[train_ids]
            train_vals = train_vals[~np.isnan(train_vals)]
            if train_vals.size == 0:
                edges = np.empty(0, dtype=np.float64)
            else:
                qs = np.arange(1, max_bins) / max_bins
                edges = np.unique(np.quantile(train_vals, qs))
                vmin, vmax = train_vals.min(), train_vals.max()
                edges = edges[(edges >= vmin) & (edges < vmax)]
            nb = len(edges) + 1
            codes = np.searchsorted(edges, col, side="left").astype(np.int32)
            codes[np.isnan(col)] = nb  # dedicated missing bin
            names.append(name)
            kinds.append("numeric")
            nbins.append(nb)
            boundaries[name] = edges
            code_rows.append(codes)
        else:
            codes = table.categorical_features[name].astype(np.int32)
            names.append(name)
            kinds.append("categorical")
            nbins.append(len(table.categories[name]))
            categories[name] = table.categories[name]
            code_rows.append(codes)

    return BinnedMatrix(
        feature_names=tuple(names),
        kinds=tuple(kinds),
        codes=np.vstack(code_rows),
        n_bins=tuple(nbins),
        boundaries=boundaries,
        categories=categories,
        row_ids=table.row_id.copy(),
    )
