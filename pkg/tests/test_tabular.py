import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_table
from fairlend.errors import (
    BadLabelValue,
    EmptyFile,
    InconsistentRowLength,
    InvalidConfig,
    MissingColumn,
)
from fairlend.tabular import (
    CrossingRegion,
    Disposition,
    LabelSet,
    SyntheticConfig,
    build_bins,
    generate_synthetic,
    load_csv,
    read_schema,
    split_train_test,
)

SCHEMA = {
    "approved": "approval",
    "grp": "group",
    "credit_score": "numeric_feature",
    "county": "county",
}


def write_csv(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadCsv:
    def test_three_row_file_initializes_labels(self, tmp_path):
        p = write_csv(
            tmp_path,
            "approved,grp,credit_score,county\n1,0,700,A\n0,1,650,B\n1,0,710,A\n",
        )
        table, labels = load_csv(p, SCHEMA)
        assert table.n_rows == 3
        assert labels.actual.tolist() == [1, 0, 1]
        assert labels.biased.tolist() == [1, 0, 1]
        assert labels.disposition.tolist() == [
            Disposition.APPROVED_BOTH,
            Disposition.ACTUAL_DENIAL,
            Disposition.APPROVED_BOTH,
        ]

    def test_blank_numeric_cell_becomes_missing(self, tmp_path):
        p = write_csv(
            tmp_path,
            "approved,grp,credit_score,county\n1,0,,A\n0,1,650,B\n",
        )
        table, _ = load_csv(p, SCHEMA)
        assert table.n_rows == 2
        assert table.missing_mask("credit_score").tolist() == [True, False]

    def test_unparseable_numeric_cell_becomes_missing(self, tmp_path):
        p = write_csv(
            tmp_path,
            "approved,grp,credit_score,county\n1,0,n/a,A\n0,1,650,B\n",
        )
        table, _ = load_csv(p, SCHEMA)
        assert table.missing_mask("credit_score").tolist() == [True, False]

    def test_reload_is_bit_identical(self, tmp_path):
        p = write_csv(
            tmp_path,
            "approved,grp,credit_score,county\n1,0,700.5,A\n0,1,650.25,B\n1,1,711,A\n",
        )
        t1, l1 = load_csv(p, SCHEMA)
        t2, l2 = load_csv(p, SCHEMA)
        assert np.array_equal(
            t1.numeric_features["credit_score"], t2.numeric_features["credit_score"]
        )
        assert np.array_equal(t1.categorical_features["county"], t2.categorical_features["county"])
        assert t1.categories == t2.categories
        assert np.array_equal(l1.actual, l2.actual)

    def test_unknown_categories_get_fresh_codes_in_file_order(self, tmp_path):
        p = write_csv(
            tmp_path,
            "approved,grp,credit_score,county\n1,0,700,B\n1,0,701,A\n1,0,702,B\n",
        )
        table, _ = load_csv(p, SCHEMA)
        assert table.categories["county"] == ("B", "A")
        assert table.categorical_features["county"].tolist() == [0, 1, 0]

    def test_missing_column_error(self, tmp_path):
        p = write_csv(tmp_path, "approved,grp,county\n1,0,A\n")
        with pytest.raises(MissingColumn, match="credit_score"):
            load_csv(p, SCHEMA)

    def test_empty_file_error(self, tmp_path):
        p = write_csv(tmp_path, "")
        with pytest.raises(EmptyFile):
            load_csv(p, SCHEMA)

    def test_header_only_error(self, tmp_path):
        p = write_csv(tmp_path, "approved,grp,credit_score,county\n")
        with pytest.raises(EmptyFile):
            load_csv(p, SCHEMA)

    def test_inconsistent_row_length_names_line(self, tmp_path):
        p = write_csv(
            tmp_path, "approved,grp,credit_score,county\n1,0,700,A\n1,0,700\n"
        )
        with pytest.raises(InconsistentRowLength, match=":3"):
            load_csv(p, SCHEMA)

    def test_bad_approval_value(self, tmp_path):
        p = write_csv(tmp_path, "approved,grp,credit_score,county\n2,0,700,A\n")
        with pytest.raises(BadLabelValue, match="approved"):
            load_csv(p, SCHEMA)

    def test_schema_roundtrip(self, tmp_path):
        p = tmp_path / "roles.schema"
        p.write_text(
            "# comment\napproved = approval\ngrp = group\ncredit_score = numeric_feature\n",
            encoding="utf-8",
        )
        assert read_schema(p) == {
            "approved": "approval",
            "grp": "group",
            "credit_score": "numeric_feature",
        }

    def test_schema_unknown_role(self, tmp_path):
        p = tmp_path / "roles.schema"
        p.write_text("approved = target\n", encoding="utf-8")
        with pytest.raises(InvalidConfig, match="target"):
            read_schema(p)


class TestLabelSet:
    def test_disposition_partition_sums_to_n(self, small_synth):
        _, labels = small_synth
        counts = [
            int((labels.disposition == d).sum())
            for d in (Disposition.APPROVED_BOTH, Disposition.COUNTERFACTUAL_DENIAL, Disposition.ACTUAL_DENIAL)
        ]
        assert sum(counts) == labels.n_rows

    def test_denial_to_approval_flip_rejected(self):
        with pytest.raises(InvalidConfig):
            LabelSet(
                actual=np.array([0, 1], dtype=np.uint8),
                biased=np.array([1, 1], dtype=np.uint8),
                disposition=np.array([0, 0], dtype=np.int8),
            )

    def test_inconsistent_disposition_rejected(self):
        with pytest.raises(InvalidConfig):
            LabelSet(
                actual=np.array([1], dtype=np.uint8),
                biased=np.array([0], dtype=np.uint8),
                disposition=np.array([int(Disposition.APPROVED_BOTH)], dtype=np.int8),
            )


class TestGenerator:
    def test_same_seed_identical(self):
        cfg = SyntheticConfig(n_rows=2000, seed=3)
        t1, l1 = generate_synthetic(cfg)
        t2, l2 = generate_synthetic(cfg)
        for name in t1.numeric_features:
            assert np.array_equal(
                t1.numeric_features[name], t2.numeric_features[name], equal_nan=True
            )
        for name in t1.categorical_features:
            assert np.array_equal(
                t1.categorical_features[name], t2.categorical_features[name]
            )
        assert np.array_equal(t1.group, t2.group)
        assert np.array_equal(l1.actual, l2.actual)

    def test_group_share_near_default_at_50k(self):
        table, _ = generate_synthetic(SyntheticConfig(n_rows=50_000, seed=0))
        assert abs(table.group.mean() - 0.072) <= 0.01

    def test_crossing_region_flips_high_dti_ordering(self):
        cfg = SyntheticConfig(
            n_rows=50_000,
            seed=0,
            crossing_region=CrossingRegion(dti_threshold=80.0, group_coefficient_delta=1.2),
        )
        table, labels = generate_synthetic(cfg)
        hi = table.numeric_features["dti_pct"] > 80.0
        g = table.group
        rate_g = 1.0 - labels.actual[hi & g].mean()
        rate_n = 1.0 - labels.actual[hi & ~g].mean()
        assert rate_g < rate_n

    def test_crossing_region_unachieved_pattern_raises(self):
        # a strongly negative delta pushes the group's high-DTI denial rate up,
        # so the generator's own count check must reject the config
        cfg = SyntheticConfig(
            n_rows=20_000,
            seed=0,
            crossing_region=CrossingRegion(dti_threshold=80.0, group_coefficient_delta=-3.0),
        )
        with pytest.raises(InvalidConfig, match="crossing"):
            generate_synthetic(cfg)

    def test_tract_nesting(self, small_synth):
        table, _ = small_synth
        tract = table.categorical_features["tract"]
        county = table.categorical_features["county"]
        for t in np.unique(tract):
            assert len(np.unique(county[tract == t])) == 1

    def test_monotonicity_in_credit_coefficient(self):
        # raising the credit coefficient (same seed) cannot lose approvals among
        # rows whose only high-percentile feature is credit score
        base = SyntheticConfig(n_rows=1000, seed=9)
        coeffs = list(base.fair_rule_coefficients)
        coeffs[1] += 0.5
        bumped = SyntheticConfig(n_rows=1000, seed=9, fair_rule_coefficients=tuple(coeffs))
        t1, l1 = generate_synthetic(base)
        t2, l2 = generate_synthetic(bumped)
        credit = t1.numeric_features["credit_score"]
        cltv = t1.numeric_features["cltv_pct"]
        dti = t1.numeric_features["dti_pct"]
        probe = (
            (credit >= np.quantile(credit, 0.8))
            & (cltv <= np.quantile(cltv, 0.8))
            & (dti <= np.quantile(dti, 0.8))
        )
        assert l2.actual[probe].sum() >= l1.actual[probe].sum()

    def test_invalid_config(self):
        with pytest.raises(InvalidConfig):
            generate_synthetic(SyntheticConfig(n_rows=0))
        with pytest.raises(InvalidConfig):
            generate_synthetic(SyntheticConfig(group_share=1.5))
        with pytest.raises(InvalidConfig):
            generate_synthetic(SyntheticConfig(noise_scale=-1.0))


class TestSplit:
    def test_partition_8_2(self, small_synth):
        table, _ = small_synth
        tr, te = split_train_test(table, 0.8, seed=1)
        assert tr.size + te.size == table.n_rows
        assert np.intersect1d(tr, te).size == 0

    def test_n10_gives_8_2(self):
        table = make_table(numeric={"x": np.arange(10.0)})
        tr, te = split_train_test(table, 0.8, seed=0)
        assert (tr.size, te.size) == (8, 2)

    def test_half_of_four(self):
        table = make_table(numeric={"x": np.arange(4.0)})
        tr, te = split_train_test(table, 0.5, seed=0)
        assert (tr.size, te.size) == (2, 2)

    def test_same_seed_same_split(self, small_synth):
        table, _ = small_synth
        a = split_train_test(table, 0.8, seed=7)
        b = split_train_test(table, 0.8, seed=7)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_bad_fraction(self, small_synth):
        table, _ = small_synth
        with pytest.raises(InvalidConfig):
            split_train_test(table, 1.0, seed=0)


class TestBinning:
    def test_constant_column_single_bin(self):
        table = make_table(numeric={"x": [5.0, 5.0, 5.0, 5.0]})
        bins = build_bins(table, np.arange(4), max_bins=8)
        f = bins.feature_names.index("x")
        assert bins.n_bins[f] == 1
        assert bins.missing_bin(f) == 1
        assert bins.codes[f].tolist() == [0, 0, 0, 0]

    def test_two_bins_at_median(self):
        table = make_table(numeric={"x": [1.0, 2.0, 3.0, 4.0]})
        bins = build_bins(table, np.arange(4), max_bins=2)
        f = bins.feature_names.index("x")
        assert bins.boundaries["x"].tolist() == [2.5]
        assert bins.codes[f].tolist() == [0, 0, 1, 1]

    def test_test_row_below_lowest_boundary_clamps_to_bin_zero(self):
        table = make_table(numeric={"x": [-100.0, 1.0, 2.0, 3.0, 4.0]})
        bins = build_bins(table, np.array([1, 2, 3, 4]), max_bins=2)
        f = bins.feature_names.index("x")
        assert bins.codes[f][0] == 0

    def test_missing_goes_to_dedicated_bin(self):
        table = make_table(numeric={"x": [1.0, np.nan, 3.0, 4.0]})
        bins = build_bins(table, np.arange(4), max_bins=4)
        f = bins.feature_names.index("x")
        assert bins.codes[f][1] == bins.missing_bin(f)

    def test_categorical_passthrough(self):
        table = make_table(categorical={"c": [0, 2, 1, 2]})
        bins = build_bins(table, np.arange(4), max_bins=8)
        f = bins.feature_names.index("c")
        assert bins.n_bins[f] == 3
        assert bins.codes[f].tolist() == [0, 2, 1, 2]

    def test_bit_identical_rebuild(self, small_synth):
        table, _ = small_synth
        tr, _ = split_train_test(table, 0.8, seed=0)
        b1 = build_bins(table, tr, 64)
        b2 = build_bins(table, tr, 64)
        assert np.array_equal(b1.codes, b2.codes)
        for name in b1.boundaries:
            assert np.array_equal(b1.boundaries[name], b2.boundaries[name])

    def test_group_pseudo_feature(self, small_synth):
        table, _ = small_synth
        tr, _ = split_train_test(table, 0.8, seed=0)
        bins = build_bins(table, tr, 16, feature_names=("credit_score", "group"))
        f = bins.feature_names.index("group")
        assert bins.n_bins[f] == 2
        assert np.array_equal(bins.codes[f], table.group.astype(np.int32))

    def test_max_bins_validated(self, small_synth):
        table, _ = small_synth
        with pytest.raises(InvalidConfig):
            build_bins(table, np.arange(10), max_bins=1)

    @given(st.integers(min_value=2, max_value=32), st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_bin_codes_always_in_range(self, max_bins, seed):
        rng = np.random.default_rng(seed)
        vals = rng.normal(size=50).astype(np.float64)
        vals[rng.random(50) < 0.2] = np.nan
        table = make_table(numeric={"x": vals})
        bins = build_bins(table, np.arange(50), max_bins=max_bins)
        f = bins.feature_names.index("x")
        assert bins.codes[f].max() <= bins.missing_bin(f)
        assert bins.codes[f].min() >= 0
        edges = bins.boundaries["x"]
        assert np.all(np.diff(edges) > 0)
