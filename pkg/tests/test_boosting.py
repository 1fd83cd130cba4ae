import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_table
from fairlend.boosting import (
    BoostParams,
    BoostedEnsemble,
    FairObjectiveParams,
    FeatureHistogram,
    LeafDecision,
    ParamGrid,
    SplitDecision,
    TreeNode,
    cross_validate,
    fair_logistic_objective,
    find_best_split,
    load_model,
    logistic_objective,
    predict_denial_prob,
    predict_margin,
    save_model,
    train,
)
from fairlend.errors import EmptyTrainingSet, InvalidConfig, MuOutOfRange, UnknownFeature
from fairlend.tabular import build_bins, generate_synthetic, split_train_test, SyntheticConfig
from oracles import cross_entropy, oracle_split_gain


class TestObjectives:
    def test_logistic_at_zero_margin(self):
        grad, hess = logistic_objective(np.zeros(2), np.array([1, 0]))
        assert grad.tolist() == [-0.5, 0.5]
        assert hess.tolist() == [0.25, 0.25]

    def test_logistic_large_margin_matches_sigmoid(self):
        # direct sigmoid evaluation: p = 1/(1+e^-10), grad = p - 1
        p = 1.0 / (1.0 + np.exp(-10.0))
        grad, _ = logistic_objective(np.array([10.0]), np.array([1]))
        assert grad[0] == pytest.approx(p - 1.0, abs=1e-12)
        assert grad[0] == pytest.approx(-4.5397868702434395e-05, rel=1e-9)

    def test_fair_at_zero_margin(self):
        grad, hess = fair_logistic_objective(
            np.zeros(2), np.array([1, 0]), np.array([1, 0]), mu=0.2
        )
        assert grad[0] == pytest.approx(-0.4)
        assert hess[0] == pytest.approx(0.2)
        assert grad[1] == pytest.approx(0.4)
        assert hess[1] == pytest.approx(0.2)

    def test_mu_out_of_range(self):
        with pytest.raises(MuOutOfRange):
            fair_logistic_objective(np.zeros(1), np.zeros(1), np.zeros(1), mu=1.0)
        with pytest.raises(MuOutOfRange):
            FairObjectiveParams(mu=-0.1)

    @given(
        st.lists(st.floats(-20, 20), min_size=1, max_size=40),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    @settings(max_examples=50, deadline=None)
    def test_fair_mu_zero_equals_logistic_elementwise(self, margins, seed):
        m = np.asarray(margins)
        rng = np.random.default_rng(seed)
        d = rng.integers(0, 2, size=m.size)
        s = rng.integers(0, 2, size=m.size)
        g0, h0 = logistic_objective(m, d)
        g1, h1 = fair_logistic_objective(m, d, s, mu=0.0)
        assert np.array_equal(g0, g1)
        assert np.array_equal(h0, h1)


def hist(pairs, categorical=False):
    g, h = zip(*pairs)
    return FeatureHistogram(
        grad=np.asarray(g, dtype=np.float64),
        hess=np.asarray(h, dtype=np.float64),
        categorical=categorical,
    )


class TestFindBestSplit:
    def test_two_bin_gain(self):
        # (G,H) = (-2,1),(2,1), lambda=1: 0.5*(4/2 + 4/2 - 0/3) = 2.0
        h = hist([(-2, 1), (2, 1), (0, 0)])  # last slot = missing bin
        dec = find_best_split([h], BoostParams(n_rounds=1, min_child_weight=0.0))
        assert isinstance(dec, SplitDecision)
        assert dec.threshold_bin == 0
        assert dec.gain == pytest.approx(2.0, abs=1e-12)

    def test_min_child_weight_forces_leaf(self):
        h = hist([(-2, 1), (2, 1), (0, 0)])
        dec = find_best_split([h], BoostParams(n_rounds=1, min_child_weight=2.0))
        assert isinstance(dec, LeafDecision)
        # leaf weight = -G/(H+lambda) = -0/(2+1)
        assert dec.weight == pytest.approx(0.0)

    def test_single_nonempty_bin_is_leaf(self):
        h = hist([(3.0, 2.0), (0, 0), (0, 0)])
        dec = find_best_split([h], BoostParams(n_rounds=1))
        assert isinstance(dec, LeafDecision)
        assert dec.weight == pytest.approx(-3.0 / (2.0 + 1.0))

    def test_gain_floor_suppresses_weak_split(self):
        h = hist([(-2, 1), (2, 1), (0, 0)])
        dec = find_best_split(
            [h], BoostParams(n_rounds=1, min_child_weight=0.0, split_gain_floor=3.0)
        )
        assert isinstance(dec, LeafDecision)

    def test_missing_direction_chosen_by_gain(self):
        # missing mass has strongly negative gradient; grouping it with the
        # negative bin on the left beats sending it right
        h = hist([(-2, 1), (2, 1), (-3, 1)])
        dec = find_best_split([h], BoostParams(n_rounds=1, min_child_weight=0.0))
        assert isinstance(dec, SplitDecision)
        assert dec.missing_left

    def test_categorical_one_vs_rest(self):
        h = hist([(-4, 1), (1, 1), (1, 1), (0, 0)], categorical=True)
        dec = find_best_split([h], BoostParams(n_rounds=1, min_child_weight=0.0))
        assert isinstance(dec, SplitDecision)
        assert dec.left_categories == (0,)

    def test_matches_exhaustive_oracle_on_random_nodes(self):
        rng = np.random.default_rng(42)
        params = BoostParams(n_rounds=1, min_child_weight=1.0, l2_reg=1.0)
        for _ in range(50):
            n_features = rng.integers(1, 4)
            hists = []
            for _ in range(n_features):
                nb = int(rng.integers(2, 12))
                g = rng.normal(0, 3, size=nb + 1)
                h = np.abs(rng.normal(0, 2, size=nb + 1))
                empty = rng.random(nb + 1) < 0.2
                g[empty] = 0.0
                h[empty] = 0.0
                hists.append(FeatureHistogram(grad=g, hess=h, categorical=False))
            dec = find_best_split(hists, params)
            expected = oracle_split_gain(hists, 1.0, 1.0, 0.0)
            if expected is None:
                assert isinstance(dec, LeafDecision)
            else:
                assert isinstance(dec, SplitDecision)
                assert dec.gain == pytest.approx(expected, abs=1e-9)


@pytest.fixture(scope="module")
def train_setup():
    table, labels = generate_synthetic(SyntheticConfig(n_rows=3000, seed=4))
    tr, te = split_train_test(table, 0.8, seed=1)
    feats = tuple(f for f in table.feature_names if f != "tract") + ("group",)
    bins = build_bins(table, tr, 64, feature_names=feats)
    denial = (1 - labels.actual).astype(np.uint8)
    return table, labels, tr, te, bins, denial


class TestTrain:
    def test_degenerate_labels_constant_model(self):
        table = make_table(numeric={"x": [1.0, 2.0, 3.0, 4.0]})
        bins = build_bins(table, np.arange(4), max_bins=4)
        model = train(bins, np.zeros(4, dtype=np.uint8), BoostParams(n_rounds=5))
        assert len(model.trees) == 0
        p = predict_denial_prob(model, table)
        assert np.allclose(p, 1e-7, atol=1e-9)

    def test_empty_training_set(self):
        table = make_table(numeric={"x": [1.0, 2.0]})
        bins = build_bins(table, np.arange(2), max_bins=4)
        with pytest.raises(EmptyTrainingSet):
            train(bins.subset(np.array([], dtype=np.int64)), np.array([], dtype=np.uint8),
                  BoostParams(n_rounds=1))

    def test_one_round_stump_on_separating_feature(self):
        # feature bin 0 -> all denials, bin 1 -> all approvals
        table = make_table(numeric={"x": [1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]})
        d = np.array([1, 1, 1, 1, 0, 0, 0, 0], dtype=np.uint8)
        bins = build_bins(table, np.arange(8), max_bins=2)
        params = BoostParams(n_rounds=1, learning_rate=1.0, max_depth=1, min_child_weight=0.0)
        model = train(bins, d, params)
        assert len(model.trees) == 1
        stump = model.trees[0]
        assert not stump.is_leaf and stump.feature == "x"
        # oracle stump: Newton leaf weights -G/(H+1) on each side of the only threshold
        base = model.base_margin
        p = 1.0 / (1.0 + np.exp(-base))
        g, h = p - d, p * (1 - p) * np.ones(8)
        wl = -g[:4].sum() / (h[:4].sum() + 1.0)
        wr = -g[4:].sum() / (h[4:].sum() + 1.0)
        assert stump.left.weight == pytest.approx(wl, abs=1e-12)
        assert stump.right.weight == pytest.approx(wr, abs=1e-12)
        margins = predict_margin(model, table)
        assert cross_entropy(margins, d) < cross_entropy(np.full(8, base), d)

    def test_newton_step_single_leaf_decreases_loss(self):
        # constant feature: no split candidates, tree is one Newton-step leaf
        table = make_table(numeric={"x": [3.0] * 10})
        d = np.array([1, 0, 0, 0, 0, 0, 1, 0, 0, 0], dtype=np.uint8)
        bins = build_bins(table, np.arange(10), max_bins=4)
        params = BoostParams(n_rounds=1, learning_rate=1.0, max_depth=3,
                             min_child_weight=0.0, l2_reg=0.0)
        model = train(bins, d, params)
        assert len(model.trees) == 1 and model.trees[0].is_leaf
        base = np.full(10, model.base_margin)
        margins = predict_margin(model, table)
        assert cross_entropy(margins, d) < cross_entropy(base, d)

    def test_fair_mu_zero_bit_identical_to_logistic(self, train_setup):
        table, labels, tr, te, bins, denial = train_setup
        params = BoostParams(n_rounds=6, learning_rate=0.3, max_depth=3)
        b_tr = bins.subset(tr)
        plain = train(b_tr, denial[tr], params)
        fair = train(
            b_tr, denial[tr], params, objective="fair",
            group_flags=table.group[tr], fair_params=FairObjectiveParams(mu=0.0),
        )
        assert plain.base_margin == fair.base_margin
        m1 = predict_margin(plain, table)
        m2 = predict_margin(fair, table)
        assert np.array_equal(m1, m2)

    def test_group_flags_required_for_fair(self, train_setup):
        table, labels, tr, te, bins, denial = train_setup
        with pytest.raises(InvalidConfig):
            train(bins.subset(tr), denial[tr], BoostParams(n_rounds=1), objective="fair")

    def test_training_is_deterministic_and_thread_invariant(self, train_setup):
        table, labels, tr, te, bins, denial = train_setup
        params = BoostParams(n_rounds=5, learning_rate=0.3, max_depth=4)
        b_tr = bins.subset(tr)
        m1 = train(b_tr, denial[tr], params, n_threads=1)
        m2 = train(b_tr, denial[tr], params, n_threads=1)
        m4 = train(b_tr, denial[tr], params, n_threads=4)
        p1 = predict_margin(m1, table)
        assert np.array_equal(p1, predict_margin(m2, table))
        assert np.array_equal(p1, predict_margin(m4, table))


class TestPredict:
    def test_zero_tree_ensemble_constant(self):
        table = make_table(numeric={"x": [1.0, 2.0, 3.0]})
        model = BoostedEnsemble(
            base_margin=0.7, trees=(), params=BoostParams(n_rounds=0),
            feature_names=("x",), feature_kinds=("numeric",),
        )
        p = predict_denial_prob(model, table)
        assert np.allclose(p, 1.0 / (1.0 + np.exp(-0.7)))

    def test_single_leaf_tree_shifts_margin_by_eta_w(self):
        table = make_table(numeric={"x": [1.0, 2.0, 3.0]})
        params = BoostParams(n_rounds=1, learning_rate=0.25)
        base = BoostedEnsemble(
            base_margin=0.1, trees=(), params=params,
            feature_names=("x",), feature_kinds=("numeric",),
        )
        shifted = BoostedEnsemble(
            base_margin=0.1, trees=(TreeNode(weight=2.0),), params=params,
            feature_names=("x",), feature_kinds=("numeric",),
        )
        m0 = predict_margin(base, table)
        m1 = predict_margin(shifted, table)
        assert np.allclose(m1 - m0, 0.25 * 2.0)

    def test_prediction_additivity(self):
        table = make_table(numeric={"x": [0.5, 1.5, 2.5, 3.5]})
        params = BoostParams(n_rounds=2, learning_rate=0.5)
        t1 = TreeNode(feature="x", threshold=1.0, missing_left=True,
                      left=TreeNode(weight=1.0), right=TreeNode(weight=-1.0))
        t2 = TreeNode(feature="x", threshold=3.0, missing_left=False,
                      left=TreeNode(weight=0.5), right=TreeNode(weight=2.0))
        both = BoostedEnsemble(0.3, (t1, t2), params, ("x",), ("numeric",))
        only1 = BoostedEnsemble(0.3, (t1,), params, ("x",), ("numeric",))
        only2 = BoostedEnsemble(0.3, (t2,), params, ("x",), ("numeric",))
        m = predict_margin(both, table)
        m1 = predict_margin(only1, table)
        m2 = predict_margin(only2, table)
        assert np.allclose(m, m1 + m2 - 0.3)

    def test_missing_routes_by_stored_direction(self):
        table = make_table(numeric={"x": [np.nan, 0.0, 2.0]})
        params = BoostParams(n_rounds=1, learning_rate=1.0)
        tree_left = TreeNode(feature="x", threshold=1.0, missing_left=True,
                             left=TreeNode(weight=-5.0), right=TreeNode(weight=5.0))
        tree_right = TreeNode(feature="x", threshold=1.0, missing_left=False,
                              left=TreeNode(weight=-5.0), right=TreeNode(weight=5.0))
        ml = predict_margin(BoostedEnsemble(0.0, (tree_left,), params, ("x",), ("numeric",)), table)
        mr = predict_margin(BoostedEnsemble(0.0, (tree_right,), params, ("x",), ("numeric",)), table)
        assert ml[0] == -5.0 and mr[0] == 5.0
        assert ml[1] == mr[1] == -5.0
        assert ml[2] == mr[2] == 5.0

    def test_unknown_feature(self):
        table = make_table(numeric={"y": [1.0]})
        model = BoostedEnsemble(
            0.0, (), BoostParams(n_rounds=0), ("x",), ("numeric",)
        )
        with pytest.raises(UnknownFeature):
            predict_margin(model, table)

    def test_threshold_boundary_value_goes_left(self):
        table = make_table(numeric={"x": [1.0, 1.0000000001]})
        tree = TreeNode(feature="x", threshold=1.0, missing_left=True,
                        left=TreeNode(weight=-1.0), right=TreeNode(weight=1.0))
        model = BoostedEnsemble(0.0, (tree,), BoostParams(n_rounds=1, learning_rate=1.0),
                                ("x",), ("numeric",))
        m = predict_margin(model, table)
        assert m[0] == -1.0 and m[1] == 1.0


class TestSerialization:
    def test_roundtrip_bit_exact_predictions(self, train_setup, tmp_path):
        table, labels, tr, te, bins, denial = train_setup
        params = BoostParams(n_rounds=8, learning_rate=0.17, max_depth=4,
                             min_child_weight=3.0)
        model = train(bins.subset(tr), denial[tr], params)
        path = tmp_path / "model.txt"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.params == model.params
        assert loaded.feature_names == model.feature_names
        assert np.array_equal(predict_margin(model, table), predict_margin(loaded, table))

    def test_save_is_deterministic(self, train_setup, tmp_path):
        table, labels, tr, te, bins, denial = train_setup
        params = BoostParams(n_rounds=3, max_depth=3)
        model = train(bins.subset(tr), denial[tr], params)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        save_model(model, p1)
        save_model(model, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestCrossValidate:
    def test_one_point_grid_returns_it(self, train_setup):
        table, labels, tr, te, bins, denial = train_setup
        grid = ParamGrid(learning_rates=(0.3,), max_depths=(3,),
                         min_child_weights=(5.0,), max_rounds=4)
        res = cross_validate(bins.subset(tr), denial[tr], grid, folds=3, seed=0)
        p = res.best_params
        assert (p.learning_rate, p.max_depth, p.min_child_weight) == (0.3, 3, 5.0)
        assert 1 <= p.n_rounds <= 4
        assert 0.0 <= res.best_mean_auc <= 1.0

    def test_folds_partition_rows(self):
        # replicated fold construction: seeded shuffle + array_split
        n = 103
        rng = np.random.default_rng(7)
        perm = rng.permutation(n)
        folds = np.array_split(perm, 5)
        assert sum(f.size for f in folds) == n
        assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))

    def test_rerun_reproducible(self, train_setup):
        table, labels, tr, te, bins, denial = train_setup
        grid = ParamGrid(learning_rates=(0.3,), max_depths=(2,),
                         min_child_weights=(25.0,), max_rounds=3)
        r1 = cross_validate(bins.subset(tr), denial[tr], grid, folds=3, seed=5)
        r2 = cross_validate(bins.subset(tr), denial[tr], grid, folds=3, seed=5)
        assert r1.best_params == r2.best_params
        assert r1.best_mean_auc == r2.best_mean_auc


class TestBoostParams:
    def test_invariants(self):
        with pytest.raises(InvalidConfig):
            BoostParams(n_rounds=1, learning_rate=0.0)
        with pytest.raises(InvalidConfig):
            BoostParams(n_rounds=1, learning_rate=1.5)
        with pytest.raises(InvalidConfig):
            BoostParams(n_rounds=1, max_depth=0)
        with pytest.raises(InvalidConfig):
            BoostParams(n_rounds=1, min_child_weight=-1.0)
        with pytest.raises(InvalidConfig):
            BoostParams(n_rounds=-1)
