import numpy as np
import pytest

from fairlend.tabular import (
    ApplicationTable,
    LabelSet,
    SyntheticConfig,
    generate_synthetic,
)


@pytest.fixture(scope="session")
def small_synth():
    """A 6,000-row synthetic dataset shared by read-only tests."""
    table, labels = generate_synthetic(SyntheticConfig(n_rows=6000, seed=5))
    return table, labels


def make_table(
    numeric=None, categorical=None, categories=None, group=None, n=None,
    county_feature=None, tract_feature=None,
):
    """Hand-rolled ApplicationTable for focused unit tests."""
    numeric = {k: np.asarray(v, dtype=np.float64) for k, v in (numeric or {}).items()}
    categorical = {k: np.asarray(v, dtype=np.int32) for k, v in (categorical or {}).items()}
    if n is None:
        any_col = next(iter(numeric.values()), None)
        if any_col is None:
            any_col = next(iter(categorical.values()))
        n = len(any_col)
    if categories is None:
        categories = {
            k: tuple(str(i) for i in range(int(v.max()) + 1 if len(v) else 1))
            for k, v in categorical.items()
        }
    if group is None:
        group = np.zeros(n, dtype=bool)
    return ApplicationTable(
        n_rows=n,
        numeric_features=numeric,
        categorical_features=categorical,
        categories=categories,
        group=np.asarray(group, dtype=bool),
        row_id=np.arange(n, dtype=np.int64),
        county_feature=county_feature,
        tract_feature=tract_feature,
    )


def make_labels(actual, biased=None):
    labels = LabelSet.from_actual(np.asarray(actual, dtype=np.uint8))
    if biased is not None:
        labels = labels.with_biased(np.asarray(biased, dtype=np.uint8))
    return labels
