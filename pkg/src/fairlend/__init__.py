"""Boosted loan-decision models with counterfactual bias injection and de-biasing."""

from .bias import BiasInjectionReport, inject_location_bias, inject_random_bias
from .boosting import (
    BoostParams,
    BoostedEnsemble,
    CVResult,
    FairObjectiveParams,
    FeatureHistogram,
    LeafDecision,
    ParamGrid,
    SplitDecision,
    TreeNode,
    cross_validate,
    default_param_grid,
    fair_logistic_objective,
    find_best_split,
    load_model,
    logistic_objective,
    predict_approval_prob,
    predict_denial_prob,
    predict_margin,
    save_model,
    train,
)
from .debias import (
    DebiasSpec,
    DecisionThreshold,
    MethodResult,
    avg_over_prohibited,
    calibrate_threshold,
    compute_gamma,
    max_over_groups,
    max_over_groups_scores,
    run_method,
    substituted_scores,
)
from .evaluation import (
    EvalReport,
    auc,
    auc_matrix,
    denial_rate_table,
    disposition_panel,
)
from .experiment import ExperimentConfig, load_config, run_experiment
from .tabular import (
    ApplicationTable,
    BinnedMatrix,
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

__version__ = "0.1.0"
