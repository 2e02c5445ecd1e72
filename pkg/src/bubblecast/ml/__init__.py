"""From-scratch learners for the bubble-label prediction stage."""
from .tree import DecisionTree, RegressionTree, Split, best_split, best_split_regression, impurity
from .ensemble import (
    EnsembleModel,
    fit_adaboost,
    fit_bagging,
    fit_gradient_boosting,
    fit_tree,
    logistic_loss,
    sigmoid,
)
from .baselines import fit_baseline, fit_knn, fit_logistic, fit_naive_bayes
from .dataset import FEATURES, Dataset, read_dataset
from .multilabel import (
    ModelSpec,
    MultilabelModel,
    enforce_hierarchy,
    feature_importance,
    fit_model,
    fit_multilabel,
    load_model,
    predict,
    predict_multilabel,
    rank_scores,
    save_model,
)
