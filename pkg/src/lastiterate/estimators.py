"""scikit-learn style estimators whose coefficients are the SGD last iterate."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils import check_random_state
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .harness import schedule_for
from .problems import lasso_problem, svm_problem
from .sgd import _draws_for, simulate


def _last_iterate(problem, schedule, seed):
    T = schedule.T
    x1 = np.zeros((1, problem.dim))
    out = simulate(problem, schedule.alpha, x1, _draws_for(problem, [seed], T))
    return out.final[0], out.objectives[0]


class LastIterateSVC(ClassifierMixin, BaseEstimator):
    """Linear SVM ``mean hinge + reg/2 |x|^2`` trained by single-sample SGD.

    ``schedule`` is any family name; the default is the modified ``1/(reg t)``
    schedule.  No intercept is fitted.
    """

    def __init__(self, reg=0.1, schedule="strong_modified", n_iter=4096, radius=10.0,
                 random_state=None):
        self.reg = reg
        self.schedule = schedule
        self.n_iter = n_iter
        self.radius = radius
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"need exactly two classes, got {len(self.classes_)}")
        b = np.where(y == self.classes_[1], 1.0, -1.0)
        problem = svm_problem(X, b, float(self.reg), float(self.radius))
        sched = schedule_for(problem, self.schedule, int(self.n_iter), lam=float(self.reg))
        seed = int(check_random_state(self.random_state).randint(np.iinfo(np.int32).max))
        self.coef_, self.objective_curve_ = _last_iterate(problem, sched, seed)
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = sched.T
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, self.classes_[1], self.classes_[0])


class LastIterateLasso(RegressorMixin, BaseEstimator):
    """``mean (a.x - b)^2 + reg |x|_1`` by full-batch subgradient descent.

    Defaults to the modified constant schedule with ``C = D/G``.  No intercept
    is fitted.
    """

    def __init__(self, reg=0.2, schedule="weak_modified", n_iter=4096, radius=10.0, C=None):
        self.reg = reg
        self.schedule = schedule
        self.n_iter = n_iter
        self.radius = radius
        self.C = C

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        problem = lasso_problem(X, y, float(self.reg), float(self.radius))
        sched = schedule_for(problem, self.schedule, int(self.n_iter), C=self.C)
        self.coef_, self.objective_curve_ = _last_iterate(problem, sched, 0)
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = sched.T
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_
