"""scikit-learn compatible wrappers.

``KaczmarzRegressor`` fits a consistent linear system by randomized
Kaczmarz. ``RNFFTransformer`` is the analysis/synthesis pair of a random
nonlinear fusion frame: ``transform`` maps each row ``x`` to its atoms
``F_1(x), ..., F_n(x)`` (flattened), and ``inverse_transform`` sums them,
recovering ``x - R_n(x)``.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ValidationError
from .iteration import run_iteration
from .kaczmarz import LinearSystem, predicted_rates, solve_rkaczmarz
from .linalg import substream
from .operators import OperatorFamily


class KaczmarzRegressor(RegressorMixin, BaseEstimator):
    """Randomized Kaczmarz solve of ``X coef = y`` started from zero.

    Parameters
    ----------
    n_steps : int
        Row projections to perform.
    sampling : {"uniform", "row-norm"}
        Row selection law.
    random_state : int
        Master seed; the solve uses substream ``(random_state, 0)``.
    check_consistency : bool
        Reject systems without an exact solution.
    """

    def __init__(self, n_steps=1000, sampling="uniform", random_state=0, check_consistency=True):
        self.n_steps = n_steps
        self.sampling = sampling
        self.random_state = random_state
        self.check_consistency = check_consistency

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        system = LinearSystem(X, y)
        if self.check_consistency:
            system.check_consistent()
        coef, trace = solve_rkaczmarz(system, self.sampling, None, self.n_steps, substream(self.random_state, 0))
        self.coef_ = coef
        self.residual_history_ = trace.error_norms
        self.rates_ = predicted_rates(system, self.sampling)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_


class RNFFTransformer(TransformerMixin, BaseEstimator):
    """Random nonlinear fusion frame analysis of each sample.

    Row ``i`` of ``X`` is decomposed with substream ``(random_state, i)``, so
    the result for a row depends only on its position and the seed.

    Parameters
    ----------
    family : OperatorFamily
        Distribution of the averaged maps.
    n_atoms : int
        Steps of the iteration.
    random_state : int
        Master seed.
    """

    def __init__(self, family=None, n_atoms=10, random_state=0):
        self.family = family
        self.n_atoms = n_atoms
        self.random_state = random_state

    def fit(self, X, y=None):
        if not isinstance(self.family, OperatorFamily):
            raise ValidationError("RNFFTransformer needs an OperatorFamily")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.family.dim:
            raise ValueError(f"X has {X.shape[1]} features but the family acts on R^{self.family.dim}")
        self.n_features_in_ = X.shape[1]
        return self

    def _traces(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return [
            run_iteration(self.family, x, self.n_atoms, substream(self.random_state, i), store_atoms=True)
            for i, x in enumerate(X)
        ]

    def transform(self, X):
        traces = self._traces(X)
        return np.array([tr.atoms.reshape(-1) for tr in traces])

    def residuals(self, X):
        """Final residuals ``R_n(x)`` for each row."""
        return np.array([tr.final_residual for tr in self._traces(X)])

    def inverse_transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        d = self.n_features_in_
        if X.shape[1] % d:
            raise ValueError(f"atom block width {X.shape[1]} is not a multiple of {d}")
        return X.reshape(X.shape[0], -1, d).sum(axis=1)
