"""scikit-learn style wrappers around the solvers and the fractional operators."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import dynamics, fracalc, profiles
from ._extend import Extension
from .grid import GridFunction, make_geometric_grid, make_uniform_grid
from .kernel import KernelSpec


class ProfileEstimator(BaseEstimator):
    """Self-similar profile of ``a(x, y) = w (x^alpha y^beta + x^beta y^alpha)``.

    ``fit`` runs the solver (no data is needed); ``predict`` evaluates the
    profile at the sizes in ``X``.

    Example
    -------
    >>> est = ProfileEstimator(alpha=0.0, beta=0.0, n=128).fit()
    >>> est.predict([[1.0]])  # close to exp(-1)
    """

    def __init__(self, alpha=0.0, beta=0.0, weight=1.0, mass=1.0, n=512, y_min=1e-4, y_max=50.0,
                 tol=1e-8, max_iter=400, omega=0.5, method="fixed-point"):
        self.alpha = alpha
        self.beta = beta
        self.weight = weight
        self.mass = mass
        self.n = n
        self.y_min = y_min
        self.y_max = y_max
        self.tol = tol
        self.max_iter = max_iter
        self.omega = omega
        self.method = method

    def fit(self, X=None, y=None):
        k = KernelSpec.single(self.alpha, self.beta, self.weight)
        grid = make_geometric_grid(self.y_min, self.y_max, self.n)
        if self.method == "fixed-point":
            opts = profiles.SolverOptions(tol=self.tol, max_iter=self.max_iter, omega=self.omega)
            sol = profiles.solve(k, self.mass, opts, grid)
        elif self.method == "relax":
            start = GridFunction(grid, np.exp(-grid.nodes))
            sol = dynamics.relax_to_profile(k, start, dynamics.RelaxOptions(tol=self.tol), mass=self.mass)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.solution_ = sol
        self.kernel_ = k
        self.tau_ = sol.tau
        self.K0_ = sol.K0
        self.n_iter_ = sol.iterations
        self.residual_ = sol.residual
        self._ext = Extension(sol.g)
        return self

    def predict(self, X):
        """``g`` at every entry of ``X`` (any shape; zero beyond ``y_max``)."""
        check_is_fitted(self, "solution_")
        X = np.asarray(X, dtype=float)
        if np.any(X <= 0):
            raise ValueError("sizes must be positive")
        return self._ext(X.ravel()).reshape(X.shape)

    @property
    def grid_(self):
        check_is_fitted(self, "solution_")
        return self.solution_.grid


class _Fractional(TransformerMixin, BaseEstimator):
    # rows of X are functions sampled at h, 2h, ..., n h with h = y_max / n

    def __init__(self, k=0.5, side="left", y_max=None):
        self.k = k
        self.side = side
        self.y_max = y_max

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=3)
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")
        if not self.k >= 0:
            raise ValueError("k must be nonnegative")
        self.n_features_in_ = X.shape[1]
        y_max = float(X.shape[1]) if self.y_max is None else float(self.y_max)
        self.grid_ = make_uniform_grid(y_max, X.shape[1])
        return self

    def _apply(self, X, op_left, op_right):
        check_is_fitted(self, "grid_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        if self.k == 0:
            return X.copy()
        op = op_left if self.side == "left" else op_right
        return np.vstack([op(GridFunction(self.grid_, row), self.k).values for row in X])


class FractionalIntegral(_Fractional):
    """Riemann-Liouville integral of order ``k`` applied to each row."""

    def transform(self, X):
        return self._apply(X, fracalc.left_integral, fracalc.right_integral)

    def inverse_transform(self, X):
        return self._apply(X, fracalc.left_derivative, fracalc.right_derivative)


class FractionalDerivative(_Fractional):
    """Riemann-Liouville derivative of order ``k`` applied to each row."""

    def transform(self, X):
        return self._apply(X, fracalc.left_derivative, fracalc.right_derivative)

    def inverse_transform(self, X):
        return self._apply(X, fracalc.left_integral, fracalc.right_integral)
