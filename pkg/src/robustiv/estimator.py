"""Scikit-learn style estimator wrapping the robust confidence procedures.

Follows the instrumental-variables extension of the estimator API: ``fit``
takes the exposure as ``X``, the outcome as ``y``, and the instruments as a
required ``Z`` argument, mirroring how IV estimators in the ecosystem
compose with pipelines and parameter search. Hyperparameters round-trip
through ``get_params``/``set_params``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import DataError
from .inversion import GridSpec
from .model import IVDataset, SubsetSpec
from .teststats import tsls_fit
from .union import (
    AnalysisConfig,
    SensitivityResult,
    robust_ci,
    robust_ci_pretest,
    sensitivity_sweep,
)


class RobustIVCI(BaseEstimator):
    """Confidence set for a causal effect robust to invalid instruments.

    Inverts a test statistic over every candidate invalid-instrument set of
    size ``u - 1`` and takes the union of the per-subset confidence sets,
    optionally screening subsets with a Sargan pretest. The result covers
    the true effect with probability at least ``1 - alpha`` whenever fewer
    than ``u`` instruments are invalid, without knowing which ones.

    Parameters
    ----------
    u : int, default=1
        Invalidity bound: strictly fewer than ``u`` instruments are assumed
        invalid. ``u = 1`` reproduces the classical all-valid analysis.
    alpha : float, default=0.05
        Miscoverage level of the confidence set.
    test : {"ar", "tsls", "clr"}, default="ar"
        Test statistic inverted per subset.
    pretest : bool, default=False
        Screen subsets with a Sargan test before inverting.
    alpha1, alpha2 : float, optional
        Pretest/inversion split with ``alpha1 + alpha2 = alpha``; defaults
        to ``(0.2, 0.8) * alpha``.
    add_intercept : bool, default=True
        Include an intercept among the exogenous covariates.
    grid : GridSpec, optional
        Search grid for CLR inversion (default: auto per subset).
    mc_draws : int, default=10000
        Draws for CLR conditional critical values.
    seed : int, default=0
        Seed for the CLR draws.

    Attributes
    ----------
    confidence_set_ : RealIntervalSet
        The robust confidence set.
    report_ : RobustCIReport
        Per-subset intervals, pretest outcomes, and inclusion flags.
    estimate_ : float
        TSLS point estimate treating all instruments as valid.
    first_stage_f_ : float
        Instrument-strength F statistic of the full instrument set.
    n_features_in_ : int
        Number of exposure columns seen during fit (always 1).

    Examples
    --------
    >>> import numpy as np
    >>> from robustiv import RobustIVCI
    >>> rng = np.random.default_rng(0)
    >>> Z = rng.normal(size=(500, 4))
    >>> D = Z @ np.full(4, 0.5) + rng.normal(size=500)
    >>> Y = 2.0 * D + rng.normal(size=500)
    >>> est = RobustIVCI(u=2, alpha=0.05, test="ar").fit(D, Y, Z=Z)
    >>> est.confidence_set_.contains(2.0)
    True
    """

    def __init__(
        self,
        u: int = 1,
        alpha: float = 0.05,
        test: str = "ar",
        pretest: bool = False,
        alpha1: float | None = None,
        alpha2: float | None = None,
        add_intercept: bool = True,
        grid: GridSpec | None = None,
        mc_draws: int = 10_000,
        seed: int = 0,
    ):
        self.u = u
        self.alpha = alpha
        self.test = test
        self.pretest = pretest
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.add_intercept = add_intercept
        self.grid = grid
        self.mc_draws = mc_draws
        self.seed = seed

    def _config(self) -> AnalysisConfig:
        return AnalysisConfig(
            u=self.u,
            alpha=self.alpha,
            test=self.test,
            pretest=self.pretest,
            alpha1=self.alpha1,
            alpha2=self.alpha2,
            grid=self.grid,
            mc_draws=self.mc_draws,
            seed=self.seed,
        )

    def fit(self, X, y, Z=None, C=None):
        """Compute the robust confidence set.

        Parameters
        ----------
        X : array-like of shape (n,) or (n, 1)
            Exposure whose causal effect on ``y`` is of interest.
        y : array-like of shape (n,)
            Outcome.
        Z : array-like of shape (n, L)
            Candidate instruments. Required; keyword for signature
            compatibility with pipeline utilities.
        C : array-like of shape (n, p), optional
            Exogenous covariates, residualized out before testing.

        Returns
        -------
        self
        """
        if Z is None:
            raise DataError("instruments Z are required to fit RobustIVCI")
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise DataError(
                    f"exactly one exposure column is supported, got {X.shape[1]}"
                )
            X = X[:, 0]
        data = IVDataset.from_arrays(
            y=y, d=X, z=Z, x=C, add_intercept=self.add_intercept
        )
        config = self._config()
        if self.pretest:
            report = robust_ci_pretest(data, config)
        else:
            report = robust_ci(data, config)
        full = SubsetSpec(indices=(), n_candidates=data.n_instruments)
        naive_fit = tsls_fit(data, full)

        self.dataset_ = data
        self.report_ = report
        self.confidence_set_ = report.interval_set
        self.estimate_ = naive_fit.beta_hat
        self.first_stage_f_ = naive_fit.first_stage_f
        self.n_features_in_ = 1
        return self

    def contains(self, beta0: float) -> bool:
        """Membership of a hypothesized effect in the fitted set."""
        self._check_fitted()
        return self.confidence_set_.contains(beta0)

    def sensitivity(
        self, u_values=None, null_value: float = 0.0
    ) -> SensitivityResult:
        """Sweep the invalidity bound on the fitted data.

        Reruns the fitted procedure at each bound in ``u_values`` (default
        ``1..L``) and reports where the set first contains ``null_value``.
        """
        self._check_fitted()
        if u_values is None:
            u_values = range(1, self.dataset_.n_instruments + 1)
        return sensitivity_sweep(
            self.dataset_, self._config(), list(u_values), null_value
        )

    def _check_fitted(self) -> None:
        if not hasattr(self, "confidence_set_"):
            raise DataError("this RobustIVCI instance is not fitted yet")

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = True
        return tags
