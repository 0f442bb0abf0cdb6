"""scikit-learn style wrappers around the functional core.

The estimators only hold hyperparameters and fitted state; all numerics live
in :mod:`calabiflow.flow` and :mod:`calabiflow.legendre`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .flow import FlowConfig, FlowTrace, fit_decay_rate, run
from .legendre import KahlerPotential, to_kahler, to_symplectic
from .potential import SymplecticPotential

__all__ = ["CalabiFlow", "LegendreTransformer", "DecayRateEstimator"]


class CalabiFlow(BaseEstimator):
    """Integrate the flow from an initial potential.

    ``fit(u0)`` sets ``trace_`` (the full :class:`FlowTrace`) and ``final_``
    (the last accepted potential).
    """

    def __init__(self, t_end=1e-3, sigma=0.5, dt_min=1e-18, ca_stop=None,
                 record_every=1, m_segments=64, seed=0):
        self.t_end = t_end
        self.sigma = sigma
        self.dt_min = dt_min
        self.ca_stop = ca_stop
        self.record_every = record_every
        self.m_segments = m_segments
        self.seed = seed

    def _config(self) -> FlowConfig:
        return FlowConfig(**self.get_params())

    def fit(self, u0: SymplecticPotential, y=None, callback=None):
        if not isinstance(u0, SymplecticPotential):
            raise TypeError("fit expects a SymplecticPotential")
        self.trace_ = run(u0, self._config(), callback=callback)
        self.final_ = self.trace_.snapshots[-1][1]
        return self

    def energies(self) -> dict:
        """Energy time series of the fitted run."""
        check_is_fitted(self, "trace_")
        return {k: self.trace_.column(k) for k in ("t", "Ca", "Ma", "L2")}


class LegendreTransformer(TransformerMixin, BaseEstimator):
    """Symplectic -> Kähler-side transform; ``inverse_transform`` goes back."""

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def transform(self, X: SymplecticPotential) -> KahlerPotential:
        return to_kahler(X)

    def inverse_transform(self, X: KahlerPotential) -> SymplecticPotential:
        return to_symplectic(X)


class DecayRateEstimator(BaseEstimator):
    """Exponential fit ``column(t) ~ A exp(-rate t)`` over a trace's tail."""

    def __init__(self, tail_fraction=0.5, column="Ca"):
        self.tail_fraction = tail_fraction
        self.column = column

    def fit(self, trace: FlowTrace, y=None):
        res = fit_decay_rate(trace, self.tail_fraction, self.column)
        self.rate_ = res["rate"]
        self.r_squared_ = res["r_squared"]
        self.flagged_ = res["flagged"]
        t = trace.column("t")
        y = trace.column(self.column)
        # anchor the prefactor on the last positive sample
        k = np.flatnonzero(y > 0)[-1]
        self.t_ref_, self.value_ref_ = float(t[k]), float(y[k])
        return self

    def predict(self, t) -> np.ndarray:
        check_is_fitted(self, "rate_")
        t = np.asarray(t, dtype=float)
        return self.value_ref_ * np.exp(-self.rate_ * (t - self.t_ref_))
