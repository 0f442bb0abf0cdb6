import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from calabiflow.estimators import CalabiFlow, DecayRateEstimator, LegendreTransformer
from calabiflow.flow import DiagnosticsRecord, FlowConfig, FlowTrace
from calabiflow.initial import random_bandlimited
from calabiflow.torus_field import GridSpec

from conftest import cos_potential


def test_calabi_flow_fit():
    spec = GridSpec(2, 16, 1.0)
    u0 = random_bandlimited(spec, 2, 0.5, 2)
    est = CalabiFlow(t_end=2e-7).fit(u0)
    assert est.trace_.termination == "t_end"
    assert est.final_ is est.trace_.snapshots[-1][1]
    e = est.energies()
    assert e["Ca"][-1] < e["Ca"][0]


def test_calabi_flow_params():
    est = CalabiFlow(t_end=1.0, sigma=0.2)
    c = clone(est)
    assert c.get_params()["sigma"] == 0.2
    with pytest.raises(NotFittedError):
        c.energies()
    with pytest.raises(TypeError):
        est.fit(np.zeros(4))


def test_legendre_transformer_round_trip():
    u = cos_potential(GridSpec(1, 64, 1.0), 1e-3)
    lt = LegendreTransformer().fit()
    back = lt.inverse_transform(lt.transform(u))
    assert np.max(np.abs(back.psi.values - u.psi.values)) < 1e-8


def test_decay_rate_estimator():
    tr = FlowTrace(FlowConfig(t_end=1.0))
    for t in np.linspace(0, 1, 11):
        tr.records.append(DiagnosticsRecord(t, 0.0, 2 * np.exp(-5 * t), 0, 0, 0, 0, 1, 1, 0, 0, 0))
    est = DecayRateEstimator(tail_fraction=0.5).fit(tr)
    assert est.rate_ == pytest.approx(5.0, rel=1e-12)
    assert est.r_squared_ == pytest.approx(1.0, abs=1e-12)
    assert est.predict([0.0])[0] == pytest.approx(2.0, rel=1e-12)
