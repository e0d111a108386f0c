import numpy as np
import pytest
from hypothesis import given, strategies as st

from metatweezer.fitting import (FitError, bias_lifetime_model, erf_model, exponential_model,
                                 fit_bias_lifetime, fit_erf, fit_exponential, fit_line)


@given(st.floats(0.1, 5.0), st.floats(1.0, 100.0), st.floats(0.05, 2.0))
def test_exponential_exact_recovery(off, amp, tau):
    t = np.linspace(0, 2, 40)
    res = fit_exponential(np.column_stack([t, exponential_model(t, off, amp, tau)]))
    assert res.converged
    assert res["tau"] == pytest.approx(tau, rel=1e-6)
    assert res.residual_norm < 1e-6 * amp


@given(st.floats(10.0, 20.0), st.floats(0.3, 3.0))
def test_erf_exact_recovery(center, width):
    x = np.linspace(5, 25, 30)
    y = erf_model(x, 1.0, center, width, 0.1)
    res = fit_erf(np.column_stack([x, y]))
    assert res["center"] == pytest.approx(center, abs=1e-6)
    assert res["width"] == pytest.approx(width, rel=1e-5)


def test_bias_lifetime_recovery_and_extrapolation():
    b = np.linspace(0.4, 0.8, 21)
    tau = bias_lifetime_model(b, 1.0, 0.1, 0.59, 0.05)
    res = fit_bias_lifetime(np.column_stack([b, tau]))
    assert res["b_opt"] == pytest.approx(0.59, abs=1e-8)
    assert not res.flags
    mono = fit_bias_lifetime(np.column_stack([b, 1 + b]))
    assert "extrapolation" in mono.flags


def test_degenerate_inputs():
    x = np.arange(10.0)
    with pytest.raises(FitError):
        fit_exponential(np.column_stack([x, np.ones(10)]))
    with pytest.raises(FitError):
        fit_erf(np.column_stack([x, np.ones(10)]))
    with pytest.raises(FitError):
        fit_erf(np.column_stack([x[:3], x[:3]]))
    with pytest.raises(FitError):
        fit_bias_lifetime(np.column_stack([x, -np.ones(10)]))


def test_line_and_serialization():
    x = np.arange(5.0)
    res = fit_line(np.column_stack([x, 2 * x + 1]))
    assert res["slope"] == pytest.approx(2) and res["intercept"] == pytest.approx(1)
    d = res.as_dict()
    assert set(d) >= {"parameters", "uncertainties", "residual_norm", "converged"}
