import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridfreq.epc import EpcConfig, epc_power, gain_per_unit, max_gain
from gridfreq.errors import DomainError, ModelFormatError


def _cfg(g=250.0, f_activ=-0.4, headroom=float("inf"), law="threshold_referenced"):
    return EpcConfig(link="L", g_prime=g, f_activ=f_activ, p_headroom=headroom, law=law)


def test_inactive_above_threshold():
    assert epc_power(-0.3, _cfg()) == 0.0
    assert epc_power(0.2, _cfg()) == 0.0


def test_threshold_referenced_value():
    # 250 MW/Hz gain, deviation 1.226 Hz below a -0.4 Hz threshold
    assert epc_power(-1.226, _cfg()) == pytest.approx(250.0 * (1.226 - 0.4), rel=1e-12)


def test_headroom_clamp():
    assert epc_power(-2.0, _cfg(headroom=300.0)) == pytest.approx(300.0)


def test_continuous_at_activation():
    eps = 1e-9
    assert epc_power(-0.4 - eps, _cfg()) == pytest.approx(0.0, abs=1e-5)


def test_literal_law_steps_at_activation():
    cfg = _cfg(law="literal")
    assert epc_power(-0.39, cfg) == 0.0
    assert epc_power(-0.41, cfg) == pytest.approx(250.0 * 0.41, rel=1e-12)
    # latched: output follows -g'*df even after recovery above the threshold
    assert epc_power(-0.2, cfg, latched=True) == pytest.approx(50.0, rel=1e-12)
    assert epc_power(+0.1, cfg, latched=True) == 0.0   # never pulls power out


def test_droop_grid_matches_hand_formula():
    rng = np.random.default_rng(7)
    df = rng.uniform(-2.5, 0.5, size=1000)
    gains = rng.uniform(0.0, 600.0, size=1000)
    for law in ("threshold_referenced", "literal"):
        got = np.array([epc_power(d, _cfg(g=g, headroom=400.0, law=law))
                        for d, g in zip(df, gains)])
        if law == "threshold_referenced":
            hand = np.where(df > -0.4, 0.0, -gains * (df + 0.4))
        else:
            hand = np.where(df <= -0.4, np.maximum(-gains * df, 0.0), 0.0)
        hand = np.minimum(hand, 400.0)
        assert np.array_equal(got, hand)


def test_vectorized_evaluation():
    df = np.linspace(-1.0, 0.0, 11)
    out = epc_power(df, _cfg())
    assert out.shape == df.shape
    assert out[-1] == 0.0 and out[0] == pytest.approx(150.0)


def test_gain_per_unit_examples():
    assert gain_per_unit(250.0, 500.0, 50.0) == pytest.approx(25.0)
    assert gain_per_unit(0.0, 700.0) == 0.0
    # identical MW/Hz gains differ in per-unit across ratings
    g_sk4 = gain_per_unit(250.0, 700.0)
    g_hub = gain_per_unit(250.0, 2100.0)
    assert g_sk4 == pytest.approx(3.0 * g_hub, rel=1e-12)


def test_gain_per_unit_rejects_bad_rating():
    with pytest.raises(DomainError):
        gain_per_unit(100.0, 0.0)


def test_max_gain_reference_case():
    assert max_gain(300.0, -0.4, -1.226) == pytest.approx(363.2, abs=0.1)


def test_max_gain_trivial_cases():
    assert max_gain(0.0, -0.4, -1.0) == 0.0
    assert max_gain(100.0, -0.4, -0.5) == pytest.approx(1000.0, rel=1e-12)


def test_max_gain_domain_error():
    with pytest.raises(DomainError):
        max_gain(100.0, -0.4, -0.3)


def test_config_validation():
    with pytest.raises(ModelFormatError):
        EpcConfig(link="L", g_prime=-1.0)
    with pytest.raises(ModelFormatError):
        EpcConfig(link="L", g_prime=1.0, f_activ=0.1)
    with pytest.raises(ModelFormatError):
        EpcConfig(link="L", g_prime=1.0, law="ramp")


@given(df=st.floats(-3.0, 1.0), g=st.floats(0.0, 1000.0), head=st.floats(0.0, 500.0))
def test_output_bounds(df, g, head):
    out = epc_power(df, _cfg(g=g, headroom=head))
    assert 0.0 <= out <= head + 1e-12
