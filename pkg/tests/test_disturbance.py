import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perturbrl import disturbance as dist
from perturbrl import streams
from perturbrl.disturbance import DisturbanceSpec, Kind, Site
from perturbrl.errors import ConfigError


def _series(spec, n=250, rng=None):
    return [dist.sample(spec, i, rng) for i in range(n)]


def test_step_waveform_exact():
    spec = DisturbanceSpec(kind=Kind.STEP, level=2.5, dim=1)
    vals = _series(spec)
    for i, v in enumerate(vals):
        expected = 0.0 if i < 2 else 2.5
        assert v[0] == expected  # exact equality, no tolerance


def test_impulse_support_exact():
    spec = DisturbanceSpec(kind=Kind.IMPULSE, level=1.75, dim=1)
    vals = _series(spec)
    for i, v in enumerate(vals):
        expected = 1.75 if i in (2, 3) else 0.0
        assert v[0] == expected


def test_sawtooth_exact():
    spec = DisturbanceSpec(kind=Kind.SAWTOOTH, level=3.0, dim=1)
    vals = _series(spec)
    for i, v in enumerate(vals):
        if i < 2:
            assert v[0] == 0.0
        else:
            assert v[0] == 3.0 * (((i - 2) % 50) / 50)


def test_triangle_exact():
    spec = DisturbanceSpec(kind=Kind.TRIANGLE, level=2.0, dim=1)
    vals = _series(spec)
    for i, v in enumerate(vals):
        if i < 2:
            assert v[0] == 0.0
        else:
            k = (i - 2) % 50
            assert v[0] == 2.0 * (2.0 * min(k, 50 - k) / 50)


def test_periodicity():
    for kind in (Kind.SAWTOOTH, Kind.TRIANGLE):
        spec = DisturbanceSpec(kind=kind, level=1.0, dim=1, period_steps=50)
        vals = _series(spec, 152)
        for i in range(2, 102):
            assert vals[i][0] == vals[i + 50][0]


def test_triangle_symmetric_within_period():
    spec = DisturbanceSpec(kind=Kind.TRIANGLE, level=1.0, dim=1, period_steps=50)
    vals = _series(spec, 60)
    # mirror symmetry about the peak: value at phase k equals phase period-k
    for k in range(1, 50):
        assert vals[2 + k][0] == vals[2 + 50 - k][0]
    assert max(v[0] for v in vals) == 1.0


def test_onset_is_two_steps_in():
    for kind in (Kind.STEP, Kind.IMPULSE, Kind.SAWTOOTH, Kind.TRIANGLE):
        spec = DisturbanceSpec(kind=kind, level=1.0, dim=1)
        assert dist.sample(spec, 0)[0] == 0.0
        assert dist.sample(spec, 1)[0] == 0.0
    assert dist.sample(DisturbanceSpec(kind=Kind.STEP, level=1.0, dim=1), 2)[0] == 1.0


def test_noise_seed_determinism():
    spec = DisturbanceSpec(kind=Kind.WHITE_NOISE, level=0.7, dim=3)
    a = _series(spec, 50, streams.substream(5, "noise"))
    b = _series(spec, 50, streams.substream(5, "noise"))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    c = _series(spec, 50, streams.substream(6, "noise"))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


def test_white_noise_scale_linearity():
    a = _series(DisturbanceSpec(kind=Kind.WHITE_NOISE, level=1.0, dim=2), 20,
                streams.substream(1))
    b = _series(DisturbanceSpec(kind=Kind.WHITE_NOISE, level=3.0, dim=2), 20,
                streams.substream(1))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(3.0 * x, y)


def test_uniform_noise_bounds():
    spec = DisturbanceSpec(kind=Kind.UNIFORM_NOISE, level=0.4, dim=2)
    rng = streams.substream(0)
    draws = np.concatenate(_series(spec, 500, rng))
    assert np.all(np.abs(draws) <= 0.4)
    assert draws.min() < -0.3 and draws.max() > 0.3


def test_noise_requires_rng():
    spec = DisturbanceSpec(kind=Kind.WHITE_NOISE, level=1.0, dim=1)
    with pytest.raises(ConfigError):
        dist.sample(spec, 0)


def test_none_and_zero_level_are_silent():
    assert np.all(dist.sample(dist.none_spec(), 7) == 0.0)
    spec = DisturbanceSpec(kind=Kind.STEP, level=0.0, dim=1)
    assert not spec.is_active()
    assert all(v[0] == 0.0 for v in _series(spec, 20))


def test_default_directions():
    assert np.array_equal(dist.default_direction(Site.DYNAMICS, 2), [1.0, 0.0])
    d = dist.default_direction(Site.OBSERVATION, 4)
    assert abs(np.linalg.norm(d) - 1.0) <= 1e-12
    assert np.all(d == d[0])


def test_direction_validation():
    with pytest.raises(ConfigError):
        DisturbanceSpec(kind=Kind.STEP, level=1.0, dim=2, direction=np.array([1.0, 1.0]))
    with pytest.raises(ConfigError):
        DisturbanceSpec(kind=Kind.STEP, level=1.0, dim=2, direction=np.array([1.0]))
    spec = DisturbanceSpec(kind=Kind.STEP, level=2.0, dim=2,
                           direction=np.array([0.6, 0.8]))
    np.testing.assert_allclose(dist.sample(spec, 10), [1.2, 1.6], atol=1e-12)


def test_spec_validation():
    with pytest.raises(ConfigError):
        DisturbanceSpec(kind=Kind.STEP, level=-1.0)
    with pytest.raises(ConfigError):
        DisturbanceSpec(dim=0)
    with pytest.raises(ConfigError):
        DisturbanceSpec(onset_step=-1)
    with pytest.raises(ConfigError):
        DisturbanceSpec(width_steps=0)
    with pytest.raises(ConfigError):
        DisturbanceSpec(period_steps=1)
    with pytest.raises(ConfigError):
        dist.sample(dist.none_spec(), -1)


def test_apply_sites():
    obs = np.array([1.0, 2.0])
    assert np.array_equal(dist.apply(Site.OBSERVATION, obs, np.array([0.5, -0.5])),
                          [1.5, 1.5])
    act = np.array([3.0])
    assert np.array_equal(dist.apply(Site.ACTION, act, np.array([-1.0])), [2.0])
    # the dynamics site is the external force itself, not added to anything
    assert np.array_equal(dist.apply(Site.DYNAMICS, np.zeros(2), np.array([7.0, 0.0])),
                          [7.0, 0.0])
    with pytest.raises(ConfigError):
        dist.apply(Site.ACTION, np.zeros(2), np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from([Kind.STEP, Kind.IMPULSE, Kind.SAWTOOTH, Kind.TRIANGLE]),
       level=st.floats(0.0, 10.0), step=st.integers(0, 1000),
       period=st.integers(2, 200))
def test_deterministic_kinds_bounded_by_level(kind, level, step, period):
    spec = DisturbanceSpec(kind=kind, level=level, dim=1, period_steps=period)
    v = dist.sample(spec, step)
    assert np.all(np.abs(v) <= level + 1e-12)


@settings(max_examples=30, deadline=None)
@given(step=st.integers(0, 500), onset=st.integers(0, 100))
def test_silent_before_onset(step, onset):
    spec = DisturbanceSpec(kind=Kind.STEP, level=1.0, dim=1, onset_step=onset)
    v = dist.sample(spec, step)
    assert (v[0] == 0.0) == (step < onset)


def test_sample_params_degenerate_interval():
    spec = dist.ParamRandomizationSpec((("pole_length", 0.5, 0.5),))
    for s in range(5):
        draws = dist.sample_params(spec, streams.substream(s))
        assert draws == {"pole_length": 0.5}


def test_sample_params_monte_carlo_mean():
    # mid-range pole length is U(0.1, 1.0): mean 0.55
    spec = dist.DR_CARTPOLE["mid"]
    rng = streams.substream(123)
    draws = [dist.sample_params(spec, rng)["pole_length"] for _ in range(200_000)]
    assert abs(np.mean(draws) - 0.55) < 0.01
    assert min(draws) >= 0.1 and max(draws) <= 1.0


def test_sample_params_validation():
    with pytest.raises(ConfigError):
        dist.ParamRandomizationSpec((("m", 0.0, 1.0),))
    with pytest.raises(ConfigError):
        dist.ParamRandomizationSpec((("m", 2.0, 1.0),))


def test_dr_presets_cover_grid():
    assert set(dist.DR_CARTPOLE) == {"default", "low", "mid", "high"}
    assert set(dist.DR_QUADROTOR) == {"default", "low", "mid", "high"}
    low = dict((n, (lo, hi)) for n, lo, hi in dist.DR_CARTPOLE["low"].intervals)
    assert low["pole_length"] == (0.3, 0.7)
    assert low["pole_mass"] == (0.05, 0.2)
    assert low["cart_mass"] == (0.7, 1.3)
    high = dict((n, (lo, hi)) for n, lo, hi in dist.DR_CARTPOLE["high"].intervals)
    assert high["pole_length"] == (0.1, 3.0)


def test_with_level():
    spec = DisturbanceSpec(kind=Kind.STEP, level=1.0, dim=1)
    assert dist.with_level(spec, 4.0).level == 4.0
    assert dist.with_level(spec, 4.0).kind is Kind.STEP
