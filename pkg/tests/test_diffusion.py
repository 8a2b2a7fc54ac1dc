"""Simulator of the reflected diffusion and its lift."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cleradii.diffusion import (FOUR_PI, TWO_PI, SimConfig, lift_fold, path_functional_martingale,
                                sample_exit, sample_exit_batch, sample_level_hit,
                                sample_one_arm_exit, simulate_exits, simulate_path,
                                simulate_truncated, step)
from cleradii.errors import CensoringError, DomainError
from cleradii.lawlib import as_kappa, cdf_B, mean_B
from cleradii.martingales import L_theta
from cleradii.stats import EmpiricalLaw, ks_critical_value, ks_statistic, slope_fit

from conftest import MC_DT, MC_N

KAPPAS = [3.0, 4.0, 5.0, 6.0, 7.0]


# ---------------------------------------------------------------- fold map

@pytest.mark.parametrize("x, r", [(-math.pi, math.pi), (5 * math.pi, math.pi),
                                  (4 * math.pi, 0.0), (2 * math.pi, 2 * math.pi),
                                  (-6 * math.pi, 2 * math.pi), (0.0, 0.0)])
def test_lift_fold_examples(x, r):
    assert lift_fold(x) == pytest.approx(r, abs=1e-12)


@given(st.floats(-1e3, 1e3))
def test_lift_fold_properties(x):
    r = lift_fold(x)
    assert 0.0 <= r <= TWO_PI
    assert lift_fold(-x) == pytest.approx(r, abs=1e-9)
    assert lift_fold(x + FOUR_PI) == pytest.approx(r, abs=1e-9)
    if abs(x) <= TWO_PI:
        assert r == pytest.approx(abs(x), abs=1e-12)


def test_lift_fold_vectorised():
    x = np.array([-math.pi, 5 * math.pi, 4 * math.pi])
    assert np.allclose(lift_fold(x), [math.pi, math.pi, 0.0])


# ---------------------------------------------------------------- single Euler step

@given(st.floats(0.5, 5.5), st.floats(-2, 2))
def test_step_zero_drift_at_kappa_4(theta, z):
    dt = 1e-4
    assert step(theta, dt, z, 4) == pytest.approx(theta + 2 * math.sqrt(dt) * z, abs=1e-13)


def test_step_drift_sign_near_levels():
    dt = 1e-4
    assert step(0.1, dt, 0.0, 6) > 0.1          # repelled from 0 when kappa > 4
    assert step(-0.1, dt, 0.0, 6) < -0.1
    assert step(TWO_PI - 0.1, dt, 0.0, 6) < TWO_PI - 0.1
    assert step(0.1, dt, 0.0, 3) < 0.1          # attracted when kappa < 4
    assert step(TWO_PI + 0.1, dt, 0.0, 3) < TWO_PI + 0.1


@pytest.mark.parametrize("kappa", [3.0, 6.0, 7.5])
def test_step_local_drift(kappa):
    # near 2 pi k the drift is (kappa - 4) / (theta - 2 pi k)
    x, dt = 1e-3, 1e-10
    for level in (0.0, TWO_PI, -FOUR_PI):
        move = (step(level + x, dt, 0.0, kappa) - (level + x)) / dt
        assert move == pytest.approx((kappa - 4.0) / x, rel=1e-6)


def test_step_fixed_point_and_cap_and_reflection():
    assert step(math.pi, 1e-3, 0.0, 6) == pytest.approx(math.pi, abs=1e-15)
    # the drift move is capped at half the distance to the level
    assert step(1e-3, 1e-2, 0.0, 3) == pytest.approx(5e-4)
    assert step(1e-3, 1e-2, 0.0, 7.9) == pytest.approx(1.5e-3)
    # a crossing of the level is reflected back
    assert step(0.1, 1e-2, -1.0, 4) == pytest.approx(0.1)
    assert step(TWO_PI - 0.1, 1e-2, 1.0, 4) == pytest.approx(TWO_PI - 0.1)


def test_step_rejects_large_dt():
    with pytest.raises(DomainError):
        step(1.0, 1e-2, 0.0, 6, dt_max=1e-3)
    with pytest.raises(DomainError):
        step(1.0, 0.0, 0.0, 6)


# ---------------------------------------------------------------- configuration

def test_config_validation():
    cfg = SimConfig(6)
    assert cfg.max_time == pytest.approx(1e4 * mean_B(6))
    assert cfg.kappa == as_kappa(6)
    for bad in (dict(dt_max=0.0), dict(dt_floor=1e-2, dt_max=1e-3), dict(dt_max=0.5),
                dict(max_time=math.inf), dict(seed=-1), dict(zone_width=0.0)):
        with pytest.raises(DomainError):
            SimConfig(6, **bad)
    with pytest.raises(DomainError):
        SimConfig(8.0)
    with pytest.raises(DomainError):
        simulate_exits(SimConfig(6, theta0=7.0), 10)
    with pytest.raises(DomainError):
        simulate_exits(SimConfig(6), 0)


def test_config_manifest_fields():
    d = SimConfig(6).as_dict()
    assert d["rng"].startswith("philox4x64-10")
    assert d["step_const"] == 0.05
    assert d["zone_width"] == "inf"


# ---------------------------------------------------------------- exits

def test_start_on_the_boundary():
    up = sample_exit(SimConfig(6, theta0=TWO_PI))
    down = sample_exit(SimConfig(6, theta0=-TWO_PI))
    assert (up.exit_time, up.exit_side, down.exit_time, down.exit_side) == (0.0, 1, 0.0, -1)


def test_batch_of_one_is_sample_exit():
    cfg = SimConfig(5, dt_max=MC_DT, seed=11)
    one = sample_exit(cfg)
    b = simulate_exits(cfg, 1)
    assert b.exit_time[0] == one.exit_time and b.exit_side[0] == one.exit_side
    assert b.steps[0] == one.steps and b.index[0] == 0
    assert sample_exit_batch(cfg, 1).samples[0] == one.exit_time
    assert one.exit_time > 0 and one.exit_side in (-1, 1)


def test_start_offset_matches_indexed_paths():
    cfg = SimConfig(6, dt_max=MC_DT, seed=3)
    b = simulate_exits(cfg, 4, start=10)
    for j in range(4):
        s = sample_exit(cfg, index=10 + j)
        assert (b.exit_time[j], b.exit_side[j], b.index[j]) == (s.exit_time, s.exit_side, 10 + j)


def test_determinism_and_worker_independence():
    cfg = SimConfig(6, dt_max=MC_DT, seed=99)
    a = simulate_exits(cfg, 5000, workers=1)
    b = simulate_exits(cfg, 5000, workers=4)
    c = simulate_exits(cfg, 5000, workers=4)
    for x in (b, c):
        assert a.exit_time.tobytes() == x.exit_time.tobytes()
        assert a.exit_side.tobytes() == x.exit_side.tobytes()
        assert a.steps.tobytes() == x.steps.tobytes()
    assert a.provenance == c.provenance
    assert a.law().provenance == a.provenance
    other = simulate_exits(SimConfig(6, dt_max=MC_DT, seed=100), 5000)
    assert other.provenance != a.provenance
    assert not np.array_equal(other.exit_time, a.exit_time)


def test_censoring():
    cfg = SimConfig(6, dt_max=MC_DT, max_time=0.5)
    with pytest.raises(CensoringError):
        simulate_exits(cfg, 100)
    with pytest.raises(CensoringError):
        sample_exit(cfg)
    t, alive = simulate_truncated(SimConfig(6, dt_max=MC_DT), 2000, 5.0)
    assert np.all(t[alive] > 5.0) and np.all(t[~alive] <= 5.0)
    assert abs(np.mean(alive) - (1 - cdf_B(6, 5.0))) < 4 * math.sqrt(0.25 / 2000)


# ---------------------------------------------------------------- distributional invariants

@pytest.mark.parametrize("kappa", KAPPAS)
def test_exit_law_ks(mc, kappa):
    b = mc.exits(kappa)
    assert b.censored == 0
    d = ks_statistic(b.law(), lambda x: cdf_B(kappa, x))
    assert d < ks_critical_value(len(b)), d


@pytest.mark.parametrize("kappa", KAPPAS)
def test_exit_mean(mc, kappa):
    law = mc.exits(kappa).law()
    assert abs(law.mean() - mean_B(kappa)) < 3 * law.stderr()


@pytest.mark.parametrize("kappa", KAPPAS)
def test_exit_side_symmetry(mc, kappa):
    b = mc.exits(kappa)
    assert set(np.unique(b.exit_side)) <= {-1, 1}
    assert abs(np.mean(b.exit_side == 1) - 0.5) < 3 * math.sqrt(1 / (4 * len(b)))


@pytest.mark.parametrize("kappa, target", [(4.0, math.pi ** 2), (6.0, 2 * math.sqrt(3) * math.pi)])
def test_exit_mean_examples(mc, kappa, target):
    assert abs(mc.exits(kappa).law().mean() / target - 1) < 0.02


def test_step_halving(mc):
    # weak-convergence sanity: halving the step moves KS and mean by less than MC error
    coarse, fine = mc.exits(6.0), mc.exits(6.0, dt_max=MC_DT / 2)
    cdf = lambda x: cdf_B(6, x)
    dks = abs(ks_statistic(coarse.law(), cdf) - ks_statistic(fine.law(), cdf))
    assert dks < ks_critical_value(MC_N)
    a, b = coarse.law(), fine.law()
    assert abs(a.mean() - b.mean()) < 3 * math.hypot(a.stderr(), b.stderr())


def test_tail_slope_kappa_6(mc):
    law = mc.exits(6.0).law()
    s = np.linspace(30, 80, 11)
    fit = slope_fit(np.column_stack([s, np.log(law.survival(s))]))
    assert abs(fit.slope / (-5 / 48) - 1) < 0.10


@pytest.mark.parametrize("kappa", [3.0, 6.0])
@pytest.mark.parametrize("theta0", [math.pi / 2, math.pi, 3 * math.pi / 2])
def test_expected_hit_matches_L(mc, kappa, theta0):
    x = mc.level_hits(kappa, theta0)
    assert set(np.unique(x)) <= {0.0, TWO_PI}
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - L_theta(kappa, theta0)) < 3 * se


def test_level_hit_lifted_coordinates():
    x = sample_level_hit(SimConfig(6, theta0=-3 * math.pi / 2, dt_max=MC_DT), 500)
    assert set(np.unique(x)) <= {-TWO_PI, 0.0}
    assert np.all(sample_level_hit(SimConfig(6, theta0=TWO_PI), 3) == TWO_PI)


# ---------------------------------------------------------------- recorded paths

@pytest.mark.parametrize("kappa", [4.0, 5.0, 6.0, 7.5])
def test_path_invariants(kappa):
    cfg = SimConfig(kappa, dt_max=1e-3, seed=5)
    pooled = []
    for i in range(5):
        p = simulate_path(cfg, i)
        ex = sample_exit(cfg, i)
        assert p.complete
        assert p.times[0] == 0.0 and np.all(np.diff(p.times) > 0)
        assert p.times[-1] == ex.exit_time and p.thetas[-1] == ex.exit_side * TWO_PI
        f = p.folded
        assert np.all((f >= 0) & (f <= TWO_PI))
        assert np.max(np.abs(np.diff(f))) < 8 * math.sqrt(kappa * cfg.dt_max)
        assert set(np.unique(p.coin_flips)) <= {-1, 1}
        pooled.append(f)
    f = np.concatenate(pooled)
    near = (f < 1e-6) | (f > TWO_PI - 1e-6)
    assert near.mean() < 1e-3


def test_path_occupation_below_kappa_4():
    # for kappa < 4 the set 2 pi Z is hit but carries no time; the occupation of
    # [0, delta] scales like delta^d with d = (3 kappa - 8) / kappa
    kappa = 3.0
    cfg = SimConfig(kappa, dt_max=1e-3, seed=5)
    f = np.concatenate([simulate_path(cfg, i).folded[1:-1] for i in range(40)])
    assert np.count_nonzero(f == 0.0) == 0
    deltas = np.logspace(-6, -2, 5)
    frac = np.array([np.mean(f < x) for x in deltas])
    fit = slope_fit(np.column_stack([np.log(deltas), np.log(frac)]))
    assert abs(fit.slope - (3 * kappa - 8) / kappa) < 0.05


def test_path_capacity_truncates():
    p = simulate_path(SimConfig(6, dt_max=1e-3), 0, capacity=10)
    assert not p.complete and p.times.size == 10


def test_lifted_path_coins_applied():
    cfg = SimConfig(3.0, dt_max=1e-3, seed=2)
    p = simulate_path(cfg, 0)
    assert p.coin_flips.size >= 2
    # after each return to 0 the lifted sign follows the coin
    signs = np.sign(p.thetas[1:])
    flips = np.flatnonzero(np.diff(signs) != 0)
    assert flips.size > 0


# ---------------------------------------------------------------- martingale functional

def test_martingale_lambda_zero():
    r = path_functional_martingale(SimConfig(6), 0.0, [1.0, 5.0])
    assert np.all(r.means == 1) and np.all(r.stderrs == 0) and r.within().all()


def test_martingale_rejects_growth():
    with pytest.raises(DomainError):
        path_functional_martingale(SimConfig(6), 0.1, [1.0])
    with pytest.raises(DomainError):
        path_functional_martingale(SimConfig(6), -0.1, [])


# ---------------------------------------------------------------- other paths

def test_one_arm_regression():
    # kappa' = 10 maps to kappa = 4 kappa' / (kappa' - 2) = 5 with time scaled by 2 / (kappa - 4)
    t = 2.0 * sample_one_arm_exit(10.0, 20_000, seed=4, dt_max=MC_DT)
    law = EmpiricalLaw(t)
    assert ks_statistic(law, lambda x: cdf_B(5, x)) < ks_critical_value(law.n)
    with pytest.raises(DomainError):
        sample_one_arm_exit(3.0, 10)


def test_euler_bulk_option():
    cfg = SimConfig(6, dt_max=1e-3, zone_width=0.5, seed=8)
    assert cfg.as_dict()["zone_width"] == 0.5
    law = simulate_exits(cfg, 2000).law()
    assert abs(law.mean() - mean_B(6)) < 3 * law.stderr() + 0.01 * mean_B(6)
    assert ks_statistic(law, lambda x: cdf_B(6, x)) < ks_critical_value(law.n)
