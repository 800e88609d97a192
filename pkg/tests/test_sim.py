import numpy as np
import pytest

from instab.errors import ConfigError, DivisionError, MismatchError
from instab.lmi import max_threshold
from instab.model import scalar, van_der_pol
from instab.moments import divergence_envelope, propagate_moments
from instab.sim import Controller, SimConfig, audit_constraint, compare_to_oracle, simulate


def _oracle(model, K, cfg):
    return propagate_moments(model, K, cfg.x0, cfg.t_end, cfg.dt_out)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(dt=0.0)
    with pytest.raises(ConfigError):
        SimConfig(dt=1.0, t_end=0.5)
    with pytest.raises(ConfigError):
        SimConfig(n_paths=0)
    with pytest.raises(ConfigError):
        simulate(scalar(1, 1, 0, 1), Controller.linear(np.eye(2)), SimConfig())


def test_determinism_single_path():
    m = van_der_pol(1.5, 2, 2, 1)
    cfg = SimConfig(dt=1e-3, t_end=1.0, n_paths=1, seed=11)
    a = simulate(m, Controller.zero(), cfg)
    b = simulate(m, Controller.zero(), cfg)
    np.testing.assert_array_equal(a.mean_x2, b.mean_x2)


def test_paths_independent_of_threads_and_count():
    m = scalar(1.0, 1.0, 0.5, 1.0)
    cfg = SimConfig(dt=1e-2, t_end=1.0, n_paths=3000, seed=5)
    a = simulate(m, Controller.linear([[-2.0]]), cfg, threads=1)
    b = simulate(m, Controller.linear([[-2.0]]), cfg, threads=3)
    np.testing.assert_array_equal(a.mean_x2, b.mean_x2)


def test_prop2_short_run():
    m = scalar(1.5, 1.0, 0.0, 1.0)
    cfg = SimConfig(dt=1e-3, t_end=3.0, n_paths=4000, seed=3)
    rep = simulate(m, Controller.linear([[-3.0]]), cfg)
    assert compare_to_oracle(rep, _oracle(m, [[-3.0]], cfg)) <= 4
    assert audit_constraint(rep, 3.0)[0]
    assert not audit_constraint(rep, 1.0)[0]
    assert (rep.u_power_avg >= 0).all()


def test_zero_controller_audit_and_exact_zero():
    m = van_der_pol(1.5, d=0.0)
    cfg = SimConfig(dt=1e-2, t_end=1.0, n_paths=50)
    rep = simulate(m, Controller.zero(), cfg)
    assert audit_constraint(rep, 2.0) == (True, 0.0)
    assert compare_to_oracle(rep, _oracle(m, None, cfg)) == 0.0
    assert audit_constraint(rep, 0.0) == (True, 0.0)


def test_division_error():
    m = scalar(1.5, 1.0, 0.0, 1.0)
    rep = simulate(m, Controller.linear([[-3.0]]), SimConfig(dt=1e-2, t_end=0.5, n_paths=20))
    with pytest.raises(DivisionError):
        audit_constraint(rep, 0.0)


def test_unstable_scalar_matches_closed_form():
    m = scalar(1.0, 1.0, 0.0, 1.0)
    cfg = SimConfig(dt=1e-3, t_end=3.0, n_paths=4000, seed=1)
    rep = simulate(m, Controller.zero(), cfg)
    traj = _oracle(m, None, cfg)
    np.testing.assert_allclose(traj.mean_x2, np.expm1(2 * traj.times) / 2, rtol=1e-8, atol=1e-12)
    assert compare_to_oracle(rep, traj) <= 4


def test_oracle_mismatch():
    m = scalar(1.5, 1.0, 0.0, 1.0)
    cfg = SimConfig(dt=1e-2, t_end=1.0, n_paths=10)
    rep = simulate(m, Controller.saturated([[-3.0]], 1.0), cfg)
    with pytest.raises(MismatchError):
        compare_to_oracle(rep, _oracle(m, [[-3.0]], cfg))
    rep = simulate(m, Controller.zero(), cfg)
    with pytest.raises(MismatchError):
        compare_to_oracle(rep, propagate_moments(m, None, None, 1.0, 0.1))


def test_saturation_caps_power():
    m = scalar(1.5, 1.0, 0.0, 1.0)
    rep = simulate(m, Controller.saturated([[-30.0]], 0.25), SimConfig(dt=1e-2, t_end=2.0, n_paths=200))
    assert rep.u_power_avg.max() <= 0.25 + 1e-12


def test_frozen_paths_flagged():
    m = scalar(40.0, 0.0, 0.0, 1.0)
    rep = simulate(m, Controller.zero(), SimConfig(dt=1e-2, t_end=1.5, n_paths=16, x0=(1.0,)))
    assert rep.diverged and rep.frac_frozen[-1] == 1.0


def test_zero_controller_above_envelope(setting):
    m = setting(5)
    cert = max_threshold(m).certificate
    curve = divergence_envelope(m, cert, 0.5)
    rep = simulate(m, Controller.zero(), SimConfig(dt=1e-3, t_end=5.0, n_paths=2000, seed=2), R=cert.R)
    assert np.all(rep.mean_V >= curve(rep.times) - 3 * rep.stderr_V)


@pytest.mark.slow
def test_policy_independence(setting):
    m = setting(5)
    cert = max_threshold(m).certificate
    cfg = SimConfig(dt=1e-3, t_end=6.0, n_paths=2000, seed=4)
    K = np.array([[-1.0, -3.0]])  # stabilizes A + BK when unconstrained
    for ctrl in (Controller.zero(), Controller.saturated(K, 0.5)):
        rep = simulate(m, ctrl, cfg, R=cert.R)
        first = rep.mean_V[rep.times <= 1.0].mean()
        assert rep.mean_V[-1] > 10 * first


def test_csv_layout(tmp_path):
    rep = simulate(scalar(1.5, 1.0, 0.0, 1.0), Controller.zero(), SimConfig(dt=0.1, t_end=1.0, n_paths=5))
    rep.to_csv(tmp_path / "s.csv")
    raw = (tmp_path / "s.csv").read_bytes()
    assert raw.splitlines()[0] == b"t,mean_x2,stderr_x2,mean_V,u_power_avg,frac_frozen"
    assert b"\r" not in raw
