import numpy as np
import pytest

from factorcast import pmsm
from factorcast.data import SeriesSet, Series
from factorcast.errors import FormatError, InstabilityError, ParameterError


def rk4_motor(params, u, omega, steps, i0, refine=10):
    """Classical RK4 at dt/refine with the voltage held over each coarse step."""
    R, Ld, Lq, psi = params.R, params.L_d, params.L_q, params.psi

    def f(i, ud, uq):
        return np.array(
            [(ud - R * i[0] + omega * Lq * i[1]) / Ld, (uq - R * i[1] - omega * Ld * i[0] - omega * psi) / Lq]
        )

    h = params.dt / refine
    i = np.array(i0, dtype=float)
    out = [i.copy()]
    for t in range(steps - 1):
        for _ in range(refine):
            k1 = f(i, u[0, t], u[1, t])
            k2 = f(i + h / 2 * k1, u[0, t], u[1, t])
            k3 = f(i + h / 2 * k2, u[0, t], u[1, t])
            k4 = f(i + h * k3, u[0, t], u[1, t])
            i = i + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(i.copy())
    return np.array(out).T


def test_equilibrium_at_rest():
    params = pmsm.MotorParams(psi=1e-9)
    zeros = np.zeros(20)
    i_d, i_q = pmsm.simulate_motor(pmsm.MotorParams(), zeros, zeros, 0.0, 20)
    assert np.all(i_d == 0) and np.all(i_q == 0)
    i_d, i_q = pmsm.simulate_motor(params, zeros, zeros, 0.0, 20)
    assert np.all(i_d == 0) and np.all(i_q == 0)


def test_free_decay_is_geometric():
    p = pmsm.MotorParams()
    zeros = np.zeros(30)
    i_d, i_q = pmsm.simulate_motor(p, zeros, zeros, 0.0, 30, i0=(1.0, 0.0))
    ratio = 1 - p.dt * p.R / p.L_d
    assert np.allclose(i_d, ratio ** np.arange(30), rtol=1e-12)
    assert np.all(i_q == 0)


@pytest.mark.parametrize(
    "u,omega",
    [((60.0, 60.0), 150.0), ((-60.0, 60.0), 0.0), ((60.0, -60.0), 75.0), ((-3.0, -60.0), 150.0)],
)
def test_against_rk4_oracle(u, omega):
    p = pmsm.MotorParams()
    volts = np.tile(np.array(u)[:, None], (1, 100))
    i_d, i_q = pmsm.simulate_motor(p, volts[0], volts[1], omega, 100)
    ref = rk4_motor(p, volts, omega, 100, (0.0, 0.0))
    assert np.max(np.abs(np.stack([i_d, i_q]) - ref)) < 1e-3


def test_euler_converges_first_order():
    volts = np.tile(np.array([[40.0], [-25.0]]), (1, 2000))
    errs = []
    for dt in (2e-5, 1e-5):
        p = pmsm.MotorParams(dt=dt)
        steps = int(round(2e-3 / dt)) + 1
        i_d, i_q = pmsm.simulate_motor(p, volts[0], volts[1], 120.0, steps, i0=(5.0, -5.0))
        ref = rk4_motor(p, volts, 120.0, steps, (5.0, -5.0))
        errs.append(np.max(np.abs(np.stack([i_d, i_q]) - ref)))
    assert 1.8 < errs[0] / errs[1] < 2.2


def test_decoupled_without_flux_and_speed():
    p = pmsm.MotorParams(psi=1e-12)
    rng = np.random.default_rng(0)
    ud, uq = rng.uniform(-50, 50, 50), rng.uniform(-50, 50, 50)
    base_d, base_q = pmsm.simulate_motor(p, ud, uq, 0.0, 50)
    pert_d, pert_q = pmsm.simulate_motor(p, ud, uq + 5.0, 0.0, 50)
    assert np.array_equal(base_d, pert_d)
    assert not np.array_equal(base_q, pert_q)
    pert_d, pert_q = pmsm.simulate_motor(p, ud + 5.0, uq, 0.0, 50)
    assert np.array_equal(base_q, pert_q)


def test_param_validation():
    with pytest.raises(ParameterError):
        pmsm.MotorParams(R=0.0)
    with pytest.raises(ParameterError, match="spectral radius"):
        pmsm.MotorParams(dt=5e-2)


def test_current_guard():
    p = pmsm.MotorParams(i_max=1.0)
    volts = np.full(3000, 60.0)
    with pytest.raises(InstabilityError):
        pmsm.simulate_motor(p, volts, volts, 0.0, 3000)


def test_voltage_bound():
    with pytest.raises(ParameterError):
        pmsm.simulate_motor(pmsm.MotorParams(), [100.0], [0.0], 0.0, 2)


@pytest.mark.parametrize("mode,sign", [("iid", 1.0), ("ood", -1.0)])
def test_quadrant_purity(mode, sign):
    pairs = pmsm.sample_quadrant_controls(pmsm.QuadrantSplit(), mode, 20, 300, seed=4)
    for u, _ in pairs:
        assert np.all(np.sign(u[0]) * np.sign(u[1]) == sign)
        assert np.all(np.abs(u) <= pmsm.MotorParams().u_max)


def test_quadrant_shape_contract():
    pairs = pmsm.sample_quadrant_controls(pmsm.QuadrantSplit(), "iid", 3, 10, seed=1)
    assert len(pairs) == 3
    assert all(u.shape == (2, 10) for u, _ in pairs)
    assert len({w for _, w in pairs}) == 3


def test_split_validation():
    with pytest.raises(ParameterError):
        pmsm.QuadrantSplit(iid=(1, 2), ood=(2, 4))
    with pytest.raises(ParameterError):
        pmsm.QuadrantSplit().quadrants("test")


def test_generated_series_deterministic():
    a = pmsm.generate_series_set(pmsm.QuadrantSplit(), "ood", 2, 30, seed=9)
    b = pmsm.generate_series_set(pmsm.QuadrantSplit(), "ood", 2, 30, seed=9)
    for s, t in zip(a, b):
        assert np.array_equal(s.x, t.x) and np.array_equal(s.u, t.u) and s.param == t.param


def test_csv_round_trip(tmp_path):
    sset = pmsm.generate_series_set(pmsm.QuadrantSplit(), "iid", 3, 40, seed=2)
    path = tmp_path / "motor.csv"
    pmsm.export_csv(path, sset)
    back = pmsm.ingest_csv(path)
    assert len(back) == 3
    for s, t in zip(sset, back):
        assert np.array_equal(s.x, t.x) and np.array_equal(s.u, t.u)
        assert s.param == t.param and s.series_id == t.series_id


def test_ingest_two_rows(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("t,i_d,i_q,u_d,u_q,omega_r,series_id\n0,0.1,0.2,1,2,50,7\n1,0.3,0.4,1,2,50,7\n")
    sset = pmsm.ingest_csv(path)
    assert len(sset) == 1 and sset.series[0].length == 2
    assert sset.series[0].x.tolist() == [[0.1, 0.3], [0.2, 0.4]]


def test_ingest_missing_column(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("t,i_d,i_q,u_d,omega_r,series_id\n0,0,0,1,50,0\n")
    with pytest.raises(FormatError, match="u_q"):
        pmsm.ingest_csv(path)


def test_ingest_column_map(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("time,id,iq,vd,vq,w,run\n0,1,2,3,4,5,0\n1,1,2,3,4,5,0\n")
    cmap = {"t": "time", "i_d": "id", "i_q": "iq", "u_d": "vd", "u_q": "vq", "omega_r": "w", "series_id": "run"}
    sset = pmsm.ingest_csv(path, cmap)
    assert sset.series[0].u.tolist() == [[3.0, 3.0], [4.0, 4.0]]


def test_ingest_non_numeric(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("t,i_d,i_q,u_d,u_q,omega_r,series_id\n0,0,0,1,2,50,0\n1,abc,0,1,2,50,0\n")
    with pytest.raises(FormatError, match=r"row 3.*'i_d'"):
        pmsm.ingest_csv(path)


def test_ingest_non_monotonic_time(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("t,i_d,i_q,u_d,u_q,omega_r,series_id\n0,0,0,1,2,50,0\n1,0,0,1,2,50,0\n1,0,0,1,2,50,0\n")
    with pytest.raises(FormatError, match="row 4"):
        pmsm.ingest_csv(path)
