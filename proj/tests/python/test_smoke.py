import json
import math
import pathlib

import numpy as np
import pytest
import scipy.linalg

import dcmwalk

SCENARIOS = pathlib.Path(__file__).resolve().parents[2] / "scenarios"


def test_natural_frequency():
    w, wd = dcmwalk.natural_frequency(0.85)
    assert w == pytest.approx(math.sqrt(9.81 / 0.85))
    assert wd == 0.0
    with pytest.raises(ValueError):
        dcmwalk.natural_frequency(-1.0)


def test_dcm_and_cmp():
    xi = dcmwalk.dcm_from_state([0.1, 0.0], [0.3, -0.2], 3.0)
    np.testing.assert_allclose(xi, [0.2, -0.2 / 3.0])
    cmp = dcmwalk.cmp_from_cop([0.0, 0.0], [0.0, 9.0], 90.0)
    # Hdot_y shifts the CMP forward by Hdot_y / (m g).
    np.testing.assert_allclose(cmp, [9.0 / (90.0 * 9.81), 0.0])


def continuous(w, mass, g, zdd):
    a = np.zeros((4, 4))
    b = np.zeros((4, 2))
    a[0, 0] = w
    a[0, 3] = -w
    a[0, 2] = -w / (mass * (g + zdd))
    a[1, 0] = w
    a[1, 1] = -w
    b[2, 0] = 1.0
    b[3, 1] = 1.0
    return a, b


def test_discretize_matches_expm():
    w, mass, g, T = 3.4, 90.0, 9.81, 0.05
    A, B = dcmwalk.discretize(w, 0.0, 0.0, mass, g, T, "zoh")
    a, b = continuous(w, mass, g, 0.0)
    m = np.zeros((6, 6))
    m[:4, :4] = a
    m[:4, 4:] = b
    e = scipy.linalg.expm(m * T)
    np.testing.assert_allclose(A, e[:4, :4], atol=1e-12)
    np.testing.assert_allclose(B, e[:4, 4:], atol=1e-12)
    Ae, Be = dcmwalk.discretize(w, 0.0, 0.0, mass, g, T, "euler")
    np.testing.assert_allclose(Ae, np.eye(4) + a * T, atol=1e-14)
    with pytest.raises(ValueError):
        dcmwalk.discretize(w, 0.0, 0.0, mass, g, T, "rk4")


def test_condense_recursion():
    rng = np.random.default_rng(3)
    stages = [(np.eye(4) + 0.1 * rng.standard_normal((4, 4)), rng.standard_normal((4, 2))) for _ in range(5)]
    phi_k, phi_u = dcmwalk.condense(stages)
    psi0 = rng.standard_normal(4)
    u = rng.standard_normal(10)
    psi = psi0
    out = []
    for j, (A, B) in enumerate(stages):
        psi = A @ psi + B @ u[2 * j:2 * j + 2]
        out.append(psi)
    np.testing.assert_allclose(phi_k @ psi0 + phi_u @ u, np.concatenate(out), atol=1e-12)


def test_solve_qp_box():
    H = np.eye(2)
    f = np.array([-2.0, -2.0])
    E = np.array([[1.0, 0.0], [0.0, 1.0]])
    F = np.array([-1.0, -0.5])
    s = dcmwalk.solve_qp(H, f, E=E, F=F)
    assert s["status"] == "optimal"
    np.testing.assert_allclose(s["x"], [1.0, 0.5], atol=1e-9)
    s = dcmwalk.solve_qp(H, f, E=np.array([[1.0, 0.0], [-1.0, 0.0]]), F=np.array([1.0, 0.0]))
    assert s["status"] == "infeasible"


def test_scenario_round_trip_and_errors():
    s = dcmwalk.Scenario.load(str(SCENARIOS / "fig6_full.json"))
    echoed = json.loads(s.to_json())
    again = dcmwalk.Scenario.from_json(s.to_json())
    assert json.loads(again.to_json()) == echoed
    with pytest.raises(ValueError):
        dcmwalk.Scenario.from_json('{"gait": {"step_count": -1}}')
    with pytest.raises(ValueError):
        s.with_mode("walk-fast")


def test_simulate_nominal_and_pushed():
    base = dcmwalk.Scenario.load(str(SCENARIOS / "fig4_baseline.json")).with_pushes([])
    log = dcmwalk.simulate(base)
    assert log["outcome"] == "completed"
    n = log["t"].shape[0]
    assert log["com"].shape == (n, 2) and log["xi"].shape == (n, 2)
    assert not log["push_active"].any()
    assert max(log["terminal"]) < 1e-5
    # Baseline never modulates the CMP.
    np.testing.assert_allclose(log["cmp"], log["cop"], atol=1e-12)

    fell = dcmwalk.simulate(base.with_pushes([(1400.0, 0.0, 1.0, 0.1)]))
    assert fell["outcome"] == "fell"
    assert fell["fall"]["rule"] in ("qp-infeasible", "dcm-divergence", "com-cop-distance")


def test_envelope_brackets_boundary():
    s = dcmwalk.Scenario.load(str(SCENARIOS / "fig4_baseline.json")).with_mode("cop-only")
    e = dcmwalk.max_recoverable_push(s, [1.0, 0.0], tolerance=20.0)
    assert not e["unbounded"]
    lo, hi = e["bracket"]
    assert hi - lo <= 20.0
    assert e["magnitude"] == lo
