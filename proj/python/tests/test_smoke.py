import math

import numpy as np
import pytest

import adpbench


def test_estimators_agree_on_full_rank_data():
    rng = np.random.default_rng(1)
    phi = rng.normal(size=(200, 4))
    phi[:, 0] = 1.0
    nxt = 0.5 * phi + rng.normal(scale=0.3, size=phi.shape)
    nxt[:, 0] = 1.0
    c = rng.normal(size=200)
    iv = adpbench.solve_bellman("IV", phi, nxt, c, 0.9)
    proj = adpbench.solve_bellman("LS-Projected", phi, nxt, c, 0.9)
    np.testing.assert_allclose(iv, proj, rtol=1e-8, atol=1e-10)
    direct = np.linalg.solve(phi.T @ (phi - 0.9 * nxt), phi.T @ c)
    np.testing.assert_allclose(iv, direct, rtol=1e-9)


def test_iv_regression_recovers_slope():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(20000, 1))
    y = 2.0 * x[:, 0] + rng.normal(scale=0.1, size=20000)
    noisy = x + rng.normal(scale=0.5, size=x.shape)
    theta = adpbench.solve_iv_regression(noisy, y, x)
    assert abs(theta[0] - 2.0) < 0.05


def test_value_iteration_two_state_swap():
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    values, policy, iterations = adpbench.value_iteration([swap], np.array([[1.0], [0.0]]), 0.5, 1e-10)
    np.testing.assert_allclose(values, [4 / 3, 2 / 3], atol=1e-9)
    assert list(policy) == [0, 0]
    assert iterations > 0
    np.testing.assert_allclose(adpbench.policy_value([swap], np.array([[1.0], [0.0]]), 0.5, [0, 0]), values, atol=1e-9)


def test_expected_max_improvement_closed_form():
    assert adpbench.expected_max_improvement([0.0, 0.0], [-1.0, 1.0]) == pytest.approx(math.sqrt(2 / math.pi))


def test_kgcp_is_zero_at_noise_free_observation():
    pts = [np.array([0.2]), np.array([0.7])]
    args = dict(lower=np.zeros(1), upper=np.ones(1), signal_variance=1.0, length_scales=np.array([0.3]),
                noise_variance=0.0, prior_mean=0.0)
    assert adpbench.kgcp(pts, [1.0, -1.0], candidate=pts[0], **args) == 0.0
    assert adpbench.kgcp(pts, [1.0, -1.0], candidate=np.array([0.45]), **args) >= 0.0


def test_calibration_fits():
    rng = np.random.default_rng(3)
    y = np.zeros(50000)
    for t in range(1, len(y)):
        y[t] = 0.7633 * y[t - 1] + 0.402 * rng.normal()
    assert adpbench.fit_ar1(y.tolist())["coefficient"] == pytest.approx(0.7633, abs=0.01)


def test_problem_table_and_metrics():
    ids = adpbench.problem_ids()
    assert len(ids) == 30 and ids[0] == "1"
    p = adpbench.problem_definition(1, 1 / 3)
    assert p["levels"]["resource"] == 11
    assert adpbench.percent_of_optimal([1.0, 3.0], [2.0, 0.0]) == (0.5, 1, 1)


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        adpbench.problem_definition("99")
    with pytest.raises(ValueError):
        adpbench.fit_ar1([2.0] * 20)
    phi = np.ones((10, 2))
    with pytest.raises(adpbench.NumericalError):
        adpbench.solve_bellman("IV", phi, phi, np.ones(10), 0.5)


def test_run_experiment_is_deterministic():
    config = {"problem": "1", "scale": 1 / 9, "method": "ivapi", "runs": 2, "m_iterations": 2, "n_samples": 200,
              "evaluation_paths": 10, "horizon": 200}
    a = adpbench.run_experiment(config)
    b = adpbench.run_experiment(config)
    a.pop("timing")
    b.pop("timing")
    assert a == b
    assert a["metric"] == "percent_of_optimal"
    assert len(a["runs"]) == 2
    assert a["config_hash"] == adpbench.config_hash(config)
    summary, sweep = adpbench.summarize([a])
    assert summary.splitlines()[1].startswith("1,ivapi,")
    assert sweep.count("\n") == 2
