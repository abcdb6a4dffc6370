import math
import pathlib
import sys

import numpy as np

import lyapcert

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "oracles"))
import certificate_oracle as oracle  # noqa: E402


def test_parameter_count():
    assert lyapcert.MlpArchitecture(2, 20).param_count() == 648


def test_value_and_gradient_match_numpy_oracle():
    arch = lyapcert.MlpArchitecture()
    theta = oracle.deterministic_theta()
    params = lyapcert.unflatten(arch, theta.tolist())
    for x in ([0.3, -0.7], [1.5, 2.0], [-2.0, 0.1]):
        x = np.array(x)
        assert math.isclose(lyapcert.eval_V(params, x), oracle.value(theta, 2, 20, x), rel_tol=1e-12)
        assert np.allclose(lyapcert.grad_x_V(params, x), oracle.grad_x(theta, 2, 20, x), rtol=1e-10, atol=0)


def test_seed_one_value():
    params = lyapcert.init_params(lyapcert.MlpArchitecture(), 1)
    assert math.isclose(lyapcert.eval_V(params, np.array([1.0, 1.0])), 2.5797489650348555, rel_tol=1e-12)
    net = lyapcert.CertificateNet(params)
    xs = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert np.allclose(net.values(xs), [2.5797489650348555, 0.0])


def test_rollout_shapes():
    times, states, derivs = lyapcert.pendulum_rollout(lyapcert.PendulumParams(), np.array([1.0, 0.0]))
    assert times.shape == (161,)
    assert states.shape == (161, 2)
    assert derivs.shape == (161, 2)
    assert abs(states[-1]).max() < abs(states[0]).max()


def test_identities():
    assert lyapcert.nested_sum_count(5, 2) == lyapcert.binomial(5, 2) == 10
    t_star, value = lyapcert.peak_t_exp(2.0)
    assert t_star == 0.5
    assert math.isclose(value, 1 / (2 * math.e), rel_tol=1e-12)
    assert math.isclose(lyapcert.gen_bound(0.0, 0.1, 1.0, 100, 0.05, 1.0), 0.038297647188019465, rel_tol=1e-12)


def test_run_bounds_and_bad_command(tmp_path):
    cfg = tmp_path / "b.ini"
    cfg.write_text("[bounds]\neps_x = 0.1\n")
    assert lyapcert.run("bounds", cfg, out=tmp_path / "out") == 0
    assert (tmp_path / "out" / "bounds.json").exists()
    cfg.write_text("[bounds]\neps_x = 2\n")
    assert lyapcert.run("bounds", cfg, out=tmp_path / "bad") == 5
    assert lyapcert.run("nope", cfg) == 1
