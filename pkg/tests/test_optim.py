import numpy as np
import pytest
from scipy.optimize import rosen, rosen_der

from latentcoach.errors import InvalidInputError, NumericalError
from latentcoach.optim import OptimConfig, maximize


def neg_rosen(x):
    return -rosen(x), -rosen_der(x)


@pytest.mark.parametrize("method,iters", [("lbfgs", 500), ("gd", 20000)])
def test_concave_quadratic_reaches_closed_form(method, iters):
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    H = A @ A.T + np.eye(4)
    b = rng.normal(size=4)

    def fun(x):
        return -0.5 * x @ H @ x + b @ x, -H @ x + b

    res = maximize(fun, np.zeros(4), OptimConfig(max_iters=iters, grad_tolerance=1e-9,
                                                 f_tolerance=0.0, method=method))
    np.testing.assert_allclose(res.x, np.linalg.solve(H, b), atol=1e-6)
    assert res.converged


def test_rosenbrock_and_strictly_increasing_trace():
    res = maximize(neg_rosen, np.array([-1.2, 1.0]),
                   OptimConfig(max_iters=2000, grad_tolerance=1e-8, f_tolerance=0.0))
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-5)
    assert all(b > a for a, b in zip(res.trace, res.trace[1:]))


def test_backtracks_over_non_finite_region():
    # objective undefined for x > 1; the optimum at x = 0.9 lies just inside
    def fun(x):
        if x[0] > 1.0:
            return np.nan, np.array([np.nan])
        return -(x[0] - 0.9) ** 2, np.array([-2 * (x[0] - 0.9)])

    res = maximize(fun, np.array([-5.0]), OptimConfig(initial_step=50.0, max_iters=100))
    assert res.x[0] == pytest.approx(0.9, abs=1e-5)


def test_non_finite_start_and_everywhere():
    with pytest.raises(NumericalError, match="iteration 0"):
        maximize(lambda x: (np.inf, x), np.zeros(2))
    calls = {"n": 0}

    def fun(x):
        calls["n"] += 1
        if calls["n"] == 1:
            return 0.0, np.ones(1)
        return np.nan, np.ones(1)

    with pytest.raises(NumericalError, match="iteration 1"):
        maximize(fun, np.zeros(1))


def test_config_validation():
    with pytest.raises(InvalidInputError):
        OptimConfig(method="newton")
    with pytest.raises(InvalidInputError):
        OptimConfig(shrink=1.5)
