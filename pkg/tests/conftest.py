import numpy as np
import pytest


def finite_diff_max_rel_error(store, loss_fn, h=1e-5, floor=1e-3):
    """Compare analytic parameter gradients against central differences.

    loss_fn() must run forward+backward and return the scalar loss;
    loss_fn(no_grad=True) must only return the loss. The relative-error
    denominator is floored so that finite-difference noise on near-zero
    gradients does not dominate.
    """
    store.zero_grads()
    loss_fn()
    worst = 0.0
    for name in store.names():
        p = store[name]
        grad = p.grad.copy()
        it = np.nditer(p.value, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p.value[idx]
            p.value[idx] = orig + h
            lp = loss_fn(no_grad=True)
            p.value[idx] = orig - h
            lm = loss_fn(no_grad=True)
            p.value[idx] = orig
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(grad[idx]), floor)
            worst = max(worst, abs(fd - grad[idx]) / denom)
    return worst


def finite_diff_input_max_rel_error(x, loss_fn, grad_x, h=1e-5, floor=1e-3):
    """Check an input gradient: loss_fn(x) -> scalar, grad_x = dL/dx."""
    worst = 0.0
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        lp = loss_fn(x)
        x[idx] = orig - h
        lm = loss_fn(x)
        x[idx] = orig
        fd = (lp - lm) / (2 * h)
        denom = max(abs(fd), abs(grad_x[idx]), floor)
        worst = max(worst, abs(fd - grad_x[idx]) / denom)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_spd(n, rng, cond=10.0):
    """Random SPD matrix with controlled conditioning."""
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eigs = np.exp(rng.uniform(0.0, np.log(cond), size=n))
    return (Q * eigs) @ Q.T
