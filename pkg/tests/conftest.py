import numpy as np
import pytest

from concertormer.autodiff import Tape, grad_backward, grad_of
from concertormer.model import init_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def finite_difference(fn, arrays, which, index, step=1e-4):
    """Central difference of scalar fn(arrays) w.r.t. arrays[which][index]."""
    plus = [a.copy() for a in arrays]
    minus = [a.copy() for a in arrays]
    plus[which][index] += step
    minus[which][index] -= step
    return (fn(plus) - fn(minus)) / (2.0 * step)


def rel_err(a, b, floor=1e-4):
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(build_loss, arrays, probes_per_array=3, step=1e-4, tol=1e-4, seed=0):
    """Tape gradients of scalar build_loss vs central differences (float64).

    build_loss(list_of_leaf_nodes_or_arrays) must work on both nodes and
    plain arrays and return a scalar node / float.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tape = Tape()
    leaves = [tape.leaf(a) for a in arrays]
    loss = build_loss(leaves)
    grad_backward(tape, loss)
    rs = np.random.default_rng(seed)

    def plain(xs):
        return float(np.asarray(build_loss(xs)))

    worst = 0.0
    for which, arr in enumerate(arrays):
        grads = grad_of(leaves[which])
        n_probe = min(probes_per_array, arr.size)
        for flat in rs.choice(arr.size, size=n_probe, replace=False):
            index = np.unravel_index(flat, arr.shape)
            fd = finite_difference(plain, arrays, which, index, step)
            err = rel_err(float(grads[index]), fd)
            worst = max(worst, err)
            assert err <= tol, (
                f"gradient mismatch on input {which} at {index}: "
                f"tape {grads[index]:.8e} vs fd {fd:.8e} (rel {err:.2e})")
    return worst


def make_params(specs, seed, dtype=np.float32):
    return init_params(specs, seed, dtype)
