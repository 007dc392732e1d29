import numpy as np
import pytest


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Per-coordinate central finite differences of a scalar function.

    Independent oracle: evaluates f twice per coordinate on perturbed
    copies, never touching the autodiff tape.
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def directional_difference(f, param_data: np.ndarray, direction: np.ndarray,
                           h: float = 1e-5) -> float:
    """Central difference of f along one direction in one parameter."""
    param_data += h * direction
    fp = f()
    param_data -= 2.0 * h * direction
    fm = f()
    param_data += h * direction
    return (fp - fm) / (2.0 * h)


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
