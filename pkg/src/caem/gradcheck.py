"""Central finite-difference checks of tape gradients."""

from typing import NamedTuple

import numpy as np

from .tensor import Tensor, backward, no_grad


class GradCheck(NamedTuple):
    passed: bool
    max_rel_error: float
    analytic: list
    numeric: list


def relative_error(analytic, numeric, floor=1e-8):
    """Elementwise |a - n| / max(|a|, |n|, floor), reduced by max."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def resolution_floor(value, step, tol, minimum=1e-8, quanta=10.0):
    """Smallest gradient magnitude whose relative error ``tol`` is measurable.

    A central difference of a function of size ``|value|`` carries rounding
    noise of about one quantum ``eps * |value| / step``. The maximum of that
    noise over a few hundred components reaches several quanta, so
    components smaller than ``quanta * quantum / tol`` are compared against
    this floor instead of their own magnitude.
    """
    quantum = np.finfo(np.float64).eps * abs(float(value)) / step
    return max(minimum, quanta * quantum / tol)


def numerical_gradient(fn, tensors, step=1e-4):
    """Central differences of the scalar ``fn()`` w.r.t. each tensor's data.

    Perturbs ``tensor.data`` in place and restores it afterwards.
    """
    grads = []
    with no_grad():
        for t in tensors:
            flat = t.data.reshape(-1)
            g = np.zeros(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                fp = fn().item()
                flat[i] = orig - step
                fm = fn().item()
                flat[i] = orig
                g[i] = (fp - fm) / (2.0 * step)
            grads.append(g.reshape(t.shape))
    return grads


def check_parameters(fn, params, step=1e-4, tol=1e-4, floor=1e-8):
    """Compare backprop gradients of ``fn()`` against central differences.

    ``fn`` must be deterministic: any randomness inside it (dropout masks,
    target draws) has to be re-seeded on every call. ``floor="auto"`` uses
    :func:`resolution_floor` of the function value.
    """
    if not 0.0 < step <= 1e-2:
        raise ValueError(f"step must lie in (0, 1e-2], got {step}")
    for p in params:
        p.zero_grad()
    root = fn()
    if floor == "auto":
        floor = resolution_floor(root.item(), step, tol)
    backward(root)
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]
    numeric = numerical_gradient(fn, params, step)
    err = max((relative_error(a, n, floor) for a, n in zip(analytic, numeric)), default=0.0)
    return GradCheck(err <= tol, err, analytic, numeric)


def grad_check(f, point, step=1e-4, tol=1e-4, floor=1e-8):
    """Check ``f`` (a scalar tensor function of one tensor) at ``point``."""
    x = Tensor(point.data if isinstance(point, Tensor) else point, requires_grad=True)
    return check_parameters(lambda: f(x), [x], step, tol, floor)
