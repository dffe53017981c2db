""" Compare tape gradients against central finite differences. """
from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_input: list

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def numeric_gradient(function, inputs, index, step):
    x = inputs[index].data
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    for k in range(flat.size):
        original = flat[k]
        flat[k] = original + step
        plus = float(function(*inputs).data)
        flat[k] = original - step
        minus = float(function(*inputs).data)
        flat[k] = original
        grad.reshape(-1)[k] = (plus - minus) / (2 * step)
    return grad


def grad_check(function, inputs, step=1e-6, tolerance=1e-3):
    """ Check `function(*inputs) -> scalar Tensor` at `inputs`.

    The error for one input is max|analytic - numeric| divided by max|numeric| (floored at 1e-12),
    so the measure is scale-free and does not blow up on individual near-zero entries.
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    function(*inputs).backward()
    errors = []
    for index, t in enumerate(inputs):
        analytic = np.zeros(t.shape) if t.grad is None else t.grad.astype(np.float64)
        numeric = numeric_gradient(function, inputs, index, step)
        scale = max(float(np.abs(numeric).max(initial=0.0)), 1e-12)
        errors.append(float(np.abs(analytic - numeric).max(initial=0.0)) / scale)
    return GradCheckReport(max(errors, default=0.0), tolerance, errors)
