"""Central finite-difference verification of tape gradients.

The checker perturbs every entry of every parameter by +/-h, so it is
strictly for desk-scale configurations.  It is the ground-truth oracle
for the backward pass: an op with a wrong gradient rule shows up here
as a relative error far above tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .tensor import backward

# Central differences of an O(1) loss carry ~1e-11 absolute rounding
# noise at h=1e-5, so agreement within _ABS_NOISE is exact as far as
# FD can resolve; without this guard a correct gradient of magnitude
# ~1e-8 would show a spurious large relative error.  A wrong gradient
# rule produces absolute errors at the gradient's own scale, orders of
# magnitude above this floor.
_ABS_NOISE = 1e-9


@dataclass
class GradCheckReport:
    passed: bool
    tol: float
    h: float
    n_entries: int
    max_rel_err: float
    worst_param: str
    worst_index: tuple
    per_param: dict = field(default_factory=dict)
    elapsed_s: float = 0.0

    def lines(self):
        out = [f"gradcheck: {'PASS' if self.passed else 'FAIL'} "
               f"(max rel err {self.max_rel_err:.3e} vs tol {self.tol:.1e}, "
               f"{self.n_entries} entries, {self.elapsed_s:.1f}s)"]
        for name in sorted(self.per_param):
            out.append(f"  {name}: max rel err {self.per_param[name]:.3e}")
        if not self.passed:
            out.append(f"  worst: {self.worst_param}{list(self.worst_index)}")
        return out


def _rel_err(g, fd):
    diff = abs(g - fd)
    if diff < _ABS_NOISE:
        return 0.0
    return diff / max(abs(g), abs(fd))


def finite_diff_check(f, params, h=1e-5, tol=1e-4):
    """Compare tape gradients of ``f`` against central finite differences.

    Args:
        f: zero-argument callable running one forward pass over the
            current values of ``params`` and returning a scalar
            tape-bound tensor.  Must be deterministic (dropout off).
        params: dict name -> Tensor; entries are perturbed in place and
            restored.
        h: central-difference step.
        tol: maximum allowed relative error per entry.

    Returns:
        GradCheckReport with per-parameter maxima.

    Raises:
        NumericError: if two evaluations of ``f`` disagree, which makes
            the check invalid.
    """
    t0 = time.perf_counter()
    loss_a = f()
    loss_b = f()
    if float(loss_a.data) != float(loss_b.data):
        raise NumericError(
            "check-invalid: f is not deterministic "
            f"({float(loss_a.data)!r} vs {float(loss_b.data)!r})")

    loss = f()
    grads = backward(loss)
    tape = loss.tape
    analytic = {}
    for name, p in params.items():
        nid = tape.node_of(p)
        analytic[name] = np.zeros(p.data.shape) if nid is None else grads[nid]

    report = GradCheckReport(passed=True, tol=tol, h=h, n_entries=0,
                             max_rel_err=0.0, worst_param="", worst_index=())
    for name, p in params.items():
        g = analytic[name]
        worst = 0.0
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f().data)
            flat[i] = orig - h
            f_minus = float(f().data)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            err = _rel_err(gflat[i], fd)
            report.n_entries += 1
            if err > worst:
                worst = err
            if err > report.max_rel_err:
                report.max_rel_err = err
                report.worst_param = name
                report.worst_index = np.unravel_index(i, p.data.shape)
        report.per_param[name] = worst
    report.passed = report.max_rel_err < tol
    report.elapsed_s = time.perf_counter() - t0
    return report
