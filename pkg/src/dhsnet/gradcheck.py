"""Central finite-difference checking of analytic backward passes.

The checker perturbs one input coordinate at a time and compares the
directional derivative of a random projection of the output against the
backward pass.  Double precision only; callers must keep kinked operators
(relu, maxpool, bilinear hats) sampled away from their kinks.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError


@dataclass
class GradcheckResult:
    name: str
    seed: int
    tol: float
    max_rel_err: float
    per_input: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.max_rel_err <= self.tol

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} seed={self.seed} max_rel_err={self.max_rel_err:.3e} tol={self.tol:g}"


def _as_float(x):
    return float(np.sum(x)) if isinstance(x, np.ndarray) else float(x)


def gradcheck(forward, inputs, h=1e-5, tol=1e-4, rng=None, wrt=None,
              max_coords=None, name="op", seed=-1):
    """Compare analytic gradients of `forward` against central differences.

    forward(*inputs) must return (output, backward_fn) where
    backward_fn(upstream) returns one gradient per input (None marks an
    input that is not differentiated).  Arrays must be float64.

    wrt: optional list of input indices to check (default: all with grads).
    max_coords: cap on randomly sampled coordinates per input (default: all).
    """
    rng = rng or np.random.default_rng(0)
    for x in inputs:
        if isinstance(x, np.ndarray) and x.dtype != np.float64:
            raise NumericError("gradcheck requires float64 inputs")

    out, backward = forward(*inputs)
    if isinstance(out, np.ndarray):
        v = rng.standard_normal(out.shape)
        upstream = v
        project = lambda y: float(np.sum(v * y))
    else:
        upstream = 1.0
        project = _as_float
    grads = backward(upstream)

    if wrt is None:
        wrt = [i for i, g in enumerate(grads) if g is not None]

    per_input = {}
    worst = 0.0
    for i in wrt:
        x = inputs[i]
        analytic = np.asarray(grads[i], dtype=np.float64)
        n_elems = x.size
        if max_coords is not None and n_elems > max_coords:
            coords = rng.choice(n_elems, size=max_coords, replace=False)
        else:
            coords = np.arange(n_elems)
        a_vals = analytic.reshape(-1)[coords]
        n_vals = np.empty_like(a_vals)
        work = x.copy()
        plus_inputs = list(inputs)
        plus_inputs[i] = work
        flat = work.reshape(-1)
        for j, c in enumerate(coords):
            orig = flat[c]
            flat[c] = orig + h
            lp = project(forward(*plus_inputs)[0])
            flat[c] = orig - h
            lm = project(forward(*plus_inputs)[0])
            flat[c] = orig
            n_vals[j] = (lp - lm) / (2.0 * h)
        scale = max(np.abs(a_vals).max(initial=0.0), np.abs(n_vals).max(initial=0.0), 1e-8)
        rel = float(np.abs(a_vals - n_vals).max(initial=0.0) / scale)
        per_input[i] = rel
        worst = max(worst, rel)
    return GradcheckResult(name=name, seed=seed, tol=tol, max_rel_err=worst,
                           per_input=per_input)


def run_suite(seeds=range(20), tol=1e-4, h=1e-5, end_to_end=True,
              end_to_end_tol=1e-3, end_to_end_seeds=range(2), verbose=False):
    """Run the full per-operator gradcheck suite plus a tiny end-to-end model.

    Returns the list of GradcheckResult.  Used by `dhsnet gradcheck` and the
    acceptance tests.
    """
    from . import checks  # local import: checks pulls in the whole package

    results = []
    for seed in seeds:
        results.extend(checks.operator_gradchecks(seed, h=h, tol=tol))
    if end_to_end:
        for seed in end_to_end_seeds:
            results.append(checks.end_to_end_gradcheck(seed, h=h, tol=end_to_end_tol))
    if verbose:
        for r in results:
            print(r.line())
    return results
