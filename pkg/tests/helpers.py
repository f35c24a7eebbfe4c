"""Independent finite-difference oracle shared by the gradient tests."""

import numpy as np

EPS = 1e-5
REL_TOL = 1e-4


def numeric_grad(f, arr, eps=EPS):
    """Central differences of the scalar ``f()`` with respect to ``arr``, perturbed in place."""
    g = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + eps
        fp = f()
        arr[idx] = old - eps
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2 * eps)
    return g


def rel_error(analytic, numeric):
    """Norm-wise relative error; scales below 1e-8 count as zero gradients."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def tape_grad_error(build, params, coords=None, rng=None):
    """Compare tape gradients of ``build(tape) -> scalar Var`` against central differences.

    ``params`` are the Parameters to check. With ``coords`` set, only that
    many randomly chosen entries per parameter are perturbed.
    """
    from mtsent.layers import Tape

    for p in params:
        p.zero_grad()
    tape = Tape()
    tape.backward(build(tape))
    analytic = np.concatenate([p.grad.ravel() for p in params])

    def f():
        return float(build(Tape()).value[0, 0])

    numeric = []
    picked = []
    for p in params:
        if coords is None:
            numeric.append(numeric_grad(f, p.value).ravel())
            picked.append(np.arange(p.size))
            continue
        flat = rng.choice(p.size, size=min(coords, p.size), replace=False)
        g = np.zeros(len(flat))
        view = p.value.reshape(-1)
        for j, k in enumerate(flat):
            old = view[k]
            view[k] = old + EPS
            fp = f()
            view[k] = old - EPS
            fm = f()
            view[k] = old
            g[j] = (fp - fm) / (2 * EPS)
        numeric.append(g)
        picked.append(flat)
    if coords is not None:
        offsets = np.cumsum([0] + [p.size for p in params])
        analytic = np.concatenate([analytic[offsets[i] + picked[i]] for i in range(len(params))])
    return rel_error(analytic, np.concatenate(numeric))
