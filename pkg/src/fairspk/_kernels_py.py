"""Pure-numpy fallbacks for the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def count_at_or_above(scores, thresholds):
    """Number of ``scores`` that are >= each threshold (thresholds ascending)."""
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(thresholds, dtype=np.float64)
    cleared = np.searchsorted(t, s, side="right")
    hist = np.bincount(cleared, minlength=t.size + 1)
    return np.cumsum(hist[::-1])[::-1][1:].astype(np.int64)


def eer_sweep(genuine_sorted, impostor_sorted):
    """Return ``(eer, tau)``; see the compiled version for the tie rules."""
    gen = np.asarray(genuine_sorted, dtype=np.float64)
    imp = np.asarray(impostor_sorted, dtype=np.float64)
    values = np.unique(np.concatenate([gen, imp]))
    taus = np.concatenate([[-np.inf], values, [np.inf]])
    far = (imp.size - np.searchsorted(imp, taus, side="left")) / float(imp.size)
    frr = np.searchsorted(gen, taus, side="left") / float(gen.size)
    diff = np.abs(far - frr)
    err = (far + frr) / 2.0
    best = np.lexsort((np.arange(taus.size), err, diff))[0]
    return float(err[best]), float(taus[best])


def adam_update(p, g, m, v, lr, beta1, beta2, c1, c2, eps, shrink):
    """In-place Adam update of one flat parameter array."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    if shrink != 1.0:
        p *= shrink
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
