"""Golden-section maximization on a bounded interval."""

import math

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, lo, hi, *, rtol=1e-10, max_iter=500):
    """Maximize a unimodal scalar function on ``[lo, hi]``.

    Stops once the bracket width is below ``rtol * max(|x|, 1)``. The
    endpoints are also scored, so a monotone profile returns its boundary
    maximum instead of an interior point next to it.

    Returns
    -------
    (x, fx, n_eval)
    """
    a, b = float(lo), float(hi)
    fa, fb = f(a), f(b)
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    n_eval = 4
    for _ in range(max_iter):
        if (b - a) <= rtol * max(abs(c), abs(d), 1.0):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
        n_eval += 1
    x, fx = (c, fc) if fc >= fd else (d, fd)
    if fa > fx:
        x, fx = lo, fa
    if fb > fx:
        x, fx = hi, fb
    return x, fx, n_eval
