import math

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2


def golden_max(f, lo, hi, rtol=1e-10, max_iter=200):
    """Golden-section search for a maximum of a unimodal ``f`` on ``[lo, hi]``.

    Returns ``(x, f(x), iterations, final_width)``. The endpoints are never
    evaluated, which keeps singular edges out of the search.
    """
    if hi < lo:
        lo, hi = hi, lo
    tol = rtol * max(abs(lo), abs(hi), 1e-300)
    width = hi - lo
    c = lo + INV_PHI2 * width
    d = lo + INV_PHI * width
    fc, fd = f(c), f(d)
    it = 0
    while it < max_iter and (hi - lo) > tol:
        it += 1
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = lo + INV_PHI2 * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = f(d)
    if fc >= fd:
        return c, fc, it, hi - lo
    return d, fd, it, hi - lo
