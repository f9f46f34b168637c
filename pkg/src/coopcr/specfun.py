"""Gamma function family for positive integer shape parameters.

For integer ``a`` the incomplete Gamma functions reduce to finite sums,

    Gamma(a, x) = (a-1)! e^{-x} sum_{k<a} x^k / k!

which are exact for every real ``x``, including negative values.  The
lower function is the analytic continuation ``gamma(a, x) = (a-1)! -
Gamma(a, x)``.  Where that subtraction would cancel badly the lower
function is summed from a power series instead.
"""

import math

MAX_SHAPE = 170


def _check_shape(a):
    if isinstance(a, bool) or int(a) != a or not 1 <= a <= MAX_SHAPE:
        raise ValueError(f"shape must be an integer in [1, {MAX_SHAPE}], got {a!r}")
    return int(a)


def gamma_int(a):
    """(a-1)! as a float."""
    a = _check_shape(a)
    return float(math.factorial(a - 1))


def _exp_partial_sum(a, x):
    # sum_{k=0}^{a-1} x^k / k!, running-term recurrence
    term = 1.0
    total = 1.0
    for k in range(1, a):
        term *= x / k
        total += term
    return total


def lower_gamma_scaled(a, x):
    """gamma(a, x) / x^a, finite at x = 0 where it equals 1/a.

    Uses sum_k (-x)^k / (k! (a+k)), whose terms are all positive for
    x <= 0.  For large positive x the series alternates, so the value is
    taken from the lower function directly.
    """
    a = _check_shape(a)
    if x > 1.0:
        return lower_gamma_int(a, x) / x**a
    term = 1.0
    total = 1.0 / a
    k = 0
    while True:
        k += 1
        term *= -x / k
        inc = term / (a + k)
        total += inc
        if abs(inc) <= 1e-17 * abs(total):
            return total
        if k > 10000:
            raise ArithmeticError("series did not converge")


def upper_gamma_int(a, x):
    """Upper incomplete Gamma function Gamma(a, x) for integer a."""
    a = _check_shape(a)
    if x < 0:
        # positive-term series for the lower part avoids the alternating sum
        return gamma_int(a) - lower_gamma_int(a, x)
    return gamma_int(a) * math.exp(-x) * _exp_partial_sum(a, x)


def lower_gamma_int(a, x):
    """Lower incomplete Gamma function gamma(a, x) for integer a.

    Negative ``x`` gives the analytic continuation (the integral of
    t^{a-1} e^{-t} from 0 to x along the real line).
    """
    a = _check_shape(a)
    if x == 0:
        return 0.0
    if x < 0 or x < a + 1.0:
        if x < 0:
            return x**a * lower_gamma_scaled(a, x)
        # gamma(a,x) = e^{-x} x^a sum_k x^k / (a (a+1) ... (a+k))
        term = 1.0 / a
        total = term
        k = 0
        while abs(term) > 1e-17 * abs(total):
            k += 1
            term *= x / (a + k)
            total += term
        return math.exp(-x) * x**a * total
    return gamma_int(a) - upper_gamma_int(a, x)
