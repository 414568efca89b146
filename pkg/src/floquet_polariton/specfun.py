"""Special functions used by the response model.

Bessel functions of the first kind (integer order), associated Laguerre
polynomials, terminating Gauss hypergeometric sums and log-factorials.
Everything here works on plain Python floats and ints.
"""
import math

__all__ = [
    "bessel_j",
    "bessel_j_orders",
    "assoc_laguerre",
    "hyp2f1_terminating",
    "ln_factorial",
]

MAX_ORDER = 64
MAX_ARG = 50.0
_SERIES_LIMIT = 12.0


def _series_j(n, x):
    # ascending series, n >= 0, 0 <= x <= 12
    half = 0.5 * x
    if half == 0.0:
        # x == 0, or so small that x / 2 underflows
        return float(n == 0)
    term = math.exp(n * math.log(half) - math.lgamma(n + 1))
    if term == 0.0:
        return 0.0
    q = -half * half
    total = term
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + n))
        total += term
        if abs(term) < 1e-17 * max(abs(total), 1e-300) and k > half:
            break
        if k > 400:
            break
    return total


def _miller_j(nmax, x):
    """Orders 0..nmax at x > 0 by downward recurrence (Miller's algorithm)."""
    start = max(nmax, int(x)) + 20 + int(math.sqrt(40.0 * max(nmax, int(x), 1)))
    start += start % 2
    values = [0.0] * (start + 2)
    values[start + 1] = 0.0
    values[start] = 1e-300
    norm = 0.0
    for k in range(start, 0, -1):
        values[k - 1] = 2.0 * k / x * values[k] - values[k + 1]
        if abs(values[k - 1]) > 1e250:
            # rescale to stay in range
            for i in range(k - 1, start + 1):
                values[i] *= 1e-250
            norm *= 1e-250
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * values[k - 1]
    norm += values[0]
    return [v / norm for v in values[: nmax + 1]]


def _check_bessel_args(order, x):
    if abs(order) > MAX_ORDER:
        raise ValueError(f"Bessel order {order} outside |order| <= {MAX_ORDER}")
    if not math.isfinite(x) or abs(x) > MAX_ARG:
        raise ValueError(f"Bessel argument {x} outside |x| <= {MAX_ARG}")


def bessel_j(order, x):
    """Bessel function of the first kind J_order(x) for integer order.

    Parameters
    ----------
    order : int
        Integer order, ``|order| <= 64``.
    x : float
        Real argument, ``|x| <= 50``.

    Returns
    -------
    float
        J_order(x), absolute error below 1e-12.

    Raises
    ------
    ValueError
        If either argument is outside the supported range.
    """
    order = int(order)
    x = float(x)
    _check_bessel_args(order, x)
    sign = 1.0
    if order < 0:
        order = -order
        if order % 2:
            sign = -sign
    if x < 0:
        x = -x
        if order % 2:
            sign = -sign
    if x <= _SERIES_LIMIT:
        return sign * _series_j(order, x)
    return sign * _miller_j(order, x)[order]


def bessel_j_orders(max_order, x):
    """J_alpha(x) for alpha = -max_order..max_order as a list."""
    max_order = int(max_order)
    x = float(x)
    _check_bessel_args(max_order, x)
    if abs(x) > _SERIES_LIMIT:
        pos = _miller_j(max_order, abs(x))
        if x < 0:
            pos = [v if k % 2 == 0 else -v for k, v in enumerate(pos)]
    else:
        pos = [bessel_j(k, x) for k in range(max_order + 1)]
    neg = [pos[k] if k % 2 == 0 else -pos[k] for k in range(max_order, 0, -1)]
    return neg + pos


def assoc_laguerre(n, k, x):
    """Associated Laguerre polynomial L_n^k(x) by three-term recurrence."""
    n = int(n)
    k = int(k)
    if n < 0 or k < 0:
        raise ValueError("assoc_laguerre requires n >= 0 and k >= 0")
    if n > MAX_ORDER:
        raise ValueError(f"Laguerre degree {n} exceeds {MAX_ORDER}")
    x = float(x)
    prev, cur = 0.0, 1.0
    for i in range(n):
        prev, cur = cur, ((2 * i + 1 + k - x) * cur - (i + k) * prev) / (i + 1)
    return cur


def hyp2f1_terminating(m, n, z):
    """Terminating sum 2F1(-m, -n; -m-n; z).

    The series is cut at k = min(m, n), before the lower Pochhammer symbol
    reaches zero. For m = n = 0 the value is 1 by convention.
    """
    m = int(m)
    n = int(n)
    if m < 0 or n < 0:
        raise ValueError("hyp2f1_terminating requires m, n >= 0")
    z = float(z)
    total = 1.0
    term = 1.0
    for k in range(min(m, n)):
        # ratio of consecutive terms, all factors nonzero for k < min(m, n)
        term *= (k - m) * (k - n) / ((k - m - n) * (k + 1)) * z
        total += term
    return total


def ln_factorial(n):
    """Natural log of n! for 0 <= n <= 10**6."""
    n = int(n)
    if n < 0:
        raise ValueError("ln_factorial requires n >= 0")
    if n < 2:
        return 0.0
    return math.lgamma(n + 1)
