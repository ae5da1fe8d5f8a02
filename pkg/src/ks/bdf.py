"""BDF-k temporal operators, k = 1..5.

The discrete time derivative of a sequence v is
``(alpha_k * v_new - sum_i a_i * v_hist[i]) / tau`` and the explicit
extrapolant to the new time level is ``sum_i b_i * v_hist[i]``, where
``v_hist[0]`` is the most recent level. Both apply unchanged to scalar
sequences and to fields.
"""

from collections import deque
from dataclasses import dataclass
from fractions import Fraction

from ks.errors import ColdHistoryError, ConfigurationError

# Exact rational coefficient tables. a-weights multiply
# (v^n, v^{n-1}, ..., v^{n-k+1}); b-weights likewise.
_TABLES = {
    1: (Fraction(1), [Fraction(1)], [Fraction(1)]),
    2: (Fraction(3, 2), [Fraction(2), Fraction(-1, 2)], [Fraction(2), Fraction(-1)]),
    3: (Fraction(11, 6),
        [Fraction(3), Fraction(-3, 2), Fraction(1, 3)],
        [Fraction(3), Fraction(-3), Fraction(1)]),
    4: (Fraction(25, 12),
        [Fraction(4), Fraction(-3), Fraction(4, 3), Fraction(-1, 4)],
        [Fraction(4), Fraction(-6), Fraction(4), Fraction(-1)]),
    5: (Fraction(137, 60),
        [Fraction(5), Fraction(-5), Fraction(10, 3), Fraction(-5, 4), Fraction(1, 5)],
        [Fraction(5), Fraction(-10), Fraction(10), Fraction(-5), Fraction(1)]),
}


@dataclass(frozen=True)
class BdfScheme:
    k: int
    alpha: float
    a_weights: tuple
    b_weights: tuple


def bdf_coefficients(k: int) -> BdfScheme:
    if k not in _TABLES:
        raise ConfigurationError(f"BDF order must be in 1..5, got {k}")
    alpha, a, b = _TABLES[k]
    return BdfScheme(k, float(alpha), tuple(float(w) for w in a),
                     tuple(float(w) for w in b))


class History:
    """Ring buffer of the most recent k levels, newest first.

    Generic over fields (numpy arrays) and scalars; ``push`` evicts the
    oldest level once warm.
    """

    def __init__(self, k: int, values=()):
        self.k = k
        self._buf = deque(maxlen=k)
        for v in values:
            self.push(v)

    def push(self, value):
        self._buf.appendleft(value)

    @property
    def warm(self) -> bool:
        return len(self._buf) == self.k

    def __len__(self):
        return len(self._buf)

    def __getitem__(self, i):
        return self._buf[i]

    def __iter__(self):
        return iter(self._buf)

    @property
    def newest(self):
        return self._buf[0]


def _require_warm(hist: History, s: BdfScheme):
    if len(hist) < s.k:
        raise ColdHistoryError(
            f"history holds {len(hist)} levels, BDF-{s.k} needs {s.k}")


def history_combination(hist: History, s: BdfScheme):
    """A_k applied to the history: sum of a_i * v^{n-i}."""
    _require_warm(hist, s)
    acc = s.a_weights[0] * hist[0]
    for w, v in zip(s.a_weights[1:], list(hist)[1:]):
        acc = acc + w * v
    return acc


def discrete_derivative(new, hist: History, tau: float, s: BdfScheme):
    """D_ktau at the new level: (alpha_k * new - A_k(history)) / tau."""
    return (s.alpha * new - history_combination(hist, s)) / tau


def extrapolate(hist: History, s: BdfScheme):
    """B_k applied to the history: sum of b_i * v^{n-i}."""
    _require_warm(hist, s)
    acc = s.b_weights[0] * hist[0]
    for w, v in zip(s.b_weights[1:], list(hist)[1:]):
        acc = acc + w * v
    return acc
