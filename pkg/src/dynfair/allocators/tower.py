"""The tower function g and its floor inverse, kept in log2 space.

g(1)=1, g(2)=2, g(3)=4, g(4)=16 and g(k) = 2^g(k-1) / 2^(k-1) for k >= 5.
Every g(k) is a power of two, so the table stores the exponents
e_k = log2 g(k) as Python ints: e_5 = 12, e_6 = 4091, e_7 = 2^4091 - 6.
e_8 would need 2^4091 bits and is never materialised.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from ..core import Number

DEFAULT_BIT_BUDGET = 2 ** 20


class BitBudgetExceeded(ArithmeticError):
    pass


def floor_log2_ratio(x: Number, y: Number) -> int:
    """Exact floor(log2(x / y)) for positive ints or Fractions."""
    # ints, Fractions and mpq all expose numerator/denominator
    p, q = x.numerator * y.denominator, x.denominator * y.numerator
    if p <= 0 or q <= 0:
        raise ValueError("floor_log2_ratio needs positive arguments")
    k = p.bit_length() - q.bit_length()
    if k >= 0:
        if p < q << k:
            k -= 1
    elif p << -k < q:
        k -= 1
    return k


@dataclass
class TowerTable:
    bit_budget: int = DEFAULT_BIT_BUDGET
    exponents: list[int] = field(init=False)

    def __post_init__(self):
        exps = [0, 1, 2, 4]
        k = 4
        while exps[-1] <= self.bit_budget:
            # log2 g(k+1) = g(k) - k
            exps.append((1 << exps[-1]) - k)
            k += 1
        self.exponents = exps

    @property
    def k_cap(self) -> int:
        return len(self.exponents)

    def log2_g(self, k: int) -> int:
        if not 1 <= k <= self.k_cap:
            raise BitBudgetExceeded(f"g({k}) is outside the table (k_cap={self.k_cap})")
        return self.exponents[k - 1]

    def g(self, k: int) -> int:
        e = self.log2_g(k)
        if e > self.bit_budget:
            raise BitBudgetExceeded(f"g({k}) = 2^{e} does not fit the bit budget")
        return 1 << e


def g_floor_inverse(table: TowerTable, ratio_bits: int) -> int:
    """Largest k with log2 g(k) <= ratio_bits, where ratio_bits = floor(log2(W/w))."""
    if ratio_bits < 0:
        raise ValueError("ratio_bits must be non-negative")
    if ratio_bits >= table.exponents[-1]:
        raise BitBudgetExceeded(f"ratio of 2^{ratio_bits} reaches beyond g({table.k_cap})")
    return bisect.bisect_right(table.exponents, ratio_bits)
