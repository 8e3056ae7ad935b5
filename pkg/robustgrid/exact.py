"""Exact feasibility of bounded linear systems over the rationals.

Variables are either inputs with box bounds or slack variables defined by a row
``s = sum(a_j * x_j)``. The solver keeps a tableau that expresses every basic
variable in terms of the nonbasic ones and repairs bound violations by pivoting,
always choosing the smallest violating basic variable and the smallest eligible
nonbasic one (Bland's rule), so it cannot cycle. Bounds can be tightened and
relaxed between checks and the tableau is kept, which is what makes trying
one output clause after another cheap.
"""
from __future__ import annotations

import logging
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence

log = logging.getLogger("robustgrid")

Bound = Optional[Fraction]


class ExactSimplex:
    def __init__(self, lower: Sequence[Fraction], upper: Sequence[Fraction]):
        if len(lower) != len(upper):
            raise ValueError("lower and upper bounds must have the same length")
        self.num_inputs = len(lower)
        self.num_vars = len(lower)
        self.lower: Dict[int, Bound] = {}
        self.upper: Dict[int, Bound] = {}
        self.value: Dict[int, Fraction] = {}
        # basic variable -> {nonbasic variable: coefficient}
        self.rows: Dict[int, Dict[int, Fraction]] = {}
        for j, (lo, hi) in enumerate(zip(lower, upper)):
            if lo > hi:
                raise ValueError(f"variable {j} has lower bound above its upper bound")
            self.lower[j] = Fraction(lo)
            self.upper[j] = Fraction(hi)
            self.value[j] = Fraction(lo)

    def add_row(self, coeffs: Mapping[int, Fraction]) -> int:
        """Add ``s = sum(coeffs[j] * x_j)`` over input variables and return the index of `s`."""
        slack = self.num_vars
        self.num_vars += 1
        row: Dict[int, Fraction] = {}
        for j, a in coeffs.items():
            if a == 0:
                continue
            if j in self.rows:
                for k, b in self.rows[j].items():
                    row[k] = row.get(k, 0) + a * b
            else:
                row[j] = row.get(j, 0) + a
        row = {k: v for k, v in row.items() if v != 0}
        self.rows[slack] = row
        self.value[slack] = sum((a * self.value[k] for k, a in row.items()), Fraction(0))
        self.lower[slack] = None
        self.upper[slack] = None
        return slack

    def set_bounds(self, var: int, lower: Bound = None, upper: Bound = None) -> None:
        self.lower[var] = lower
        self.upper[var] = upper
        if var in self.rows:
            return
        value = self.value[var]
        if lower is not None and value < lower:
            self._update(var, lower)
        elif upper is not None and value > upper:
            self._update(var, upper)

    def _update(self, var: int, value: Fraction) -> None:
        delta = value - self.value[var]
        for basic, row in self.rows.items():
            coeff = row.get(var)
            if coeff is not None:
                self.value[basic] += coeff * delta
        self.value[var] = value

    def _can_increase(self, var: int) -> bool:
        upper = self.upper[var]
        return upper is None or self.value[var] < upper

    def _can_decrease(self, var: int) -> bool:
        lower = self.lower[var]
        return lower is None or self.value[var] > lower

    def _violation(self):
        for basic in sorted(self.rows):
            value = self.value[basic]
            lower, upper = self.lower[basic], self.upper[basic]
            if lower is not None and value < lower:
                return basic, lower
            if upper is not None and value > upper:
                return basic, upper
        return None

    def check(self) -> bool:
        """Repair the assignment; False when the bounds cannot all be met."""
        while True:
            violation = self._violation()
            if violation is None:
                return True
            basic, target = violation
            row = self.rows[basic]
            increase = target > self.value[basic]
            entering = None
            for var in sorted(row):
                coeff = row[var]
                if increase:
                    eligible = self._can_increase(var) if coeff > 0 else self._can_decrease(var)
                else:
                    eligible = self._can_decrease(var) if coeff > 0 else self._can_increase(var)
                if eligible:
                    entering = var
                    break
            if entering is None:
                return False
            self._pivot_and_update(basic, entering, target)

    def _pivot_and_update(self, basic: int, entering: int, value: Fraction) -> None:
        theta = (value - self.value[basic]) / self.rows[basic][entering]
        self.value[basic] = value
        self.value[entering] += theta
        for other, row in self.rows.items():
            if other != basic and entering in row:
                self.value[other] += row[entering] * theta
        self._pivot(basic, entering)

    def _pivot(self, basic: int, entering: int) -> None:
        row = self.rows.pop(basic)
        coeff = row.pop(entering)
        new_row = {var: -a / coeff for var, a in row.items()}
        new_row[basic] = 1 / coeff
        self.rows[entering] = new_row
        for other, other_row in self.rows.items():
            if other == entering:
                continue
            factor = other_row.pop(entering, None)
            if factor is None:
                continue
            for var, a in new_row.items():
                merged = other_row.get(var, 0) + factor * a
                if merged:
                    other_row[var] = merged
                else:
                    other_row.pop(var, None)

    def point(self) -> List[Fraction]:
        """Current values of the input variables."""
        return [self.value[j] for j in range(self.num_inputs)]
