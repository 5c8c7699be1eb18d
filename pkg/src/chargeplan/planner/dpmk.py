"""Exact multiple-choice knapsack by dynamic programming over an integer budget."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from ..citydata import ChargerPlan
from .objective import FineTunedPlanSets


class InfeasibleError(ValueError):
    """No selection of one option per station fits in the budget."""


@dataclass
class DpTables:
    """Tables of one solve.

    ``R[i, k]`` is the best revenue using the first ``i`` stations with total
    cost at most ``k`` (``-inf`` when nothing fits); ``choice[i, k]`` is the
    option picked for station ``i`` in that optimum, ``-1`` if unreachable.
    """

    W: list
    V: list
    R: np.ndarray
    choice: np.ndarray

    @property
    def budget(self) -> int:
        return self.R.shape[1] - 1

    def S(self, i: int, k: int) -> list:
        """Option indices (one per station 1..i) achieving ``R[i, k]``."""
        if i == 0:
            return []
        if not np.isfinite(self.R[i, k]):
            raise InfeasibleError(f"no selection of the first {i} stations fits in budget {k}")
        sel = []
        for s in range(i, 0, -1):
            j = int(self.choice[s, k])
            sel.append(j)
            k -= self.W[s - 1][j]
        return sel[::-1]


def integer_costs(costs, budget) -> tuple[list, int, int]:
    """Scale integral costs by their GCD.

    ``costs`` is a nested sequence of non-negative integral amounts.  Returns
    ``(scaled costs, scaled budget, gcd)``; a plan fits the original budget
    iff its scaled cost fits the scaled budget.
    """
    flat = [c for row in costs for c in row]
    for c in flat:
        if c < 0 or abs(c - round(c)) > 1e-9 * max(1.0, abs(c)):
            raise ValueError(f"costs must be non-negative integers in a common unit, got {c}")
    if budget < 0:
        raise ValueError("budget must be >= 0")
    ints = [int(round(c)) for c in flat]
    g = reduce(math.gcd, ints, 0) or 1
    scaled = [[int(round(c)) // g for c in row] for row in costs]
    return scaled, int(math.floor(budget + 1e-9)) // g, g


def dp_tables(W: Sequence[Sequence[int]], V: Sequence[Sequence[float]], B: int) -> DpTables:
    """Fill the revenue and choice tables for integer costs ``W`` and budget ``B``.

    Options are scanned in order and a table cell only changes on a strict
    improvement, so ties keep the smaller option index.
    """
    n = len(W)
    if len(V) != n:
        raise ValueError("W and V differ in length")
    R = np.full((n + 1, B + 1), -np.inf)
    R[0, :] = 0.0
    choice = np.full((n + 1, B + 1), -1, dtype=int)
    for i in range(1, n + 1):
        prev = R[i - 1]
        cur = R[i]
        for j, (w, v) in enumerate(zip(W[i - 1], V[i - 1])):
            if w < 0:
                raise ValueError("option costs must be >= 0")
            if w > B:
                continue
            cand = prev[: B + 1 - w] + v
            better = cand > cur[w:]
            cur[w:][better] = cand[better]
            choice[i, w:][better] = j
    return DpTables([list(map(int, w)) for w in W], [list(map(float, v)) for v in V], R, choice)


def solve_mk(W, V, B: int) -> tuple[list, float, DpTables]:
    """Pick one option per station maximizing total value within budget ``B``.

    Returns ``(selection, value, tables)``.  The budget column is the argmax
    of the last table row (smallest budget among ties); ``value`` is the sum
    of the chosen ``V`` entries taken in station order.
    """
    tab = dp_tables(W, V, B)
    last = tab.R[len(W)]
    if not np.isfinite(last).any():
        raise InfeasibleError("no selection of one option per station fits in the budget")
    k = int(np.argmax(last))
    sel = tab.S(len(W), k)
    value = 0.0
    for i, j in enumerate(sel):
        value += tab.V[i][j]
    return sel, value, tab


def option_tables(sets: FineTunedPlanSets, demands, prices, costs) -> tuple[list, list]:
    """Per-option costs and daily revenues.

    ``demands[i]`` is a ``(slow, fast)`` pair of ``(n_options_i, T)`` arrays of
    predicted utilization for station ``i``'s options, ``prices`` a pair of
    ``(n, T)`` arrays and ``costs`` a sequence of per-station ``(e_slow, e_fast)``.
    """
    ps, pf = (np.asarray(p, dtype=float) for p in prices)
    W, V = [], []
    for i, opts in enumerate(sets.options):
        gs, gf = (np.asarray(d, dtype=float) for d in demands[i])
        if gs.shape[0] != len(opts) or gf.shape[0] != len(opts):
            raise ValueError(f"station {sets.station_ids[i]}: demand rows do not match its options")
        es, ef = costs[i]
        W.append([es * a + ef * b for a, b in opts])
        rs = gs @ ps[i]
        rf = gf @ pf[i]
        V.append([float(rs[j] * a + rf[j] * b) for j, (a, b) in enumerate(opts)])
    return W, V


def dp_mk(sets: FineTunedPlanSets, demands, prices, costs, B) -> tuple[ChargerPlan, float]:
    """Best plan choosing one fine-tuned option per station under budget ``B``."""
    W, V = option_tables(sets, demands, prices, costs)
    Wi, Bi, _ = integer_costs(W, B)
    sel, value, _ = solve_mk(Wi, V, Bi)
    plan = ChargerPlan({sid: sets.options[i][j] for i, (sid, j) in enumerate(zip(sets.station_ids, sel))})
    return plan, value
