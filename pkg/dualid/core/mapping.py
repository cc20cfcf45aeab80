"""
Dual-domain identity mapping for DUALID.

Tracks seen in the visual domain are matched to identities heard in the
auditory domain as a minimum-cost perfect assignment. Pairs below a
similarity threshold are eliminated, and the smaller side is padded with
virtual identities so asymmetric populations (more voices than bodies, or
the reverse) still yield a square problem.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np

from dualid.core.identity import KAPPA_ROTOR, KAPPA_WING, FeatureWeights, Pid, similarity
from dualid.errors import MappingError

logger = logging.getLogger(__name__)

EPSILON_COST = 1e-6
C_BIG = 1e9
DEFAULT_SIM_MIN = 1e-4


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """
    Square assignment costs. Rows are VD tracks, columns AD identities.

    Rows ``n_vd..K-1`` and columns ``n_ad..K-1`` are virtual.
    """

    costs: np.ndarray
    similarities: np.ndarray
    n_vd: int
    n_ad: int

    @property
    def size(self) -> int:
        return self.costs.shape[0]

    def is_virtual_row(self, row: int) -> bool:
        return row >= self.n_vd

    def is_virtual_col(self, col: int) -> bool:
        return col >= self.n_ad


@dataclass(frozen=True)
class Assignment:
    """Perfect matching: ``row_to_col[i]`` is the column assigned to row ``i``."""

    row_to_col: Tuple[int, ...]
    total_cost: float


@dataclass(frozen=True)
class Matched:
    vd_index: int
    ad_index: int
    similarity: float


@dataclass(frozen=True)
class UnmatchedVd:
    vd_index: int


@dataclass(frozen=True)
class UnmatchedAd:
    ad_index: int


MatchOutcome = Union[Matched, UnmatchedVd, UnmatchedAd]
AssignmentSolver = Callable[[CostMatrix], Assignment]


def cost_matrix_from_similarities(similarities: np.ndarray, sim_threshold: float) -> CostMatrix:
    """
    Turn a VD x AD similarity table into a padded square cost matrix.

    Args:
        similarities: Array of shape (n_vd, n_ad) with entries in [0, 1]
        sim_threshold: Pairs below this similarity are eliminated

    Returns:
        Cost matrix with reciprocal costs for feasible pairs
    """
    if not 0.0 < sim_threshold < 1.0:
        raise MappingError("sim_threshold must lie in (0, 1)")
    sims = np.asarray(similarities, dtype=float)
    if sims.ndim != 2:
        raise MappingError("similarities must be a VD x AD table")
    n_vd, n_ad = sims.shape
    if n_vd == 0 and n_ad == 0:
        raise MappingError("nothing to match: both domains are empty")

    size = max(n_vd, n_ad)
    costs = np.full((size, size), C_BIG)
    costs[n_vd:, n_ad:] = 0.0
    feasible = sims >= sim_threshold
    costs[:n_vd, :n_ad] = np.where(feasible, 1.0 / (sims + EPSILON_COST), C_BIG)

    max_feasible = 1.0 / (sim_threshold + EPSILON_COST)
    if C_BIG <= size * max_feasible:
        raise MappingError("sentinel cost too small for this threshold and size")
    return CostMatrix(costs=costs, similarities=sims, n_vd=n_vd, n_ad=n_ad)


def build_cost_matrix(
    vd_pids: Sequence[Pid],
    ad_pids: Sequence[Pid],
    w: FeatureWeights,
    sim_threshold: float,
    kappa_rotor: float = KAPPA_ROTOR,
    kappa_wing: float = KAPPA_WING,
) -> CostMatrix:
    """
    Score every VD/AD pair and build the padded cost matrix.

    Args:
        vd_pids: PIDs estimated from confirmed tracks
        ad_pids: PIDs claimed in beacons
        w: Feature weights
        sim_threshold: Minimum similarity for a feasible pair

    Returns:
        Square cost matrix of size max(|VD|, |AD|)
    """
    sims = np.zeros((len(vd_pids), len(ad_pids)))
    for i, vd in enumerate(vd_pids):
        for j, ad in enumerate(ad_pids):
            sims[i, j] = similarity(vd, ad, w, kappa_rotor, kappa_wing)
    return cost_matrix_from_similarities(sims, sim_threshold)


def hungarian(cost: CostMatrix) -> Assignment:
    """
    Minimum-cost perfect matching, O(K^3) shortest augmenting paths.

    Row potentials ``u`` and column potentials ``v`` keep reduced costs
    non-negative; column scans use strict comparison so ties resolve to the
    lowest column index.
    """
    matrix = np.asarray(cost.costs, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise MappingError("cost matrix must be square")
    if not np.all(np.isfinite(matrix)):
        raise MappingError("cost matrix must be finite")
    n = matrix.shape[0]
    if n == 0:
        return Assignment((), 0.0)

    a = matrix.tolist()
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    owner = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = [math.inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = owner[j0]
            delta = math.inf
            j1 = 0
            row = a[i0 - 1]
            for j in range(1, n + 1):
                if used[j]:
                    continue
                reduced = row[j - 1] - u[i0] - v[j]
                if reduced < minv[j]:
                    minv[j] = reduced
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    row_to_col = [0] * n
    for j in range(1, n + 1):
        row_to_col[owner[j] - 1] = j - 1
    total = float(sum(matrix[i, row_to_col[i]] for i in range(n)))
    return Assignment(tuple(row_to_col), total)


def decode(cost: CostMatrix, assignment: Assignment) -> List[MatchOutcome]:
    """
    Read match outcomes off an assignment.

    Anything paired with a virtual partner or through a sentinel cost is
    reported unmatched.
    """
    outcomes: List[MatchOutcome] = []
    matched_cols = set()
    for row in range(cost.n_vd):
        col = assignment.row_to_col[row]
        if not cost.is_virtual_col(col) and cost.costs[row, col] < C_BIG:
            outcomes.append(Matched(row, col, float(cost.similarities[row, col])))
            matched_cols.add(col)
        else:
            outcomes.append(UnmatchedVd(row))
    outcomes.extend(UnmatchedAd(col) for col in range(cost.n_ad) if col not in matched_cols)
    return outcomes


def map_identities(
    vd_pids: Sequence[Pid],
    ad_pids: Sequence[Pid],
    w: FeatureWeights,
    sim_threshold: float = DEFAULT_SIM_MIN,
    solver: AssignmentSolver = hungarian,
    kappa_rotor: float = KAPPA_ROTOR,
    kappa_wing: float = KAPPA_WING,
) -> List[MatchOutcome]:
    """
    Match VD tracks to AD identities.

    Args:
        vd_pids: PIDs estimated from confirmed tracks
        ad_pids: PIDs claimed in beacons, one per Did
        w: Feature weights
        sim_threshold: Minimum similarity for a feasible pair
        solver: Assignment strategy; the Hungarian method by default

    Returns:
        One outcome per real index on each side
    """
    cost = build_cost_matrix(vd_pids, ad_pids, w, sim_threshold, kappa_rotor, kappa_wing)
    outcomes = decode(cost, solver(cost))
    logger.debug(
        "mapped %d VD x %d AD -> %d matched",
        cost.n_vd,
        cost.n_ad,
        sum(isinstance(o, Matched) for o in outcomes),
    )
    return outcomes


def latest_per_did(ad_pids: Sequence[Pid]) -> List[Pid]:
    """Keep the most recent AD PID per Did, ordered by Did."""
    latest: Dict[object, Pid] = {}
    for pid in ad_pids:
        if pid.did is None:
            raise MappingError("AD PID without a Did")
        current = latest.get(pid.did)
        if current is None or pid.time_s >= current.time_s:
            latest[pid.did] = pid
    return [latest[did] for did in sorted(latest)]
