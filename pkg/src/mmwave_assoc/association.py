"""Activation-vector types, feasibility, and the user-association solvers.

The decision variable is the activation vector: one serving-BS index per
UE for one slot (0-based internally; exported tables use 1-based ids).
Baseline policies may mark UEs as dropped (DROPPED sentinel), which rate
evaluation treats as zero-rate and silent.

Solvers: worst-connection-swapping local search, an exhaustive oracle for
small instances, and the two max-received-power baselines with drop /
stream-sharing overload policies.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import ChannelSet
from .mimo import (
    DROPPED,
    BeamformerSet,
    InfeasibleActivationError,
    RateReport,
    UtilityKind,
    make_rate_evaluator,
    utility_of_rates,
)
from .topology import InterferenceMode, Scenario


@dataclass(frozen=True)
class ActivationVector:
    """Per-slot association: assignments[k] is UE k's serving BS (0-based)
    or DROPPED.  streams optionally overrides per-UE stream counts (set by
    the stream-sharing baseline)."""

    assignments: tuple[int, ...]
    streams: tuple[int, ...] | None = None

    def to_array(self) -> np.ndarray:
        return np.asarray(self.assignments, dtype=int)

    @property
    def num_dropped(self) -> int:
        return sum(1 for a in self.assignments if a == DROPPED)


@dataclass(frozen=True)
class FeasibilityCheck:
    ok: bool
    diagnostics: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class SolveReport:
    """Solver outcome: best activation vector plus convergence bookkeeping.

    utility_trace holds the best-so-far utility per swapping iteration
    (entry 0 is the initial vector), which is non-decreasing by
    construction.  wall_time_s covers the solve loop only.
    """

    best: ActivationVector
    utility_trace: list[float]
    iterations: int
    switches: int
    wall_time_s: float
    evaluations: int
    converged: bool = True

    @property
    def utility(self) -> float:
        return self.utility_trace[-1]


DEFAULT_EXHAUSTIVE_BUDGET = 1_000_000


class ExhaustiveBudgetError(RuntimeError):
    """Search space exceeds the configured enumeration budget."""


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------

def is_feasible(beta: ActivationVector | np.ndarray, scenario: Scenario,
                allow_dropped: bool = False) -> FeasibilityCheck:
    """Check unique association and the per-BS user/stream budgets."""
    assignments = np.asarray(getattr(beta, "assignments", beta), dtype=int)
    streams = getattr(beta, "streams", None)
    streams = scenario.stream_demands() if streams is None else np.asarray(streams)
    diags: list[str] = []
    if assignments.shape != (scenario.num_ue,):
        return FeasibilityCheck(False, (
            f"activation vector has shape {assignments.shape}, expected "
            f"({scenario.num_ue},)",))
    if np.any(assignments >= scenario.num_bs) or np.any(assignments < DROPPED):
        diags.append(f"entries must be BS indices in [0, {scenario.num_bs}) or "
                     f"{DROPPED} (dropped)")
    elif not allow_dropped:
        for k in np.flatnonzero(assignments == DROPPED):
            diags.append(f"UE {k + 1} has no serving BS")
    for j, bs in enumerate(scenario.bs_list):
        mask = assignments == j
        users = int(mask.sum())
        load = int(streams[mask].sum())
        if users > bs.max_users:
            diags.append(f"BS {bs.id} user count {users} > {bs.max_users}")
        if load > bs.max_streams:
            diags.append(f"BS {bs.id} stream load {load} > {bs.max_streams}")
    return FeasibilityCheck(not diags, tuple(diags))


def _loads_ok(assignments: np.ndarray, streams: np.ndarray,
              max_users: np.ndarray, max_streams: np.ndarray) -> bool:
    served = assignments >= 0
    counts = np.bincount(assignments[served], minlength=max_users.size)
    if np.any(counts > max_users):
        return False
    loads = np.bincount(assignments[served], weights=streams[served],
                        minlength=max_users.size)
    return not np.any(loads > max_streams)


def random_feasible(scenario: Scenario, seed) -> ActivationVector:
    """Feasible activation vector from a shuffled greedy assignment.

    UEs in random order each pick a uniformly random BS among those with
    remaining user and stream capacity.  Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    demands = scenario.stream_demands()
    num_ue, num_bs = scenario.num_ue, scenario.num_bs
    max_users = np.array([bs.max_users for bs in scenario.bs_list])
    max_streams = np.array([bs.max_streams for bs in scenario.bs_list])
    if num_ue:
        worst_demand = int(demands.max())
        slots = np.minimum(max_users, max_streams // worst_demand).sum()
        if slots < num_ue:
            raise InfeasibleActivationError(
                f"capacity shortfall: {slots} assignable UE slots < {num_ue} UEs")
    for _ in range(100):
        order = rng.permutation(num_ue)
        users = np.zeros(num_bs, dtype=int)
        loads = np.zeros(num_bs, dtype=int)
        assignments = np.full(num_ue, DROPPED, dtype=int)
        stuck = False
        for k in order:
            open_bs = np.flatnonzero(
                (users + 1 <= max_users) & (loads + demands[k] <= max_streams))
            if open_bs.size == 0:
                stuck = True  # only possible with heterogeneous demands
                break
            j = int(open_bs[rng.integers(open_bs.size)])
            assignments[k] = j
            users[j] += 1
            loads[j] += demands[k]
        if not stuck:
            return ActivationVector(tuple(int(a) for a in assignments))
    raise InfeasibleActivationError(
        "could not construct a feasible activation vector in 100 attempts")


# ---------------------------------------------------------------------------
# worst connection
# ---------------------------------------------------------------------------

def _worst_index(rates: np.ndarray, assignments: np.ndarray) -> int:
    """Served UE with the lowest serving rate; ties go to the smallest index."""
    masked = np.where(assignments >= 0, rates, np.inf)
    return int(np.argmin(masked))


def worst_connection(beta: ActivationVector, report: RateReport) -> tuple[int, int]:
    """(UE, serving BS) of the weakest current connection under beta."""
    assignments = beta.to_array()
    k = _worst_index(np.asarray(report.per_user_rate), assignments)
    return k, int(assignments[k])


# ---------------------------------------------------------------------------
# worst-connection-swapping solver
# ---------------------------------------------------------------------------

def wcs_solve(channels: ChannelSet, beamformers: BeamformerSet, scenario: Scenario,
              utility_kind: UtilityKind, seed, *,
              interference_mode: InterferenceMode = InterferenceMode.ASSOCIATION_DEPENDENT,
              evaluator=None, stall_window: int | None = None,
              max_iterations: int | None = None) -> SolveReport:
    """Local search that repeatedly re-homes the worst connection.

    Each swapping iteration exchanges the pivot UE's assignment with every
    other UE's (K-1 candidates; exchanges preserve per-BS loads for
    uniform stream demands, and load-violating candidates are skipped
    otherwise) and selects the utility argmax over the candidates plus the
    incumbent.  The next pivot is the worst-rated connection of the
    selected vector.  When no candidate improves, the pivot's entry is
    exchanged with a cyclic target l = mod(m-1, K) + 1 and the switched
    vector becomes the next incumbent while the pivot is kept, so the
    pre-switch vector stays reachable in the next comparison set; a
    switch onto itself or onto a load-violating vector is a no-op, and m
    advances either way.

    The stall counter advances only on iterations whose swap step keeps
    the incumbent (each of those fires one switch), so the search stops
    after a full cycle of K fruitless switch targets without a new best
    vector; iterations are nevertheless counted per swap step.  A safety
    cap (default 50*K iterations) guarantees termination.  utility_trace
    records the best-so-far utility per iteration.
    """
    num_ue = scenario.num_ue
    demands = scenario.stream_demands()
    uniform = bool(np.all(demands == demands[0])) if num_ue else True
    max_users = np.array([bs.max_users for bs in scenario.bs_list])
    max_streams = np.array([bs.max_streams for bs in scenario.bs_list])
    if evaluator is None:
        evaluator = make_rate_evaluator(channels, beamformers, scenario)
    window = stall_window if stall_window is not None else num_ue
    cap = max_iterations if max_iterations is not None else 50 * num_ue

    start = time.perf_counter()
    current = random_feasible(scenario, seed).to_array()
    rates = evaluator.per_user_rates(current, interference_mode)
    current_util = utility_of_rates(rates, utility_kind)
    evaluations = 1
    pivot = _worst_index(rates, current)
    best = current.copy()
    best_util = current_util
    trace = [best_util]
    iterations = switches = 0
    switch_m = 1  # cyclic switch counter, persists across iterations
    stall = 0
    converged = False

    while iterations < cap:
        iterations += 1
        chosen = None
        chosen_util = current_util
        chosen_rates = rates
        cand_cache: dict[int, tuple[float, np.ndarray]] = {}
        for other in range(num_ue):
            if other == pivot:
                continue
            cand = current.copy()
            cand[pivot], cand[other] = cand[other], cand[pivot]
            if not uniform and not _loads_ok(cand, demands, max_users, max_streams):
                continue
            cand_rates = evaluator.per_user_rates(cand, interference_mode)
            cand_util = utility_of_rates(cand_rates, utility_kind)
            evaluations += 1
            cand_cache[other] = (cand_util, cand_rates)
            if cand_util > chosen_util:
                chosen, chosen_util, chosen_rates = cand, cand_util, cand_rates

        stalled = chosen is None
        if not stalled:
            current, current_util, rates = chosen, chosen_util, chosen_rates
        pivot = _worst_index(rates, current)  # worst of the selected vector
        if current_util > best_util:
            best, best_util, stall = current.copy(), current_util, 0
        elif stalled:
            stall += 1
        trace.append(best_util)
        if stall >= window:
            converged = True
            break

        if stalled:
            target = (switch_m - 1) % num_ue
            switch_m += 1
            if target != pivot:
                switched = current.copy()
                switched[pivot], switched[target] = switched[target], switched[pivot]
                if uniform or _loads_ok(switched, demands, max_users, max_streams):
                    switches += 1
                    current = switched
                    if target in cand_cache:
                        current_util, rates = cand_cache[target]
                    else:
                        rates = evaluator.per_user_rates(current, interference_mode)
                        current_util = utility_of_rates(rates, utility_kind)
                        evaluations += 1
                    # pivot intentionally stays the pre-switch worst

    wall = time.perf_counter() - start
    return SolveReport(
        best=ActivationVector(tuple(int(a) for a in best)),
        utility_trace=trace,
        iterations=iterations,
        switches=switches,
        wall_time_s=wall,
        evaluations=evaluations,
        converged=converged,
    )


def switch_target(m: int, num_ue: int) -> int:
    """0-based cyclic switch target for the m-th switch step (m starts at 1)."""
    return (m - 1) % num_ue


# ---------------------------------------------------------------------------
# exhaustive oracle
# ---------------------------------------------------------------------------

def exhaustive_solve(channels: ChannelSet, beamformers: BeamformerSet,
                     scenario: Scenario, utility_kind: UtilityKind, *,
                     interference_mode: InterferenceMode = InterferenceMode.ASSOCIATION_DEPENDENT,
                     evaluator=None, budget: int = DEFAULT_EXHAUSTIVE_BUDGET) -> SolveReport:
    """Enumerate every feasible activation vector and return the exact argmax.

    Ties keep the lexicographically smallest vector.  Refuses when J^K
    exceeds the enumeration budget.
    """
    num_ue, num_bs = scenario.num_ue, scenario.num_bs
    total = num_bs ** num_ue
    if total > budget:
        raise ExhaustiveBudgetError(
            f"search space J^K = {num_bs}^{num_ue} = {total} exceeds budget {budget}")
    if evaluator is None:
        evaluator = make_rate_evaluator(channels, beamformers, scenario)
    demands = scenario.stream_demands()
    max_users = np.array([bs.max_users for bs in scenario.bs_list])
    max_streams = np.array([bs.max_streams for bs in scenario.bs_list])

    start = time.perf_counter()
    best = None
    best_util = -math.inf
    evaluations = 0
    for cand_tuple in itertools.product(range(num_bs), repeat=num_ue):
        cand = np.asarray(cand_tuple, dtype=int)
        if not _loads_ok(cand, demands, max_users, max_streams):
            continue
        cand_util = evaluator.utility(cand, utility_kind, interference_mode)
        evaluations += 1
        if cand_util > best_util:
            best, best_util = cand, cand_util
    wall = time.perf_counter() - start
    if best is None:
        raise InfeasibleActivationError("no feasible activation vector exists")
    return SolveReport(
        best=ActivationVector(tuple(int(a) for a in best)),
        utility_trace=[best_util],
        iterations=evaluations,
        switches=0,
        wall_time_s=wall,
        evaluations=evaluations,
    )


# ---------------------------------------------------------------------------
# max received-power baselines
# ---------------------------------------------------------------------------

class AssignmentPolicy(str, Enum):
    """Overload handling for the max received-power baselines."""

    DROP = "drop"
    SHARE_DROP = "share_drop"


def _pair_scores(channel_set: ChannelSet, scenario: Scenario,
                 use_estimates: bool) -> np.ndarray:
    """Received-power proxy P_j * sigma_max(H_kj)^2 for every (UE, BS) pair."""
    matrices = channel_set.estimates if use_estimates else channel_set.channels
    if matrices is None:
        raise ValueError("channel set carries no estimate matrices")
    powers = scenario.bs_powers_w()
    scores = np.empty((scenario.num_ue, scenario.num_bs))
    for k in range(scenario.num_ue):
        for j in range(scenario.num_bs):
            top = np.linalg.svd(matrices[k][j], compute_uv=False)[0]
            scores[k, j] = powers[j] * top * top
    return scores


def max_sinr_assign(channel_set: ChannelSet, scenario: Scenario,
                    policy: AssignmentPolicy,
                    use_estimates: bool = False) -> ActivationVector:
    """Every UE requests its strongest BS; overloaded BSs drop or share.

    Scores are the received-power proxy P_j * sigma_max(H_kj)^2 on the
    instantaneous channel (or the large-scale estimate).  Under DROP each
    BS admits requesters in descending score order while both its user cap
    and stream budget hold, dropping the rest.  Under SHARE_DROP an
    over-requested BS serves up to max_streams UEs at a uniformly reduced
    stream count (minimum 1) and drops the remainder; the user cap is
    superseded by the stream budget in that policy.
    """
    scores = _pair_scores(channel_set, scenario, use_estimates)
    requests = np.argmax(scores, axis=1)
    demands = scenario.stream_demands()
    assignments = np.full(scenario.num_ue, DROPPED, dtype=int)
    streams = demands.copy()
    for j, bs in enumerate(scenario.bs_list):
        requesters = np.flatnonzero(requests == j)
        if requesters.size == 0:
            continue
        order = requesters[np.argsort(-scores[requesters, j], kind="stable")]
        if policy is AssignmentPolicy.DROP:
            users = load = 0
            for k in order:
                if users + 1 > bs.max_users or load + demands[k] > bs.max_streams:
                    break  # prefix cut: this and all weaker requesters drop
                assignments[k] = j
                users += 1
                load += demands[k]
        else:  # SHARE_DROP
            if int(demands[order].sum()) <= bs.max_streams:
                assignments[order] = j
                continue
            n_served = min(order.size, bs.max_streams)
            shared = max(1, bs.max_streams // n_served)
            for k in order[:n_served]:
                assignments[k] = j
                streams[k] = min(demands[k], shared)
    override = streams if np.any(streams != demands) else None
    return ActivationVector(
        tuple(int(a) for a in assignments),
        None if override is None else tuple(int(s) for s in override),
    )


# ---------------------------------------------------------------------------
# fractional association
# ---------------------------------------------------------------------------

def fractional_from_activation(activation_matrix: np.ndarray, num_bs: int) -> np.ndarray:
    """Fraction of slots each UE spent on each BS.

    activation_matrix is (K, T) with 0-based BS indices (DROPPED allowed);
    returns the (K, J) association matrix whose rows sum to 1 when the UE
    was served in every slot.
    """
    b = np.asarray(activation_matrix, dtype=int)
    if b.ndim != 2 or b.shape[1] < 1:
        raise ValueError(f"activation matrix must be (K, T) with T >= 1, got {b.shape}")
    num_ue, num_slots = b.shape
    assoc = np.zeros((num_ue, num_bs))
    for j in range(num_bs):
        assoc[:, j] = (b == j).sum(axis=1) / num_slots
    return assoc
