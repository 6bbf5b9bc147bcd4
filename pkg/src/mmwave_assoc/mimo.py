"""SVD beamforming, association-dependent interference, and per-user rates.

Beamformers are computed once per slot for every (UE, BS) pair from the
unscaled channels; only the power scaling depends on the activation
vector, so candidate associations evaluated by a solver reuse the SVDs.

Two evaluation paths coexist: the direct functions below follow the
covariance formula term by term, and RateEngine precomputes pairwise Gram
tables so solvers can rate thousands of candidate vectors cheaply.  The
test suite pins both paths against each other.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import ChannelSet
from .topology import InterferenceMode, Scenario

LN2 = math.log(2.0)

logger = logging.getLogger(__name__)

# Above this condition number the covariance is rebuilt from its
# eigendecomposition with a floor of noise_power * RELATIVE_EIG_FLOOR.
CONDITION_LIMIT = 1e12
RELATIVE_EIG_FLOOR = 1e-12

DROPPED = -1


class UtilityKind(str, Enum):
    SUM_RATE = "sum_rate"
    MIN_RATE = "min_rate"


class InfeasibleActivationError(ValueError):
    """Activation vector violates a per-BS user or stream budget."""


@dataclass(frozen=True)
class BeamformerPair:
    """Top singular vectors of one (UE, BS) channel.

    precoder (M, n) and combiner (N, n) have orthonormal columns; the
    precoder is unscaled (power scaling happens per activation vector).
    rank_deficient flags channels whose numerical rank is below the stream
    count; the padded directions carry ~zero singular values.
    """

    precoder: np.ndarray
    combiner: np.ndarray
    singular_values: np.ndarray
    rank_deficient: bool = False


@dataclass
class BeamformerSet:
    """BeamformerPair for every (UE, BS) combination of one slot."""

    pairs: list[list[BeamformerPair]]

    def pair(self, k: int, j: int) -> BeamformerPair:
        return self.pairs[k][j]

    @property
    def num_ue(self) -> int:
        return len(self.pairs)

    @property
    def num_bs(self) -> int:
        return len(self.pairs[0]) if self.pairs else 0


@dataclass
class RateReport:
    """Per-user rates and network utilities for one activation vector."""

    slot: int
    activation: object
    per_user_rate: np.ndarray
    per_pair_rate: dict[tuple[int, int], float]
    utility_sum: float
    utility_min: float


# ---------------------------------------------------------------------------
# beamformers
# ---------------------------------------------------------------------------

def svd_beamformers(h: np.ndarray, n_streams: int) -> BeamformerPair:
    """Precoder/combiner from the first n right/left singular vectors."""
    n_rx, n_tx = h.shape
    if n_streams > min(n_rx, n_tx):
        raise ValueError(
            f"stream count {n_streams} exceeds min channel dimension "
            f"{min(n_rx, n_tx)}")
    if not np.all(np.isfinite(h)):
        raise ValueError("channel matrix contains non-finite entries")
    left, sigma, right_h = np.linalg.svd(h, full_matrices=False)
    tol = sigma[0] * 1e-12 if sigma.size and sigma[0] > 0 else 0.0
    rank = int(np.sum(sigma > tol))
    return BeamformerPair(
        precoder=right_h[:n_streams].conj().T.copy(),
        combiner=left[:, :n_streams].copy(),
        singular_values=sigma[:n_streams].copy(),
        rank_deficient=rank < n_streams,
    )


def compute_beamformers(channel_set: ChannelSet, scenario: Scenario) -> BeamformerSet:
    """SVD beamformers for all (UE, BS) pairs of one slot."""
    pairs = [
        [svd_beamformers(channel_set.channels[k][j], ue.n_streams)
         for j in range(scenario.num_bs)]
        for k, ue in enumerate(scenario.ue_list)
    ]
    return BeamformerSet(pairs=pairs)


# ---------------------------------------------------------------------------
# activation-vector plumbing
# ---------------------------------------------------------------------------

def _as_assignments(beta, scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Normalize an activation vector to (assignments, per-UE stream counts)."""
    assignments = np.asarray(getattr(beta, "assignments", beta), dtype=int)
    streams = getattr(beta, "streams", None)
    if streams is None:
        streams = scenario.stream_demands()
    else:
        streams = np.asarray(streams, dtype=int)
    return assignments, streams


def _validate_assignments(assignments: np.ndarray, streams: np.ndarray,
                          scenario: Scenario, allow_dropped: bool) -> None:
    """Physical sanity for rate evaluation: valid entries and stream budgets.

    The per-BS user cap is a solver-side resource constraint (the
    stream-sharing baseline exceeds it by design) and is checked by
    association.is_feasible, not here.
    """
    if assignments.shape != (scenario.num_ue,):
        raise InfeasibleActivationError(
            f"activation vector has shape {assignments.shape}, expected "
            f"({scenario.num_ue},)")
    if np.any(assignments >= scenario.num_bs) or np.any(assignments < DROPPED):
        raise InfeasibleActivationError(
            f"activation entries must be BS indices in [0, {scenario.num_bs}) "
            f"or {DROPPED} (dropped)")
    if not allow_dropped and np.any(assignments == DROPPED):
        raise InfeasibleActivationError("dropped UEs not allowed here")
    for j, bs in enumerate(scenario.bs_list):
        load = int(streams[assignments == j].sum())
        if load > bs.max_streams:
            raise InfeasibleActivationError(
                f"BS {bs.id} stream load {load} > max_streams {bs.max_streams}")


def _per_user_share_w(assignments: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Per-BS transmit power share P_j / |Q_j| in Watts (full P_j if empty)."""
    served = assignments >= 0
    counts = np.bincount(assignments[served], minlength=scenario.num_bs)
    return scenario.bs_powers_w() / np.maximum(counts, 1)


def scale_precoders(beta, beamformers: BeamformerSet, scenario: Scenario,
                    ) -> dict[tuple[int, int], np.ndarray]:
    """Scale each served UE's precoder to its equal share of the BS power.

    BS power P_j is split equally over the |Q_j| served UEs and then over
    each UE's streams, so trace(F F*) = P_j / |Q_j| per UE and the per-BS
    sum meets the power budget exactly.  Returns {(k, j): scaled F} for
    served pairs only; dropped UEs transmit nothing.
    """
    assignments, streams = _as_assignments(beta, scenario)
    _validate_assignments(assignments, streams, scenario, allow_dropped=True)
    share = _per_user_share_w(assignments, scenario)
    scaled = {}
    for k, j in enumerate(assignments):
        if j < 0:
            continue
        n_eff = streams[k]
        factor = math.sqrt(share[j] / n_eff)
        scaled[(k, j)] = factor * beamformers.pair(k, j).precoder[:, :n_eff]
    return scaled


# ---------------------------------------------------------------------------
# interference and rates (direct path)
# ---------------------------------------------------------------------------

def interference_covariance(k: int, beta, beamformers: BeamformerSet,
                            channels: ChannelSet, scenario: Scenario,
                            mode: InterferenceMode | None = None) -> np.ndarray:
    """Interference-plus-noise covariance at UE k's combiner output.

    Association-dependent mode sums the precoders actually transmitted
    under beta (same-cell streams for other served UEs plus every other
    BS's served streams).  Full mode sums every UE's precoder at every BS
    regardless of beta, each carrying the same per-user power share it
    would have if served, so the association-dependent covariance is
    always dominated by the full one.
    """
    if mode is None:
        mode = scenario.interference_mode
    assignments, streams = _as_assignments(beta, scenario)
    _validate_assignments(assignments, streams, scenario, allow_dropped=True)
    j = assignments[k]
    if j < 0:
        raise InfeasibleActivationError(f"UE {k + 1} is dropped; no serving link")
    n_k = streams[k]
    combiner = beamformers.pair(k, j).combiner[:, :n_k]
    c_h = combiner.conj().T
    cov = scenario.noise_power_w * (c_h @ combiner)
    share = _per_user_share_w(assignments, scenario)
    num_ue = scenario.num_ue
    for l in range(num_ue):
        if mode is InterferenceMode.ASSOCIATION_DEPENDENT:
            targets = [assignments[l]] if assignments[l] >= 0 else []
        else:
            targets = range(scenario.num_bs)
        for i in targets:
            if l == k and i == j:
                continue
            n_l = streams[l]
            factor = math.sqrt(share[i] / n_l)
            f_li = factor * beamformers.pair(l, i).precoder[:, :n_l]
            x = c_h @ channels.channels[k][i] @ f_li
            cov = cov + x @ x.conj().T
    return cov


def _log2_det_ratio(cov: np.ndarray, signal: np.ndarray, noise_w: float) -> float:
    """log2 det(I + cov^-1 signal) for Hermitian positive definite cov."""
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals[0] <= 0 or eigvals[-1] / eigvals[0] > CONDITION_LIMIT:
        logger.warning("covariance condition number beyond %.0e; applying "
                       "eigenvalue floor", CONDITION_LIMIT)
        vals, vecs = np.linalg.eigh(cov)
        vals = np.maximum(vals, noise_w * RELATIVE_EIG_FLOOR)
        cov = (vecs * vals) @ vecs.conj().T
    sign_num, logdet_num = np.linalg.slogdet(cov + signal)
    sign_den, logdet_den = np.linalg.slogdet(cov)
    return max(float((logdet_num - logdet_den) / LN2), 0.0)


def instantaneous_rate(k: int, beta, beamformers: BeamformerSet,
                       channels: ChannelSet, scenario: Scenario,
                       mode: InterferenceMode | None = None) -> float:
    """Rate of UE k (bits/s/Hz) under beta; 0 for a dropped UE."""
    assignments, streams = _as_assignments(beta, scenario)
    j = assignments[k]
    if j < 0:
        return 0.0
    cov = interference_covariance(k, beta, beamformers, channels, scenario, mode)
    n_k = streams[k]
    share = _per_user_share_w(assignments, scenario)
    pair = beamformers.pair(k, j)
    f_kj = math.sqrt(share[j] / n_k) * pair.precoder[:, :n_k]
    x = pair.combiner[:, :n_k].conj().T @ channels.channels[k][j] @ f_kj
    return _log2_det_ratio(cov, x @ x.conj().T, scenario.noise_power_w)


def network_rates(beta, beamformers: BeamformerSet, channels: ChannelSet,
                  scenario: Scenario,
                  mode: InterferenceMode | None = None) -> RateReport:
    """Rates of all K UEs plus the sum and min utilities for one slot."""
    assignments, streams = _as_assignments(beta, scenario)
    _validate_assignments(assignments, streams, scenario, allow_dropped=True)
    rates = np.zeros(scenario.num_ue)
    per_pair: dict[tuple[int, int], float] = {}
    for k, j in enumerate(assignments):
        if j < 0:
            continue
        rates[k] = instantaneous_rate(k, beta, beamformers, channels, scenario, mode)
        per_pair[(k, int(j))] = float(rates[k])
    return RateReport(
        slot=channels.slot,
        activation=beta,
        per_user_rate=rates,
        per_pair_rate=per_pair,
        utility_sum=float(rates.sum()),
        utility_min=float(rates.min()) if rates.size else 0.0,
    )


def utility(report: RateReport, kind: UtilityKind) -> float:
    if kind is UtilityKind.SUM_RATE:
        return report.utility_sum
    if kind is UtilityKind.MIN_RATE:
        return report.utility_min
    raise ValueError(f"unknown utility kind {kind!r}")


def utility_of_rates(rates: np.ndarray, kind: UtilityKind) -> float:
    if kind is UtilityKind.SUM_RATE:
        return float(rates.sum())
    if kind is UtilityKind.MIN_RATE:
        return float(rates.min()) if rates.size else 0.0
    raise ValueError(f"unknown utility kind {kind!r}")


# ---------------------------------------------------------------------------
# fast evaluator for solvers
# ---------------------------------------------------------------------------

class RateEngine:
    """Vectorized rate evaluation over candidate activation vectors.

    For every combiner choice (k, j) and interfering precoder (l, i) the
    unscaled Gram matrix of the combined path is precomputed once per
    slot; rating a candidate then costs one weighted gather-sum and two
    batched log-dets.  Requires a uniform stream count across UEs (the
    configurations solvers operate on); heterogeneous setups use the
    direct path instead.
    """

    def __init__(self, channel_set: ChannelSet, beamformers: BeamformerSet,
                 scenario: Scenario):
        demands = scenario.stream_demands()
        if demands.size == 0:
            raise ValueError("scenario has no UEs")
        if np.any(demands != demands[0]):
            raise ValueError("RateEngine requires a uniform per-UE stream count")
        self.scenario = scenario
        self.num_ue = scenario.num_ue
        self.num_bs = scenario.num_bs
        self.n_streams = int(demands[0])
        self.noise_w = scenario.noise_power_w
        self.powers_w = scenario.bs_powers_w()

        k_count, j_count, n = self.num_ue, self.num_bs, self.n_streams
        f_by_bs = [
            np.stack([beamformers.pair(l, i).precoder for l in range(k_count)])
            for i in range(j_count)
        ]  # per BS: (K, M_i, n)
        self._gram = np.empty((k_count, j_count, k_count, j_count, n, n), dtype=complex)
        self._sig2 = np.empty((k_count, j_count, n), dtype=float)
        for k in range(k_count):
            for j in range(j_count):
                pair = beamformers.pair(k, j)
                c_h = pair.combiner.conj().T
                self._sig2[k, j] = pair.singular_values ** 2
                for i in range(j_count):
                    t = c_h @ channel_set.channels[k][i]
                    x = np.einsum("am,lmb->lab", t, f_by_bs[i])
                    self._gram[k, j, :, i] = np.einsum("lab,lcb->lac", x, x.conj())
        self._arange = np.arange(k_count)
        self._diag = np.arange(n)

    def per_user_rates(self, assignments, mode: InterferenceMode) -> np.ndarray:
        a = np.asarray(assignments, dtype=int)
        k_count, j_count, n = self.num_ue, self.num_bs, self.n_streams
        served = a >= 0
        a_safe = np.where(served, a, 0)
        counts = np.bincount(a[served], minlength=j_count)
        share = self.powers_w / np.maximum(counts, 1)
        weight = np.where(served, share[a_safe] / n, 0.0)
        idx = self._arange
        if mode is InterferenceMode.ASSOCIATION_DEPENDENT:
            gathered = self._gram[idx[:, None], a_safe[:, None],
                                  idx[None, :], a_safe[None, :]]
            weights = np.broadcast_to(weight, (k_count, k_count)).copy()
            weights[idx, idx] = 0.0
            weights[:, ~served] = 0.0
            cov = np.einsum("kl,klab->kab", weights, gathered)
        else:
            gathered = self._gram[idx, a_safe]  # (K, K, J, n, n)
            pair_weight = share / n             # any pair at BS i, uniform n
            weights = np.broadcast_to(pair_weight, (k_count, k_count, j_count)).copy()
            weights[idx, idx, a_safe] = 0.0     # own serving pair
            cov = np.einsum("kli,kliab->kab", weights, gathered)
        cov[:, self._diag, self._diag] += self.noise_w
        signal = self._sig2[idx, a_safe] * weight[:, None]
        cov_plus = cov.copy()
        cov_plus[:, self._diag, self._diag] += signal
        _, logdet_num = np.linalg.slogdet(cov_plus)
        _, logdet_den = np.linalg.slogdet(cov)
        rates = np.maximum((logdet_num - logdet_den) / LN2, 0.0)
        rates[~served] = 0.0
        return rates

    def utility(self, assignments, kind: UtilityKind,
                mode: InterferenceMode) -> float:
        return utility_of_rates(self.per_user_rates(assignments, mode), kind)


class DirectEvaluator:
    """Rate evaluator with the same interface as RateEngine, built on the
    term-by-term covariance path; handles heterogeneous stream counts."""

    def __init__(self, channel_set: ChannelSet, beamformers: BeamformerSet,
                 scenario: Scenario):
        self.channel_set = channel_set
        self.beamformers = beamformers
        self.scenario = scenario

    def per_user_rates(self, assignments, mode: InterferenceMode) -> np.ndarray:
        report = network_rates(assignments, self.beamformers, self.channel_set,
                               self.scenario, mode)
        return report.per_user_rate

    def utility(self, assignments, kind: UtilityKind,
                mode: InterferenceMode) -> float:
        return utility_of_rates(self.per_user_rates(assignments, mode), kind)


def make_rate_evaluator(channel_set: ChannelSet, beamformers: BeamformerSet,
                        scenario: Scenario):
    """RateEngine when the stream counts allow it, DirectEvaluator otherwise."""
    demands = scenario.stream_demands()
    if demands.size and np.all(demands == demands[0]):
        return RateEngine(channel_set, beamformers, scenario)
    return DirectEvaluator(channel_set, beamformers, scenario)
