"""Seeded multi-slot experiments, aggregation, and result export.

An experiment runs T slots: move UEs, draw channels, precompute
beamformers, solve the chosen association scheme, and rate the resulting
activation vector on the true channels.  Everything derives from
(spec, seed) through named substreams, so repeated runs are bit-identical;
exported files therefore exclude wall-clock timing (scaling studies, whose
point is timing, keep it).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import association as assoc
from . import channel as chan
from . import mimo
from . import topology as topo
from .mimo import UtilityKind
from .topology import CsiMode, InterferenceMode, Scenario, ScenarioError


class Scheme(str, Enum):
    WCS = "wcs"
    EXHAUSTIVE = "exhaustive"
    MAX_SINR_DROP = "max_sinr_drop"
    MAX_SINR_SHARE_DROP = "max_sinr_share_drop"


SOLVER_SCHEMES = frozenset({Scheme.WCS, Scheme.EXHAUSTIVE})


def effective_interference_mode(override: InterferenceMode | None,
                                scenario: Scenario, scheme: Scheme) -> InterferenceMode:
    """Explicit override > scenario default for solver schemes; the
    max received-power baselines default to full interference."""
    if override is not None:
        return override
    if scheme in SOLVER_SCHEMES:
        return scenario.interference_mode
    return InterferenceMode.FULL


@dataclass
class ExperimentSpec:
    """One experiment: scenario plus scheme/mode/slot/seed choices.

    csi_mode, interference_mode and slots default to the scenario values
    (interference additionally defaults per scheme, see
    effective_interference_mode).
    """

    scenario: Scenario
    scheme: Scheme = Scheme.WCS
    utility: UtilityKind = UtilityKind.SUM_RATE
    csi_mode: CsiMode | None = None
    interference_mode: InterferenceMode | None = None
    slots: int | None = None
    seed: int = 0

    def resolved_csi(self) -> CsiMode:
        return self.csi_mode if self.csi_mode is not None else self.scenario.csi_mode

    def resolved_slots(self) -> int:
        return self.slots if self.slots is not None else self.scenario.slots


@dataclass
class ExperimentResult:
    """Per-slot records and aggregates of one (scheme, scenario, seed) run."""

    spec_echo: dict
    scheme: Scheme
    mean_spectral_efficiency: float
    per_user_rate: np.ndarray          # (K,) time-averaged
    association: np.ndarray            # (K, J) fraction of slots
    activation: np.ndarray             # (T, K), 0-based BS index or -1
    stream_counts: np.ndarray          # (T, K) effective per-UE streams
    rates: np.ndarray                  # (T, K) bits/s/Hz
    utility_sum_per_slot: np.ndarray
    utility_min_per_slot: np.ndarray
    solver_iterations: list[int] | None = None
    solver_evaluations: list[int] | None = None
    solver_switches: list[int] | None = None
    utility_traces: list[list[float]] | None = None
    solver_wall_time_s: float | None = None  # in-memory only, never exported

    @property
    def num_slots(self) -> int:
        return self.rates.shape[0]

    @property
    def num_ue(self) -> int:
        return self.rates.shape[1]

    def to_payload(self) -> dict:
        payload = {
            "spec": self.spec_echo,
            "scheme": self.scheme.value,
            "mean_spectral_efficiency": self.mean_spectral_efficiency,
            "per_user_rate": self.per_user_rate.tolist(),
            "association": self.association.tolist(),
            "activation": self.activation.tolist(),
            "stream_counts": self.stream_counts.tolist(),
            "rates": self.rates.tolist(),
            "utility_sum_per_slot": self.utility_sum_per_slot.tolist(),
            "utility_min_per_slot": self.utility_min_per_slot.tolist(),
            "solver_iterations": self.solver_iterations,
            "solver_evaluations": self.solver_evaluations,
            "solver_switches": self.solver_switches,
            "utility_traces": self.utility_traces,
        }
        return payload

    @classmethod
    def from_payload(cls, payload: dict) -> "ExperimentResult":
        return cls(
            spec_echo=payload["spec"],
            scheme=Scheme(payload["scheme"]),
            mean_spectral_efficiency=payload["mean_spectral_efficiency"],
            per_user_rate=np.asarray(payload["per_user_rate"], dtype=float),
            association=np.asarray(payload["association"], dtype=float),
            activation=np.asarray(payload["activation"], dtype=int),
            stream_counts=np.asarray(payload["stream_counts"], dtype=int),
            rates=np.asarray(payload["rates"], dtype=float),
            utility_sum_per_slot=np.asarray(payload["utility_sum_per_slot"], dtype=float),
            utility_min_per_slot=np.asarray(payload["utility_min_per_slot"], dtype=float),
            solver_iterations=payload.get("solver_iterations"),
            solver_evaluations=payload.get("solver_evaluations"),
            solver_switches=payload.get("solver_switches"),
            utility_traces=payload.get("utility_traces"),
        )


# ---------------------------------------------------------------------------
# experiment execution
# ---------------------------------------------------------------------------

def _seed_int(seed_seq: np.random.SeedSequence) -> int:
    return int(seed_seq.generate_state(1, np.uint64)[0])


def _spec_echo(scenario: Scenario, scheme: Scheme, utility: UtilityKind,
               csi: CsiMode, interference: InterferenceMode, slots: int,
               seed: int) -> dict:
    return {
        "scenario": topo.scenario_to_dict(scenario),
        "scheme": scheme.value,
        "utility": utility.value,
        "csi_mode": csi.value,
        "interference_mode": interference.value,
        "slots": slots,
        "seed": seed,
    }


def run_schemes(scenario: Scenario, schemes: list[Scheme], utility: UtilityKind,
                csi_mode: CsiMode | None = None,
                interference_mode: InterferenceMode | None = None,
                slots: int | None = None, seed: int = 0,
                ) -> dict[Scheme, ExperimentResult]:
    """Run several schemes on shared channel realizations (paired seeds).

    Positions, channels, and the solver's initial-vector seed are common
    across schemes per slot, so scheme differences are not masked by draw
    noise.  Raises ScenarioError when the scenario is invalid.
    """
    diags = topo.validate_scenario(scenario)
    if diags:
        raise ScenarioError("invalid scenario: " + "; ".join(diags))
    if Scheme.EXHAUSTIVE in schemes:
        total = scenario.num_bs ** scenario.num_ue
        if total > assoc.DEFAULT_EXHAUSTIVE_BUDGET:
            raise assoc.ExhaustiveBudgetError(
                f"search space J^K = {scenario.num_bs}^{scenario.num_ue} = "
                f"{total} exceeds budget {assoc.DEFAULT_EXHAUSTIVE_BUDGET}")
    csi = csi_mode if csi_mode is not None else scenario.csi_mode
    num_slots = slots if slots is not None else scenario.slots
    num_ue, num_bs = scenario.num_ue, scenario.num_bs
    want_estimates = csi is CsiMode.LARGE_SCALE_ONLY

    root = np.random.SeedSequence(seed)
    place_ss, mobility_ss, channel_ss, solver_ss = root.spawn(4)
    mobility_children = mobility_ss.spawn(num_slots)
    channel_children = channel_ss.spawn(num_slots)
    solver_children = solver_ss.spawn(num_slots)

    demands = scenario.stream_demands()
    acc = {
        scheme: {
            "activation": np.full((num_slots, num_ue), mimo.DROPPED, dtype=int),
            "streams": np.tile(demands, (num_slots, 1)),
            "rates": np.zeros((num_slots, num_ue)),
            "usum": np.zeros(num_slots),
            "umin": np.zeros(num_slots),
            "iterations": [], "evaluations": [], "switches": [], "traces": [],
            "wall": 0.0,
        }
        for scheme in schemes
    }
    modes = {scheme: effective_interference_mode(interference_mode, scenario, scheme)
             for scheme in schemes}
    need_solver = [s for s in schemes if s in SOLVER_SCHEMES]

    positions = topo.initial_positions(scenario, _seed_int(place_ss))
    frozen = topo.pinned_mask(scenario)
    for t in range(num_slots):
        if t > 0 and scenario.mobility_box_m > 0:
            positions = topo.mobility_step(positions, scenario,
                                           _seed_int(mobility_children[t]),
                                           frozen=frozen)
        try:
            channel_set = chan.generate_channel_set(
                scenario, positions, _seed_int(channel_children[t]), slot=t,
                with_estimates=want_estimates)
            beamformers = mimo.compute_beamformers(channel_set, scenario)
            if csi is CsiMode.LARGE_SCALE_ONLY:
                decision_set = chan.ChannelSet(slot=t, channels=channel_set.estimates,
                                               records=channel_set.records)
                decision_bf = mimo.compute_beamformers(decision_set, scenario)
            else:
                decision_set, decision_bf = channel_set, beamformers
            evaluator = (mimo.make_rate_evaluator(decision_set, decision_bf, scenario)
                         if need_solver else None)
            solver_seed = _seed_int(solver_children[t])
            for scheme in schemes:
                mode = modes[scheme]
                report = None
                if scheme is Scheme.WCS:
                    report = assoc.wcs_solve(decision_set, decision_bf, scenario,
                                             utility, solver_seed,
                                             interference_mode=mode,
                                             evaluator=evaluator)
                    beta = report.best
                elif scheme is Scheme.EXHAUSTIVE:
                    report = assoc.exhaustive_solve(decision_set, decision_bf,
                                                    scenario, utility,
                                                    interference_mode=mode,
                                                    evaluator=evaluator)
                    beta = report.best
                elif scheme is Scheme.MAX_SINR_DROP:
                    beta = assoc.max_sinr_assign(channel_set, scenario,
                                                 assoc.AssignmentPolicy.DROP,
                                                 use_estimates=want_estimates)
                else:
                    beta = assoc.max_sinr_assign(channel_set, scenario,
                                                 assoc.AssignmentPolicy.SHARE_DROP,
                                                 use_estimates=want_estimates)
                rate_report = mimo.network_rates(beta, beamformers, channel_set,
                                                 scenario, mode)
                slot_acc = acc[scheme]
                slot_acc["activation"][t] = beta.to_array()
                if beta.streams is not None:
                    slot_acc["streams"][t] = beta.streams
                slot_acc["rates"][t] = rate_report.per_user_rate
                slot_acc["usum"][t] = rate_report.utility_sum
                slot_acc["umin"][t] = rate_report.utility_min
                if report is not None:
                    slot_acc["iterations"].append(report.iterations)
                    slot_acc["evaluations"].append(report.evaluations)
                    slot_acc["switches"].append(report.switches)
                    slot_acc["traces"].append(list(report.utility_trace))
                    slot_acc["wall"] += report.wall_time_s
        except Exception as exc:
            raise RuntimeError(f"experiment failed at slot {t + 1}: {exc}") from exc

    results: dict[Scheme, ExperimentResult] = {}
    for scheme in schemes:
        a = acc[scheme]
        solver = scheme in SOLVER_SCHEMES
        results[scheme] = ExperimentResult(
            spec_echo=_spec_echo(scenario, scheme, utility, csi, modes[scheme],
                                 num_slots, seed),
            scheme=scheme,
            mean_spectral_efficiency=float(a["usum"].mean()),
            per_user_rate=a["rates"].mean(axis=0),
            association=assoc.fractional_from_activation(a["activation"].T, num_bs),
            activation=a["activation"],
            stream_counts=a["streams"],
            rates=a["rates"],
            utility_sum_per_slot=a["usum"],
            utility_min_per_slot=a["umin"],
            solver_iterations=a["iterations"] if solver else None,
            solver_evaluations=a["evaluations"] if solver else None,
            solver_switches=a["switches"] if solver else None,
            utility_traces=a["traces"] if solver else None,
            solver_wall_time_s=a["wall"] if solver else None,
        )
    return results


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run one scheme per its spec; see run_schemes for the slot loop."""
    results = run_schemes(spec.scenario, [spec.scheme], spec.utility,
                          csi_mode=spec.csi_mode,
                          interference_mode=spec.interference_mode,
                          slots=spec.resolved_slots(), seed=spec.seed)
    return results[spec.scheme]


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def rate_cdf(samples, grid) -> np.ndarray:
    """Empirical CDF of the rate samples at the given thresholds."""
    values = np.sort(np.asarray(samples, dtype=float).ravel())
    if values.size == 0:
        raise ValueError("rate_cdf requires at least one sample")
    thresholds = np.atleast_1d(np.asarray(grid, dtype=float))
    return np.searchsorted(values, thresholds, side="right") / values.size


def rate_histogram(samples, bin_width: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Density histogram of rate samples; returns (bin_edges, density)."""
    values = np.asarray(samples, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("rate_histogram requires at least one sample")
    top = max(values.max(), bin_width)
    edges = np.arange(0.0, top + bin_width, bin_width)
    density, _ = np.histogram(values, bins=edges, density=True)
    return edges, density


# ---------------------------------------------------------------------------
# scaling study
# ---------------------------------------------------------------------------

@dataclass
class ScalingRow:
    num_ue: int
    runs: int
    mean_iterations: float
    std_iterations: float
    min_iterations: int
    max_iterations: int
    mean_wall_time_s: float
    mean_spectral_efficiency: float


@dataclass
class ScalingStudy:
    rows: list[ScalingRow]
    iteration_fit: dict | None   # {"slope", "intercept", "r_squared"}
    runtime_fit: dict | None     # {"a", "b", "c", "d", "r_squared"}: a K^2 logK + b K^2 + c K + d
    fit_skipped: bool


def _r_squared(y: np.ndarray, predicted: np.ndarray) -> float:
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - ss_res / ss_tot


def fit_linear(x, y) -> dict:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return {"slope": float(coef[0]), "intercept": float(coef[1]),
            "r_squared": _r_squared(y, design @ coef)}


def fit_runtime_model(x, y) -> dict:
    """Least squares for a*K^2*log(K) + b*K^2 + c*K + d."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    design = np.column_stack([x * x * np.log(x), x * x, x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return {"a": float(coef[0]), "b": float(coef[1]), "c": float(coef[2]),
            "d": float(coef[3]), "r_squared": _r_squared(y, design @ coef)}


def scaling_study(base_scenario: Scenario, ue_counts: list[int], repetitions: int,
                  seed: int = 0, scheme: Scheme = Scheme.WCS,
                  utility: UtilityKind = UtilityKind.SUM_RATE,
                  csi_mode: CsiMode | None = None,
                  interference_mode: InterferenceMode | None = None) -> ScalingStudy:
    """Repeated single-slot solves per network size, with model fits.

    Each repetition reseeds placement and channels; iteration and wall-time
    means per size are fit to a line and to the quadratic-log runtime
    model.  Fits are skipped (flagged) when fewer than two sizes are given.
    """
    if scheme not in SOLVER_SCHEMES:
        raise ValueError(f"scaling study requires a solver scheme, got {scheme}")
    root = np.random.SeedSequence(seed)
    rows: list[ScalingRow] = []
    for size_ss, count in zip(root.spawn(len(ue_counts)), ue_counts):
        scenario = topo.resize_ue_list(base_scenario, count)
        iterations, walls, ses = [], [], []
        for rep_ss in size_ss.spawn(repetitions):
            spec = ExperimentSpec(scenario=scenario, scheme=scheme, utility=utility,
                                  csi_mode=csi_mode,
                                  interference_mode=interference_mode,
                                  slots=1, seed=_seed_int(rep_ss))
            result = run_experiment(spec)
            iterations.append(result.solver_iterations[0])
            walls.append(result.solver_wall_time_s)
            ses.append(result.mean_spectral_efficiency)
        rows.append(ScalingRow(
            num_ue=count,
            runs=repetitions,
            mean_iterations=float(np.mean(iterations)),
            std_iterations=float(np.std(iterations)),
            min_iterations=int(np.min(iterations)),
            max_iterations=int(np.max(iterations)),
            mean_wall_time_s=float(np.mean(walls)),
            mean_spectral_efficiency=float(np.mean(ses)),
        ))
    if len(rows) < 2:
        return ScalingStudy(rows=rows, iteration_fit=None, runtime_fit=None,
                            fit_skipped=True)
    sizes = [row.num_ue for row in rows]
    return ScalingStudy(
        rows=rows,
        iteration_fit=fit_linear(sizes, [row.mean_iterations for row in rows]),
        runtime_fit=fit_runtime_model(sizes, [row.mean_wall_time_s for row in rows]),
        fit_skipped=False,
    )


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def export_results(result: ExperimentResult, directory: str | Path) -> list[Path]:
    """Write summary.json, rates.csv, association.csv and trace.csv.

    Outputs are deterministic functions of the result (timing excluded),
    so identical results export byte-identical files.  Node and slot
    indices in the files are 1-based; a bs value of 0 marks a dropped UE.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    solver = result.solver_iterations is not None
    summary = {
        "spec": result.spec_echo,
        "aggregates": {
            "mean_spectral_efficiency": result.mean_spectral_efficiency,
            "per_user_rate": result.per_user_rate.tolist(),
            "mean_iterations": (float(np.mean(result.solver_iterations))
                                if solver and result.solver_iterations else None),
            "total_evaluations": (int(np.sum(result.solver_evaluations))
                                  if solver else None),
            "total_switches": (int(np.sum(result.solver_switches))
                               if solver else None),
        },
        "num_ue": result.num_ue,
        "num_slots": result.num_slots,
    }
    summary_path = directory / "summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(summary_path)

    rates_path = directory / "rates.csv"
    with open(rates_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "ue", "bs", "rate_bps_hz"])
        for t in range(result.num_slots):
            for k in range(result.num_ue):
                bs = int(result.activation[t, k])
                writer.writerow([t + 1, k + 1, bs + 1 if bs >= 0 else 0,
                                 repr(float(result.rates[t, k]))])
    written.append(rates_path)

    association_path = directory / "association.csv"
    num_bs = result.association.shape[1]
    with open(association_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ue"] + [f"bs_{j + 1}" for j in range(num_bs)])
        for k in range(result.num_ue):
            writer.writerow([k + 1] + [repr(float(v)) for v in result.association[k]])
    written.append(association_path)

    trace_path = directory / "trace.csv"
    with open(trace_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "iteration", "utility"])
        if result.utility_traces is not None:
            for t, trace in enumerate(result.utility_traces):
                for i, value in enumerate(trace):
                    writer.writerow([t + 1, i, repr(float(value))])
    written.append(trace_path)
    return written


def export_scaling(study: ScalingStudy, directory: str | Path) -> list[Path]:
    """Write scaling.csv plus a summary.json with the fit coefficients."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    csv_path = directory / "scaling.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["num_ue", "runs", "mean_iterations", "std_iterations",
                         "min_iterations", "max_iterations",
                         "mean_wall_time_s", "mean_spectral_efficiency"])
        for row in study.rows:
            writer.writerow([row.num_ue, row.runs, repr(row.mean_iterations),
                             repr(row.std_iterations), row.min_iterations,
                             row.max_iterations, repr(row.mean_wall_time_s),
                             repr(row.mean_spectral_efficiency)])
    written.append(csv_path)

    summary_path = directory / "summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump({
            "rows": [row.__dict__ for row in study.rows],
            "iteration_fit": study.iteration_fit,
            "runtime_fit": study.runtime_fit,
            "fit_skipped": study.fit_skipped,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(summary_path)
    return written
