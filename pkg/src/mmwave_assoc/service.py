"""Service layer: pydantic request/response models and the operations
behind both the HTTP API and the CLI.

Scenario documents travel inline as the same JSON object the scenario
file holds; the service validates them with the domain loader.  Response
payloads mirror ExperimentResult.to_payload(), so clients can reconstruct
results and write the standard output files locally.
"""

from __future__ import annotations

from pydantic import BaseModel, Field

from . import harness
from .harness import ExperimentSpec, Scheme
from .mimo import UtilityKind
from .topology import CsiMode, InterferenceMode, scenario_from_dict, validate_scenario


class RunRequest(BaseModel):
    scenario: dict
    scheme: Scheme = Scheme.WCS
    utility: UtilityKind = UtilityKind.SUM_RATE
    csi_mode: CsiMode | None = None
    interference_mode: InterferenceMode | None = None
    slots: int | None = Field(default=None, ge=1)
    seed: int = 0


class SolverSummary(BaseModel):
    iterations: list[int]
    evaluations: list[int]
    switches: list[int]
    traces: list[list[float]]


class RunResponse(BaseModel):
    spec: dict
    scheme: Scheme
    mean_spectral_efficiency: float
    per_user_rate: list[float]
    association: list[list[float]]
    activation: list[list[int]]
    stream_counts: list[list[int]]
    rates: list[list[float]]
    utility_sum_per_slot: list[float]
    utility_min_per_slot: list[float]
    solver: SolverSummary | None = None


class CompareRequest(BaseModel):
    scenario: dict
    schemes: list[Scheme] = Field(min_length=1)
    utility: UtilityKind = UtilityKind.SUM_RATE
    csi_mode: CsiMode | None = None
    interference_mode: InterferenceMode | None = None
    slots: int | None = Field(default=None, ge=1)
    seed: int = 0


class CompareResponse(BaseModel):
    results: dict[str, RunResponse]


class ScaleRequest(BaseModel):
    scenario: dict
    ue_counts: list[int] = Field(min_length=1)
    repetitions: int = Field(default=10, ge=1)
    scheme: Scheme = Scheme.WCS
    utility: UtilityKind = UtilityKind.SUM_RATE
    csi_mode: CsiMode | None = None
    interference_mode: InterferenceMode | None = None
    seed: int = 0


class ScaleRow(BaseModel):
    num_ue: int
    runs: int
    mean_iterations: float
    std_iterations: float
    min_iterations: int
    max_iterations: int
    mean_wall_time_s: float
    mean_spectral_efficiency: float


class ScaleResponse(BaseModel):
    rows: list[ScaleRow]
    iteration_fit: dict | None
    runtime_fit: dict | None
    fit_skipped: bool


class ValidateRequest(BaseModel):
    scenario: dict


class ValidateResponse(BaseModel):
    ok: bool
    diagnostics: list[str]


def _response_from_result(result: harness.ExperimentResult) -> RunResponse:
    payload = result.to_payload()
    solver = None
    if payload["solver_iterations"] is not None:
        solver = SolverSummary(
            iterations=payload["solver_iterations"],
            evaluations=payload["solver_evaluations"],
            switches=payload["solver_switches"],
            traces=payload["utility_traces"],
        )
    return RunResponse(
        spec=payload["spec"],
        scheme=result.scheme,
        mean_spectral_efficiency=payload["mean_spectral_efficiency"],
        per_user_rate=payload["per_user_rate"],
        association=payload["association"],
        activation=payload["activation"],
        stream_counts=payload["stream_counts"],
        rates=payload["rates"],
        utility_sum_per_slot=payload["utility_sum_per_slot"],
        utility_min_per_slot=payload["utility_min_per_slot"],
        solver=solver,
    )


def result_from_response(response: RunResponse) -> harness.ExperimentResult:
    """Rebuild an ExperimentResult from a RunResponse payload (client side)."""
    payload = {
        "spec": response.spec,
        "scheme": response.scheme.value,
        "mean_spectral_efficiency": response.mean_spectral_efficiency,
        "per_user_rate": response.per_user_rate,
        "association": response.association,
        "activation": response.activation,
        "stream_counts": response.stream_counts,
        "rates": response.rates,
        "utility_sum_per_slot": response.utility_sum_per_slot,
        "utility_min_per_slot": response.utility_min_per_slot,
        "solver_iterations": response.solver.iterations if response.solver else None,
        "solver_evaluations": response.solver.evaluations if response.solver else None,
        "solver_switches": response.solver.switches if response.solver else None,
        "utility_traces": response.solver.traces if response.solver else None,
    }
    return harness.ExperimentResult.from_payload(payload)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def run(request: RunRequest) -> RunResponse:
    scenario = scenario_from_dict(request.scenario)
    spec = ExperimentSpec(
        scenario=scenario, scheme=request.scheme, utility=request.utility,
        csi_mode=request.csi_mode, interference_mode=request.interference_mode,
        slots=request.slots, seed=request.seed)
    return _response_from_result(harness.run_experiment(spec))


def compare(request: CompareRequest) -> CompareResponse:
    scenario = scenario_from_dict(request.scenario)
    results = harness.run_schemes(
        scenario, list(request.schemes), request.utility,
        csi_mode=request.csi_mode, interference_mode=request.interference_mode,
        slots=request.slots, seed=request.seed)
    return CompareResponse(results={
        scheme.value: _response_from_result(result)
        for scheme, result in results.items()
    })


def scale(request: ScaleRequest) -> ScaleResponse:
    scenario = scenario_from_dict(request.scenario)
    study = harness.scaling_study(
        scenario, list(request.ue_counts), request.repetitions,
        seed=request.seed, scheme=request.scheme, utility=request.utility,
        csi_mode=request.csi_mode, interference_mode=request.interference_mode)
    return ScaleResponse(
        rows=[ScaleRow(**row.__dict__) for row in study.rows],
        iteration_fit=study.iteration_fit,
        runtime_fit=study.runtime_fit,
        fit_skipped=study.fit_skipped,
    )


def validate(request: ValidateRequest) -> ValidateResponse:
    try:
        scenario = scenario_from_dict(request.scenario)
    except Exception as exc:  # malformed document
        return ValidateResponse(ok=False, diagnostics=[str(exc)])
    diagnostics = validate_scenario(scenario)
    return ValidateResponse(ok=not diagnostics, diagnostics=diagnostics)
