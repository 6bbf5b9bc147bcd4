"""Command-line client for the experiment service.

The CLI only builds request models, invokes the service (in-process by
default, over HTTP when --server is given) and writes the standard output
files; all simulation logic lives behind the service layer.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

from . import service
from .harness import ScalingRow, ScalingStudy, Scheme, export_results, export_scaling
from .mimo import UtilityKind
from .service import result_from_response
from .topology import CsiMode, InterferenceMode


class CliError(RuntimeError):
    pass


class ServiceClient:
    """Dispatches requests to the in-process service or a remote server."""

    def __init__(self, server: str | None = None):
        self.server = server.rstrip("/") if server else None

    def _post(self, path: str, request, response_model):
        response = httpx.post(self.server + path,
                              json=request.model_dump(mode="json"), timeout=None)
        if response.status_code != 200:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise CliError(f"server returned {response.status_code}: {detail}")
        return response_model.model_validate(response.json())

    def run(self, request: service.RunRequest) -> service.RunResponse:
        if self.server is None:
            return service.run(request)
        return self._post("/run", request, service.RunResponse)

    def compare(self, request: service.CompareRequest) -> service.CompareResponse:
        if self.server is None:
            return service.compare(request)
        return self._post("/compare", request, service.CompareResponse)

    def scale(self, request: service.ScaleRequest) -> service.ScaleResponse:
        if self.server is None:
            return service.scale(request)
        return self._post("/scale", request, service.ScaleResponse)

    def validate(self, request: service.ValidateRequest) -> service.ValidateResponse:
        if self.server is None:
            return service.validate(request)
        return self._post("/validate", request, service.ValidateResponse)


def _load_scenario_doc(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"scenario file {path} is not valid JSON: {exc}") from exc


def _add_common(parser: argparse.ArgumentParser, with_scheme: bool = True) -> None:
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    if with_scheme:
        parser.add_argument("--scheme", choices=[s.value for s in Scheme],
                            default=Scheme.WCS.value)
    parser.add_argument("--utility", choices=[u.value for u in UtilityKind],
                        default=UtilityKind.SUM_RATE.value)
    parser.add_argument("--csi", choices=[c.value for c in CsiMode], default=None,
                        help="override the scenario CSI mode")
    parser.add_argument("--interference",
                        choices=[i.value for i in InterferenceMode], default=None,
                        help="force one interference mode for every scheme")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--server", default=None,
                        help="base URL of a running service (default: in-process)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmwave-assoc",
        description="mmWave MIMO user-association experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment and export results")
    _add_common(p_run)
    p_run.add_argument("--slots", type=int, default=None)
    p_run.add_argument("--out", required=True, help="output directory")

    p_cmp = sub.add_parser("compare",
                           help="run several schemes on shared channel draws")
    _add_common(p_cmp, with_scheme=False)
    p_cmp.add_argument("--schemes",
                       default="wcs,max_sinr_drop,max_sinr_share_drop",
                       help="comma-separated scheme list")
    p_cmp.add_argument("--slots", type=int, default=None)
    p_cmp.add_argument("--out", required=True)

    p_scale = sub.add_parser("scale", help="iteration/runtime scaling study")
    _add_common(p_scale)
    p_scale.add_argument("--ue-counts", default="6,12,18,24",
                         help="comma-separated UE counts")
    p_scale.add_argument("--repetitions", type=int, default=10)
    p_scale.add_argument("--out", required=True)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("--scenario", required=True)
    p_val.add_argument("--server", default=None)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    return parser


def _cmd_run(args, client: ServiceClient) -> int:
    request = service.RunRequest(
        scenario=_load_scenario_doc(args.scenario), scheme=Scheme(args.scheme),
        utility=UtilityKind(args.utility),
        csi_mode=None if args.csi is None else CsiMode(args.csi),
        interference_mode=(None if args.interference is None
                           else InterferenceMode(args.interference)),
        slots=args.slots, seed=args.seed)
    response = client.run(request)
    export_results(result_from_response(response), args.out)
    print(f"{args.scheme}: mean spectral efficiency "
          f"{response.mean_spectral_efficiency:.4f} bits/s/Hz "
          f"over {len(response.utility_sum_per_slot)} slot(s) -> {args.out}")
    return 0


def _cmd_compare(args, client: ServiceClient) -> int:
    schemes = [Scheme(s.strip()) for s in args.schemes.split(",") if s.strip()]
    request = service.CompareRequest(
        scenario=_load_scenario_doc(args.scenario), schemes=schemes,
        utility=UtilityKind(args.utility),
        csi_mode=None if args.csi is None else CsiMode(args.csi),
        interference_mode=(None if args.interference is None
                           else InterferenceMode(args.interference)),
        slots=args.slots, seed=args.seed)
    response = client.compare(request)
    out = Path(args.out)
    comparison = {}
    for name, run_response in response.results.items():
        export_results(result_from_response(run_response), out / name)
        comparison[name] = run_response.mean_spectral_efficiency
        print(f"{name}: mean spectral efficiency "
              f"{run_response.mean_spectral_efficiency:.4f} bits/s/Hz")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.json", "w", encoding="utf-8") as fh:
        json.dump({"mean_spectral_efficiency": comparison}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _cmd_scale(args, client: ServiceClient) -> int:
    counts = [int(c) for c in args.ue_counts.split(",") if c.strip()]
    request = service.ScaleRequest(
        scenario=_load_scenario_doc(args.scenario), ue_counts=counts,
        repetitions=args.repetitions, scheme=Scheme(args.scheme),
        utility=UtilityKind(args.utility),
        csi_mode=None if args.csi is None else CsiMode(args.csi),
        interference_mode=(None if args.interference is None
                           else InterferenceMode(args.interference)),
        seed=args.seed)
    response = client.scale(request)
    study = ScalingStudy(
        rows=[ScalingRow(**row.model_dump()) for row in response.rows],
        iteration_fit=response.iteration_fit,
        runtime_fit=response.runtime_fit,
        fit_skipped=response.fit_skipped)
    export_scaling(study, args.out)
    for row in study.rows:
        print(f"K={row.num_ue}: {row.mean_iterations:.1f} iterations, "
              f"{row.mean_wall_time_s * 1e3:.1f} ms/solve")
    if study.fit_skipped:
        print("fit skipped: need at least two network sizes")
    else:
        print(f"iteration fit R^2 = {study.iteration_fit['r_squared']:.4f}, "
              f"runtime fit R^2 = {study.runtime_fit['r_squared']:.4f}")
    return 0


def _cmd_validate(args, client: ServiceClient) -> int:
    request = service.ValidateRequest(scenario=_load_scenario_doc(args.scenario))
    response = client.validate(request)
    if response.ok:
        print("scenario ok")
        return 0
    for diag in response.diagnostics:
        print(f"invalid: {diag}", file=sys.stderr)
    return 2


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("mmwave_assoc.api:app", host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return _cmd_serve(args)
        client = ServiceClient(getattr(args, "server", None))
        if args.command == "run":
            return _cmd_run(args, client)
        if args.command == "compare":
            return _cmd_compare(args, client)
        if args.command == "scale":
            return _cmd_scale(args, client)
        if args.command == "validate":
            return _cmd_validate(args, client)
        raise CliError(f"unknown command {args.command}")
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # domain errors from the in-process service
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
