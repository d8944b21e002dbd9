"""Command-line entry point: ``simulate`` runs a campaign, ``serve`` starts the API."""

import argparse
import logging
import sys
from typing import List, Optional, Sequence

from app.core.config import settings
from app.core.exceptions import ConfigurationError, OutputError, SimulationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

DEFAULT_SWEEP_VALUES = {
    "power": [20.0, 28.0],
    "lsr": [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
    "none": [],
}


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimo-relay", description=settings.api_description)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Run a Monte Carlo campaign and write CSV results")
    sim.add_argument("--mode", choices=["capacity", "mse"], default="capacity")
    sim.add_argument("--schemes", default=",".join(settings.default_schemes),
                     help="Comma-separated subset of jds,nas,sos,nod")
    sim.add_argument("--sweep", choices=["power", "lsr", "none"], default="power")
    sim.add_argument("--values", type=_float_list, default=None,
                     help="Sweep points: dB for power, distances for lsr")
    sim.add_argument("--trials", type=int, default=settings.default_trials)
    sim.add_argument("--seed", type=int, default=settings.default_seed)
    sim.add_argument("--ns", type=int, default=4)
    sim.add_argument("--nr", type=int, default=4)
    sim.add_argument("--nd", type=int, default=4)
    sim.add_argument("--p-db", type=float, default=20.0, help="P1 = P2 = Pr in dB when not swept")
    sim.add_argument("--lsr", type=float, default=5.0)
    sim.add_argument("--lrd", type=float, default=5.0)
    sim.add_argument("--tau", type=float, default=3.0, help="Path-loss exponent")
    sim.add_argument("--out", default=settings.output_dir)
    sim.add_argument("--workers", type=int, default=settings.workers)
    sim.add_argument("--plot", action="store_true", help="Also render PNG figures next to the CSVs")

    serve = sub.add_parser("serve", help="Start the HTTP API")
    serve.add_argument("--host", default=settings.host)
    serve.add_argument("--port", type=int, default=settings.port)
    serve.add_argument("--reload", action="store_true")
    return parser


def simulate(args: argparse.Namespace) -> int:
    from app.core.harness import make_sweep, run_campaign, write_results
    from app.core.model import NetworkConfig

    values = args.values if args.values is not None else DEFAULT_SWEEP_VALUES[args.sweep]
    try:
        config = NetworkConfig.from_db(
            args.p_db,
            n_s=args.ns, n_r=args.nr, n_d=args.nd,
            l_sr=args.lsr, l_rd=args.lrd, tau=args.tau,
            mode=args.mode, seed=args.seed,
        )
        sweep = make_sweep(args.sweep, values)
        schemes = [name for name in args.schemes.split(",") if name.strip()]
        result = run_campaign(config, schemes, sweep, args.trials, workers=args.workers)
    except ConfigurationError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG

    try:
        written = write_results(result, args.out)
        if args.plot:
            from app.core.plotting import save_figures
            written.extend(save_figures(result, args.out))
    except OutputError as e:
        logger.error("Could not write results: %s", e)
        return EXIT_IO

    for path in written:
        logger.info("Wrote %s", path)
    for s in result.summaries:
        logger.info("%-4s %s=%-6g capacity %.4f +- %.4f  sum-MSE %.4f",
                    s.scheme, result.sweep_variable, s.sweep_value,
                    s.ergodic_capacity, s.capacity_stderr, s.sum_mse)
    return EXIT_OK


def serve(args: argparse.Namespace) -> int:
    import uvicorn

    logger.info("Server will be available at: http://%s:%d", args.host, args.port)
    uvicorn.run("app.main:app", host=args.host, port=args.port, reload=args.reload,
                log_level=settings.log_level.lower())
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return simulate(args)
        return serve(args)
    except SimulationError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
