import argparse
import logging
import os
import sys

from dotenv import load_dotenv

from bench.experiments import (ExperimentSpec, SimSettings, characterize, check_characterization, check_comparison,
                               compare, default_characterize_workload, default_compare_workload, default_strategies,
                               warm_start)
from bench.host import run_host_strategy
from bench.report import write_comparison
from flow.graph import load_flow, serialize_flow
from flow.rewrite import extract_offloadable
from policy.spec import PolicyError, parse_policy
from remote.server import serve
from sim.gateway import GatewayModel
from sim.runner import RemoteModel
from sim.workload import WorkloadSpec
from utils.config import ConfigError, env_setting, load_acceptance, load_config
from utils.constants import (CHARACTERIZE_PARALLELISM, CHARACTERIZE_TOTAL_JOBS, COMPARE_INTER_ARRIVAL_S,
                             COMPARE_TOTAL_JOBS, DEFAULT_CONNECT_TIMEOUT_MS, DEFAULT_REQUEST_TIMEOUT_MS,
                             DEFAULT_SAMPLE_PERIOD_MS, DEFAULT_SEED, DEFAULT_SERVE_HOST, DEFAULT_SERVE_PORT,
                             DEFAULT_SMOOTHING_ALPHA, EXIT_CHECKS_FAILED, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE,
                             SIM_DT_S, SIM_MAX_TIME_S)
from utils.helpers import EdgeflowError, write_atomic

# Load environment variables
load_dotenv()

logger = logging.getLogger("edgeflow")

ACCEPTANCE_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config", "acceptance.json")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--flow", help="flow document")
    common.add_argument("--policy", help="offload policy, e.g. jobs:4 or any-of(cpu:0.75,temp:75)")
    common.add_argument("--mode", choices=["sim", "host"], default="sim")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--remote-url", default=None)
    common.add_argument("--check", action="store_true", help="exit 3 unless the acceptance thresholds hold")
    common.add_argument("--config", default=None, help="JSON config overriding the built-in defaults")
    common.add_argument("--log-level", default=None)

    parser = _Parser(prog="edgeflow", description="Edge-to-cloud offloading runtime and gateway benchmarks")
    commands = parser.add_subparsers(dest="command", required=True)

    char = commands.add_parser("characterize", parents=[common], help="gateway performance without offloading")
    char.add_argument("--parallelism", type=int, default=None)
    char.add_argument("--jobs", type=int, default=None, help="total jobs")

    comp = commands.add_parser("compare", parents=[common], help="compare offloading strategies")
    comp.add_argument("--strategy", action="append", default=None,
                      help="strategy to run (repeatable); defaults to the four threshold strategies")
    comp.add_argument("--jobs", type=int, default=None, help="total jobs per strategy")
    comp.add_argument("--inter-arrival", type=float, default=None, help="seconds between jobs")
    comp.add_argument("--arrival", choices=["fixed", "poisson"], default=None)

    srv = commands.add_parser("serve", parents=[common], help="serve the remote executor over HTTP")
    srv.add_argument("--host", default=DEFAULT_SERVE_HOST)
    srv.add_argument("--port", type=int, default=DEFAULT_SERVE_PORT)

    commands.add_parser("rewrite", parents=[common], help="split a flow into local.json and remote.json")
    return parser


def _pick(*values):
    for value in values:
        if value is not None:
            return value
    return None


def sim_settings(config) -> SimSettings:
    remote = {k: v for k, v in config["remote"].items() if k in ("service_time_s", "rtt_s")}
    try:
        model = GatewayModel(**config["gateway"])
        remote_model = RemoteModel(**remote)
    except TypeError as e:
        raise ConfigError(str(e))
    experiment = config["experiment"]
    return SimSettings(model, remote_model, experiment.get("dt_s", SIM_DT_S),
                       experiment.get("max_time_s", SIM_MAX_TIME_S))


def acceptance(config):
    return load_acceptance(config["experiment"].get("acceptance_path", ACCEPTANCE_PATH))


def cmd_characterize(args, config):
    settings = sim_settings(config)
    workload_cfg = config["workload"]
    workload = default_characterize_workload(
        seed=_pick(args.seed, workload_cfg.get("seed"), DEFAULT_SEED),
        parallelism=_pick(args.parallelism, workload_cfg.get("parallelism"), CHARACTERIZE_PARALLELISM),
        total_jobs=_pick(args.jobs, workload_cfg.get("total_jobs"), CHARACTERIZE_TOTAL_JOBS),
    )
    spec = ExperimentSpec("characterize", args.mode, args.policy or "always-local", workload, args.out, args.flow)
    summary = characterize(spec, settings)
    _echo(os.path.join(args.out, "summary.txt"))
    if args.check:
        failures = check_characterization(summary, acceptance(config)["characterize"])
        return _report_checks(failures)
    return EXIT_OK


def _compare_workload(args, config) -> WorkloadSpec:
    workload_cfg = config["workload"]
    return default_compare_workload(
        seed=_pick(args.seed, workload_cfg.get("seed"), DEFAULT_SEED),
        total_jobs=_pick(args.jobs, workload_cfg.get("total_jobs"), COMPARE_TOTAL_JOBS),
        inter_arrival_s=_pick(args.inter_arrival, workload_cfg.get("inter_arrival_s"), COMPARE_INTER_ARRIVAL_S),
        arrival=_pick(args.arrival, workload_cfg.get("arrival"), "fixed"),
    )


def cmd_compare(args, config):
    strategies = _pick(args.strategy, [args.policy] if args.policy else None,
                       config["experiment"].get("strategies"), default_strategies())
    for strategy in strategies:
        parse_policy(strategy)
    workload = _compare_workload(args, config)

    if args.mode == "host":
        remote = config["remote"]
        runs = [run_host_strategy(args.flow, strategy, workload, args.out,
                                  remote_url=_pick(args.remote_url, remote.get("base_url"), env_setting("REMOTE_URL")),
                                  connect_timeout_ms=remote.get("connect_timeout_ms", DEFAULT_CONNECT_TIMEOUT_MS),
                                  request_timeout_ms=remote.get("request_timeout_ms", DEFAULT_REQUEST_TIMEOUT_MS),
                                  fallback=remote.get("fallback", "local"),
                                  sample_period_ms=config["experiment"].get("sample_period_ms", DEFAULT_SAMPLE_PERIOD_MS),
                                  smoothing_alpha=config["experiment"].get("smoothing_alpha", DEFAULT_SMOOTHING_ALPHA))
                for strategy in strategies]
        table = write_comparison(args.out, [(run.label, run.stats) for run in runs])
        _echo(os.path.join(args.out, "report.txt"))
        if args.check:
            logger.warning("--check applies to simulator runs only; host results are hardware-dependent")
        return EXIT_OK if len(table) else EXIT_RUNTIME

    report = compare(strategies, workload, args.out, warm_start(sim_settings(config)), flow_path=args.flow)
    _echo(os.path.join(args.out, "report.txt"))
    if args.check:
        return _report_checks(check_comparison(report, acceptance(config)["compare"]))
    return EXIT_OK


def cmd_serve(args, config):
    serve(args.host, args.port)
    return EXIT_OK


def cmd_rewrite(args, config):
    if not args.flow:
        raise UsageError("rewrite needs --flow")
    remote_url = _pick(args.remote_url, config["remote"].get("base_url"), env_setting("REMOTE_URL"))
    if not remote_url:
        raise UsageError("rewrite needs --remote-url (or EDGEFLOW_REMOTE_URL)")
    policy = args.policy or "always-local"
    parse_policy(policy)
    result = extract_offloadable(load_flow(args.flow), remote_url, policy)
    write_atomic(os.path.join(args.out, "local.json"), serialize_flow(result.local_flow))
    write_atomic(os.path.join(args.out, "remote.json"), serialize_flow(result.remote_flow))
    print(f"wrote {os.path.join(args.out, 'local.json')} and {os.path.join(args.out, 'remote.json')}")
    return EXIT_OK


def _echo(path):
    with open(path, encoding="utf-8") as handle:
        print(handle.read(), end="")


def _report_checks(failures):
    if failures:
        for failure in failures:
            print(f"CHECK FAILED: {failure}")
        return EXIT_CHECKS_FAILED
    print("all checks passed")
    return EXIT_OK


COMMANDS = {
    "characterize": cmd_characterize,
    "compare": cmd_compare,
    "serve": cmd_serve,
    "rewrite": cmd_rewrite,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE

    level = (args.log_level or env_setting("LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](args, config)
    except (UsageError, PolicyError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except EdgeflowError as e:
        logger.error("%s", e)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
