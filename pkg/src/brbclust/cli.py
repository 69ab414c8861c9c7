"""
Command-line entry point.

    brbclust run    --config exp.cfg --seed 0 --out runs/
    brbclust suite  --config dec.cfg --config dec_brb.cfg --baseline DEC-off-s2
    brbclust timing runs/DEC-brb-s2-seed0.jsonl
    brbclust export --config exp.cfg --seed 0 --csv runs/embeddings.csv

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .exceptions import BaseExceptionBRB, ConfigurateException
from .harness import (ExperimentRunner, export_embeddings, log_path_for, run_suite, timing_report,
                      write_summary_csv)
from .logger import logger
from .utils import read_log


def _add_experiment_flags(parser: argparse.ArgumentParser, many_configs: bool = False) -> None:
    if many_configs:
        parser.add_argument('--config', action='append', default=[], help='config file (repeatable)')
    else:
        parser.add_argument('--config', help='flat key=value config file')
    parser.add_argument('--seed', type=int, help='run a single seed instead of the configured seeds')
    parser.add_argument('--out', help='output directory for logs and summaries')
    parser.add_argument('--scenario', type=int, choices=(1, 2))
    parser.add_argument('--algorithm', choices=('DEC', 'IDEC', 'DCN'))
    parser.add_argument('--variant', choices=('brb', 'reset_only', 'recluster_only', 'disentangled', 'noise', 'off'))
    parser.add_argument('--alpha', type=float)
    parser.add_argument('--interval', type=int)
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='any other config key, dotted for nested fields')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='brbclust', description='Deep clustering with soft resets and reclustering')
    parser.add_argument('--log-level', default='INFO', choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'))
    commands = parser.add_subparsers(dest='command', required=True)
    _add_experiment_flags(commands.add_parser('run', help='run one config over its seeds'))
    suite = commands.add_parser('suite', help='mean/std table over configs and seeds')
    _add_experiment_flags(suite, many_configs=True)
    suite.add_argument('--baseline', help='label of the baseline config')
    suite.add_argument('--workers', type=int, default=1)
    timing = commands.add_parser('timing', help='BRB timing breakdown of a run log')
    timing.add_argument('log', help='JSONL run log')
    export = commands.add_parser('export', help='run one seed and write its final embeddings as CSV')
    _add_experiment_flags(export)
    export.add_argument('--csv', help='embedding CSV path (default: next to the run log)')
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    values = {
        'scenario': args.scenario,
        'algorithm': args.algorithm,
        'brb.variant': args.variant,
        'brb.alpha': args.alpha,
        'brb.interval': args.interval,
        'output_dir': args.out,
        'seeds': None if args.seed is None else str(args.seed),
    }
    for item in args.set:
        key, sep, value = item.partition('=')
        if not sep:
            raise ConfigurateException("Malformed --set", detail={"value": item})
        values[key.strip()] = value
    return {key: str(value) for key, value in values.items() if value is not None}


def _run(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    for seed in config.seeds:
        runner = ExperimentRunner(config, seed, log_path=log_path_for(config.output_dir, config, seed))
        summary = runner.run().summary
        print(summary.model_dump_json())
    return 0


def _suite(args: argparse.Namespace) -> int:
    overrides = _overrides(args)
    paths = args.config or [None]
    configs: list[ExperimentConfig] = [load_config(path, overrides) for path in paths]
    out = Path(args.out or configs[0].output_dir)
    rows = run_suite(configs, baseline=args.baseline, workers=args.workers, out_dir=out)
    write_summary_csv(rows, out / 'summary.csv')
    for row in rows:
        print(row.model_dump_json())
    return 0


def _export(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    seed = config.seeds[0]
    log_path = log_path_for(config.output_dir, config, seed)
    runner = ExperimentRunner(config, seed, log_path=log_path)
    runner.run()
    csv_path = Path(args.csv) if args.csv else log_path.with_name(f'{log_path.stem}-embeddings.csv')
    print(export_embeddings(runner.params, runner.dataset, runner.state, config.algorithm, csv_path))
    return 0


def _timing(args: argparse.Namespace) -> int:
    print(json.dumps(timing_report(read_log(args.log)).model_dump(), indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format='%(asctime)s %(name)s %(levelname)s %(message)s')
    handlers = {'run': _run, 'suite': _suite, 'timing': _timing, 'export': _export}
    try:
        return handlers[args.command](args)
    except BaseExceptionBRB as e:
        logger.error("%s", e)
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
