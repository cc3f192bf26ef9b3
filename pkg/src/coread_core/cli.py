import argparse
import sys
from typing import List, Optional

from coread_core.api import replay, run_analyze, run_probe, run_sweep, run_synth
from coread_core.config.load import load_journal_tags, load_synth_config
from coread_core.config.run_spec import MatrixKind, RateBasis, RunConfig, SynthConfig
from coread_core.domain.errors import ConfigError, CoreadError
from coread_core.domain.models import DEFAULT_JOURNAL_TAGS, DedupPeriod
from coread_core.utils.report import configure


def _int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {value!r}")


def _float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {value!r}")


def _bins(value: str):
    if value == 'auto':
        return value
    try:
        bins = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bins must be a positive integer or 'auto': {value!r}")
    if bins < 1:
        raise argparse.ArgumentTypeError(f"bins must be a positive integer or 'auto': {value!r}")
    return bins


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('-o', '--out', required=True, help='Output directory')
    parser.add_argument('--seed', type=int, default=None, help='Random seed (recorded in manifest.json)')
    parser.add_argument('--manifest', help='Re-run from a prior manifest.json (other flags are ignored)')
    parser.add_argument('--verbose', action='store_true', help='Print per-stage timings')
    parser.add_argument('--quiet', action='store_true', help='Suppress JSON step lines')


def _add_ingest(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--log', dest='logs', action='append', default=[],
                        help='Event log file; repeat for sharded logs')
    parser.add_argument('--journals', default=','.join(DEFAULT_JOURNAL_TAGS),
                        help='Comma-separated bibcode journal tags')
    parser.add_argument('--period', choices=[p.value for p in DedupPeriod], default=DedupPeriod.MONTH.value,
                        help='Dedup period for reads')
    parser.add_argument('--max-malformed', type=float, default=0.1,
                        help='Maximum fraction of malformed log lines')
    parser.add_argument('--min-rate', type=float, default=10.0, help='Minimum reads per month')
    parser.add_argument('--max-rate', type=float, default=100.0, help='Maximum reads per month')
    parser.add_argument('--rate-basis', choices=[b.value for b in RateBasis],
                        default=RateBasis.MEAN_OVER_ACTIVE_MONTHS.value, help='Monthly rate averaging')
    parser.add_argument('--interval-months', type=int, default=None,
                        help='Interval length for MEAN_OVER_FULL_INTERVAL (default: span of the data)')
    parser.add_argument('--matrix', choices=[m.value for m in MatrixKind], default=MatrixKind.NORMALIZED.value,
                        help='Matrix to diagonalise')
    parser.add_argument('--dense-threshold', type=int, default=5000,
                        help='Largest Ns for the full dense eigensolve')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='coread', description='Co-readership spectral analysis toolkit')
    subparsers = parser.add_subparsers(dest='command', required=True)

    # synth 命令
    synth_parser = subparsers.add_parser('synth', help='Generate a synthetic usage log')
    _add_common(synth_parser)
    synth_parser.add_argument('--config', help='SynthConfig JSON file')
    synth_parser.add_argument('--users', type=int, help='Number of regular users')
    synth_parser.add_argument('--papers', type=int, default=5000, help='Number of papers')
    synth_parser.add_argument('--reads-mean', type=float, default=40.0, help='Mean reads per user')
    synth_parser.add_argument('--reads-dispersion', type=float, default=0.1, help='Read-count dispersion')
    synth_parser.add_argument('--reads-max', type=int, default=200, help='Maximum reads per user')
    synth_parser.add_argument('--bias', type=float, default=1.0, help='Preferential attachment exponent')
    synth_parser.add_argument('--noise-users', type=int, default=200, help='One-shot users (1-3 reads)')
    synth_parser.add_argument('--months', type=int, default=1, help='Simulated months')
    synth_parser.add_argument('--start-year', type=int, default=2005, help='First simulated year')
    synth_parser.add_argument('--repeat-prob', type=float, default=0.2,
                              help='Probability of a second access to the same paper')
    synth_parser.add_argument('--no-growth', action='store_true',
                              help='Make every paper available from the start')

    # analyze 命令
    analyze_parser = subparsers.add_parser('analyze', help='Spectrum of the co-read network for one Ns')
    _add_common(analyze_parser)
    _add_ingest(analyze_parser)
    analyze_parser.add_argument('--ns', type=int, default=4000, help='Sample size Ns')
    analyze_parser.add_argument('--bins', type=_bins, default='auto', help="Density bins or 'auto'")
    analyze_parser.add_argument('--top', type=int, default=12, help='Eigenvalues listed in summary.json')
    analyze_parser.add_argument('--export-coread', action='store_true', help='Write coread.txt')

    # sweep 命令
    sweep_parser = subparsers.add_parser('sweep', help='Largest eigenvalue and R over nested sample sizes')
    _add_common(sweep_parser)
    _add_ingest(sweep_parser)
    sweep_parser.add_argument('--sizes', type=_int_list, default=None, help='Comma-separated sample sizes')
    sweep_parser.add_argument('--top', type=int, default=12, help='Eigenvalues per size in top_eigenvalues.csv')
    sweep_parser.add_argument('--from-scaling', help='Refit an existing scaling.csv instead of sweeping')

    # probe 命令
    probe_parser = subparsers.add_parser('probe', help='Sphere probe in eigenvector space')
    _add_common(probe_parser)
    probe_parser.add_argument('--run', dest='run_dir', help='Output directory of a prior analyze run')
    probe_parser.add_argument('--center', type=_float_list, default=None, help='Comma-separated coordinates')
    probe_parser.add_argument('--radius', type=float, default=None, help='Sphere radius')
    probe_parser.add_argument('-k', '--components', dest='k', type=int, default=3, help='Projection dimension')
    probe_parser.add_argument('--citations', help="Citation table, 'bibcode<TAB>count' per line")
    probe_parser.add_argument('--min-citations', type=int, default=0, help='Minimum citation count')

    return parser


def _synth_config(parser: argparse.ArgumentParser, args) -> SynthConfig:
    if args.config:
        config = load_synth_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        return config.validate()

    if args.users is None:
        parser.error('the following arguments are required: --users')
    return SynthConfig(
        n_users=args.users,
        n_papers=args.papers,
        reads_mean=args.reads_mean,
        reads_dispersion=args.reads_dispersion,
        reads_max=args.reads_max,
        attachment_bias=args.bias,
        noise_users=args.noise_users,
        months=args.months,
        start_year=args.start_year,
        repeat_prob=args.repeat_prob,
        paper_growth=not args.no_growth,
        seed=7 if args.seed is None else args.seed,
    ).validate()


def _run_config(parser: argparse.ArgumentParser, args) -> RunConfig:
    run = RunConfig(seed=0 if args.seed is None else args.seed)
    if args.command in ('analyze', 'sweep'):
        if not args.logs and not (args.command == 'sweep' and args.from_scaling):
            parser.error('the following arguments are required: --log')
        run.logs = list(args.logs)
        run.journal_tags = load_journal_tags(args.journals)
        run.period = DedupPeriod(args.period)
        run.max_malformed = args.max_malformed
        run.min_rate = args.min_rate
        run.max_rate = args.max_rate
        run.rate_basis = RateBasis(args.rate_basis)
        run.interval_months = args.interval_months
        run.matrix = MatrixKind(args.matrix)
        run.dense_threshold = args.dense_threshold
        run.top = args.top
        run.population_rule()

    if args.command == 'analyze':
        run.n_s = args.ns
        run.bins = args.bins
        run.export_coread = args.export_coread
    elif args.command == 'sweep':
        if args.sizes is None and not args.from_scaling:
            parser.error('the following arguments are required: --sizes')
        run.sizes = args.sizes or []
        run.from_scaling = args.from_scaling
    elif args.command == 'probe':
        for flag, value in (('--run', args.run_dir), ('--center', args.center), ('--radius', args.radius)):
            if value is None:
                parser.error(f'the following arguments are required: {flag}')
        run.run_dir = args.run_dir
        run.center = list(args.center)
        run.radius = args.radius
        run.k = args.k
        run.citations = args.citations
        run.min_citations = args.min_citations
    return run


def main(argv: Optional[List[str]] = None) -> int:
    """
    命令行入口，返回退出码（0成功，1阶段错误，2用法错误）
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure(quiet=args.quiet, verbose=args.verbose)

    try:
        if args.manifest:
            command, _ = replay(args.manifest, args.out)
            if command != args.command:
                print(f"warning: manifest records a '{command}' run", file=sys.stderr)
        elif args.command == 'synth':
            run_synth(_synth_config(parser, args), args.out)
        else:
            run = _run_config(parser, args)
            runner = {'analyze': run_analyze, 'sweep': run_sweep, 'probe': run_probe}[args.command]
            runner(run, args.out)
    except ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return 1
    except CoreadError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
