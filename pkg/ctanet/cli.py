"""Command-line surface: ``ctanet generate | train | eval | ablate | explain``."""
import argparse
import logging
import sys
from typing import Dict, List, Optional

from ctanet.core.config import RunConfig, load_run_config
from ctanet.core.dataset import read_index
from ctanet.core.errors import ConfigurationError, ContractError, DataFormatError, DimensionError, NumericError
from ctanet.utils import run_job


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_config_flags(parser: argparse.ArgumentParser, flag: str = '--config') -> None:
    parser.add_argument(flag, dest='config', default=None, help="config file of section.key = value lines")
    parser.add_argument('--set',
                        dest='overrides',
                        action='append',
                        default=[],
                        metavar='SECTION.KEY=VALUE',
                        help="override one config value (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ctanet', description="Coarse temporal attention network toolkit")
    parser.add_argument('-v', '--verbose', action='store_true', help="debug logging")
    commands = parser.add_subparsers(dest='command', required=True)

    generate = commands.add_parser('generate', help="render the synthetic video benchmark")
    _add_config_flags(generate, '--spec')
    generate.add_argument('--seed', type=int, default=None, help="overrides synth.seed")
    generate.add_argument('--out', default=None, help="dataset directory (default paths.data_dir)")
    generate.add_argument('--workers', type=int, default=1)
    generate.add_argument('--export-pgm', type=int, default=0, metavar='N', help="also export frames of N videos")

    train = commands.add_parser('train', help="train a model on a dataset directory")
    train.add_argument('--data', default=None, help="dataset directory (default paths.data_dir)")
    train.add_argument('--out', default=None, help="run directory (default paths.out_dir)")
    _add_config_flags(train)

    evaluate = commands.add_parser('eval', help="top-1 accuracy and confusion matrix of a checkpoint")
    evaluate.add_argument('--data', required=True)
    evaluate.add_argument('--checkpoint', required=True)
    evaluate.add_argument('--out', default=None, help="directory for confusion.csv")
    evaluate.add_argument('--split', default='test', choices=['all', 'train', 'valid', 'test'])
    _add_config_flags(evaluate)

    ablate = commands.add_parser('ablate', help="train the branches x temporal-attention grid")
    ablate.add_argument('--data', default=None)
    ablate.add_argument('--out', default=None)
    ablate.add_argument('--seeds', type=int, nargs='+', default=None)
    _add_config_flags(ablate)

    explain = commands.add_parser('explain', help="per-branch saliency maps of one video")
    explain.add_argument('--checkpoint', required=True)
    explain.add_argument('--data', required=True)
    explain.add_argument('--video', type=int, required=True)
    explain.add_argument('--class', dest='class_id', type=int, default=None)
    explain.add_argument('--out', required=True)
    _add_config_flags(explain)
    return parser


def build_program(args: argparse.Namespace, run_config: RunConfig) -> Dict:
    """Translate parsed arguments into a ComputeWorkflow program."""
    paths = run_config.paths
    if args.command == 'generate':
        return {
            'program_name': 'generate',
            'out_dir': args.out or paths.data_dir,
            'spec': run_config.synth,
            'seed': args.seed,
            'workers': args.workers,
            'export_frames': args.export_pgm,
        }
    if args.command == 'train':
        return {
            'program_name': 'train',
            'data_dir': args.data or paths.data_dir,
            'out_dir': args.out or paths.out_dir,
            'run_config': run_config,
        }
    if args.command == 'eval':
        return {
            'program_name': 'evaluate',
            'data_dir': args.data,
            'checkpoint': args.checkpoint,
            'out_dir': args.out,
            'config_path': args.config,
            'overrides': args.overrides,
            'split': args.split,
        }
    if args.command == 'ablate':
        return {
            'program_name': 'ablate',
            'data_dir': args.data or paths.data_dir,
            'out_dir': args.out or paths.out_dir,
            'run_config': run_config,
            'seeds': args.seeds,
        }
    return {
        'program_name': 'explain',
        'checkpoint': args.checkpoint,
        'data_dir': args.data,
        'video_id': args.video,
        'out_dir': args.out,
        'class_id': args.class_id,
        'config_path': args.config,
        'overrides': args.overrides,
    }


def report(command: str, output) -> None:
    if command == 'generate':
        index = read_index(output)
        counts = index['label'].value_counts().sort_index()
        print(f"wrote {len(index)} videos to {output}")
        for label, count in counts.items():
            print(f"  class {label}: {count} videos")
    elif command == 'train':
        print(f"best checkpoint: {output}")
    elif command == 'eval':
        print(f"top-1 accuracy: {output['accuracy']:.6f} ({output['videos']} videos)")
        print(f"confusion matrix: {output['confusion']}")
    elif command == 'ablate':
        print(f"ablation table: {output['ablation']}")
        print(f"order sensitivity: {output['order_sensitivity']}")
    else:
        for path in output:
            print(path)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code.

    Exit codes: 0 success, 2 configuration, contract or other invalid input
    (a missing config file included), 3 data format or I/O error, 4 numeric
    abort.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')
    try:
        run_config = load_run_config(args.config, args.overrides)
        output = run_job(build_program(args, run_config))
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataFormatError as e:
        print(f"data format error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigurationError, ContractError, DimensionError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_DATA
    report(args.command, output)
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
