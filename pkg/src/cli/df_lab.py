"""
df-lab entry point.

Usage:
    python -m src.cli.df_lab <command> [flags]

Exit codes: 0 success, 2 configuration or input-domain error, 3 numerical failure.
"""

import os
import sys
import time
import logging
import argparse
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv

from src.cli.commands import COMMAND_TABLE
from src.cli.config import COMMANDS, RunConfig
from src.utils.csv_io import write_json
from src.utils.errors import ConfigError, DomainError, NumericalError

logger = logging.getLogger('df_lab')

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def setup_logging(verbose: bool = False):
    """Configure root logging once; DF_LAB_LOG_LEVEL sets the default level."""
    level = logging.DEBUG if verbose else getattr(logging, os.getenv('DF_LAB_LOG_LEVEL', 'INFO').upper(), logging.INFO)
    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        level=level,
        force=True
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON config file')
    common.add_argument('--seed', type=int)
    common.add_argument('--out', help='Main output path')
    common.add_argument('--schedule', dest='schedule_kind', choices=['vp', 'subvp', 've', 'edm'])
    common.add_argument('--steps', type=int, help='Euler steps')
    common.add_argument('--data', help='chessboard, affine3, nonaffine3, gaussian, a CSV or a Gaussian JSON')
    common.add_argument('--n', type=int, help='Sample count for generated data')
    common.add_argument('--trace-method', choices=['exact', 'df_tm', 'df-tm', 'vjp', 'hutchinson'])
    common.add_argument('--op', choices=['exact', 'vjp', 'df_ea', 'df-ea', 'all'])
    common.add_argument('--transpose-variant', action='store_const', const=True, default=None)
    common.add_argument('--m', type=int, help='Euler steps of the OT test')
    common.add_argument('--n-traj', type=int)
    common.add_argument('--s', type=float, help='OT stop time')
    common.add_argument('--terminal', choices=['gaussian', 'exact'])
    common.add_argument('--n-probes', type=int)
    common.add_argument('--x-csv', help='Points for nll')
    common.add_argument('--net', choices=['eps', 'tm'], help='Head to train')
    common.add_argument('--eps-net', help='Epsilon checkpoint')
    common.add_argument('--tm-net', help='Trace-matching checkpoint')
    common.add_argument('--threads', type=int)
    common.add_argument('--verbose', action='store_const', const=True, default=None)

    parser = argparse.ArgumentParser(prog='df-lab', description='Diffusion Fisher experiments')
    sub = parser.add_subparsers(dest='command', required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def run(cfg: RunConfig) -> dict:
    """Run one command and write its JSON sidecar."""
    logger.info(f"🔧 {cfg.command}: {cfg.schedule_obj().describe()}, data={cfg.data}, seed={cfg.seed}")
    start = time.perf_counter()
    summary = COMMAND_TABLE[cfg.command](cfg)
    elapsed = time.perf_counter() - start
    write_json(cfg.sidecar_path(), {'config': cfg.echo(), 'summary': summary, 'elapsed_seconds': elapsed})
    logger.info(f"✅ {cfg.command} done in {elapsed:.1f}s -> {cfg.out}")
    return summary


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ('command', 'config')}
    setup_logging(bool(args.verbose))

    try:
        cfg = RunConfig.resolve(args.command, args.config, overrides)
        if cfg.verbose:
            setup_logging(True)
        run(cfg)
    except (ConfigError, DomainError) as e:
        logger.error(f"❌ {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"❌ {e}")
        return EXIT_NUMERICAL
    except (np.linalg.LinAlgError, FloatingPointError) as e:
        logger.error(f"❌ numerical failure: {type(e).__name__}: {e}")
        return EXIT_NUMERICAL
    except ValueError as e:
        logger.error(f"❌ invalid input: {e}")
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
