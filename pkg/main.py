# main.py
"""Point d'entrée en ligne de commande"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add project root to path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from commands import COMMANDS
from config.settings import APP_CONFIG, EXIT_CODES, load_run_config
from data.loader import write_json
from utils.errors import MoserError

logger = logging.getLogger('moser')

COMMON_FLAGS = ('config', 'out', 'threads', 'seed', 'verbose', 'command')


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="JSON run configuration (tolerances, sections, params)")
    common.add_argument('--out', help="output directory")
    common.add_argument('--threads', type=int, help="cap on worker threads")
    common.add_argument('--seed', type=int, help="seed for randomized diagnostics")
    common.add_argument('--verbose', '-v', action='store_true', help="debug logging")
    return common


def _instance_flags(parser: argparse.ArgumentParser, res: int):
    parser.add_argument('--res', type=int, help=f"grid resolution of the built-in instance (default {res})")
    parser.add_argument('--n', type=int, help="dimension of the built-in instance")
    parser.add_argument('--amplitude', type=float, help="perturbation amplitude")
    parser.add_argument('--eta', type=float, help="cutoff collar parameter")
    parser.add_argument('--eps0-target', dest='eps0_target', type=float, help="target for the cutoff ε₀")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog=APP_CONFIG['title'], description=APP_CONFIG['subtitle'])
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('solve-cube', parents=[common], help="DM solution on a cube")
    p.add_argument('--f', help="source density manifest")
    p.add_argument('--g', help="target density manifest")
    _instance_flags(p, 65)

    p = sub.add_parser('solve-torus', parents=[common], help="global correction on the flat torus")
    p.add_argument('--sigma', help="σ density manifest")
    p.add_argument('--tau', help="τ density manifest")
    p.add_argument('--parametric', action='store_true', default=None, help="also run the linear family")
    _instance_flags(p, 64)

    p = sub.add_parser('coercive-sweep', parents=[common], help="C⁰ size against d_M along f_ε")
    p.add_argument('--f', help="source density manifest")
    p.add_argument('--g', help="target density manifest")
    p.add_argument('--eps', type=float, nargs='+', help="blend parameters")
    _instance_flags(p, 65)

    p = sub.add_parser('smooth', parents=[common], help="smooth an area-preserving homeomorphism")
    p.add_argument('--homeo', help="homeomorphism manifest")
    p.add_argument('--no-claim', dest='claimed_area_preserving', action='store_const', const=False,
                   help="do not reject inputs failing the area check")
    p.add_argument('--res', type=int)
    p.add_argument('--amplitude', type=float)
    p.add_argument('--shear', type=float)
    p.add_argument('--scale', type=float, help="mollification scale")
    p.add_argument('--scales', type=float, nargs='+', help="mollification scale sweep")

    p = sub.add_parser('smooth-isotopy', parents=[common], help="smooth an area-preserving isotopy")
    p.add_argument('--homeos', nargs='+', help="member manifests, starting at the identity")
    p.add_argument('--family', choices=['hamiltonian', 'translation'])
    p.add_argument('--members', type=int)
    p.add_argument('--res', type=int)
    p.add_argument('--amplitude', type=float)
    p.add_argument('--shear', type=float)
    p.add_argument('--speed', type=float)
    p.add_argument('--scale', type=float)

    p = sub.add_parser('metric', parents=[common], help="Lid_b between two measures or densities")
    p.add_argument('--mu', help="first measure CSV or density manifest")
    p.add_argument('--nu', help="second measure CSV or density manifest")
    p.add_argument('--b', type=float)
    p.add_argument('--max-atoms', dest='max_atoms', type=int)
    p.add_argument('--topology', choices=['cube', 'torus'])
    p.add_argument('--side', type=float)
    p.add_argument('--box-res', dest='box_res', type=int)

    sub.add_parser('selftest', parents=[common], help="reduced invariant suite")
    return parser


def setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    values = vars(args)
    params = {k: v for k, v in values.items() if k not in COMMON_FLAGS and v is not None}
    out_dir = Path(args.out or 'out')

    try:
        config = load_run_config(args.config, args.command,
                                 {'seed': args.seed, 'threads': args.threads, 'out': args.out})
        config.params.update(params)
        config.overrides['params'] = params
        out_dir = config.out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(config.to_manifest(), out_dir / 'manifest.json')

        summary: Dict[str, Any] = COMMANDS[args.command].run(config) or {}
        code = int(summary.get('exit_code', EXIT_CODES['ok']))
        logger.info(f"{args.command} finished with exit code {code}")
        return code
    except MoserError as e:
        logger.error(f"{args.command} failed [{e.code}]: {e.message}")
        write_json(e.to_dict(), out_dir / 'error.json')
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error in {args.command}")
        write_json({'error': 'unexpected', 'type': type(e).__name__, 'message': str(e),
                    'exit_code': EXIT_CODES['error']}, out_dir / 'error.json')
        return EXIT_CODES['error']


if __name__ == '__main__':
    sys.exit(main())
