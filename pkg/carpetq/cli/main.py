import argparse
import asyncio
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Sequence

from dotenv import load_dotenv

# Load .env from project root (parent of carpetq/)
_PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent
load_dotenv(_PROJECT_ROOT / ".env")

from .. import __version__
from ..agents.verify_agent import VerifyAgent
from ..config import get_settings
from ..errors import CarpetError
from ..models.reports import RunManifest
from ..models.symbolic import AntichainKind
from ..services import antichain_service, dims_service, quantizer_service
from ..utils.config_loader import load_config
from ..utils.report_writer import write_csv, write_manifest

logger = logging.getLogger("carpetq")

LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="carpet config (JSON)")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--seed", type=int, default=settings.seed)
    common.add_argument("--budget", type=int, default=settings.budget, help="node cap for enumeration")
    common.add_argument("--tol", type=float, default=settings.tol, help="condition flag tolerance")
    common.add_argument("--workers", type=int, default=settings.workers)
    common.add_argument("--separation-gap", type=int, default=settings.separation_gap)

    parser = argparse.ArgumentParser(
        prog="carpetq",
        description="Quantization dimensions and antichains of self-affine measures on carpets.",
    )
    parser.add_argument("--version", action="version", version=f"carpetq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dims", parents=[common], help="s0, s_r, t_r and condition flags")
    p.add_argument("--r", dest="r_list", type=_float_list, default=[0.0, 1.0, 2.0])

    p = sub.add_parser("spectrum", parents=[common], help="temperature function and f(alpha)")
    p.add_argument("--t-lo", type=float, default=-2.0)
    p.add_argument("--t-hi", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=101)
    p.add_argument("--r", dest="r_list", type=_float_list, default=[])

    p = sub.add_parser("antichain", parents=[common], help="enumerate one finite maximal antichain")
    p.add_argument("--kind", choices=[k.value for k in AntichainKind], required=True)
    p.add_argument("--param", type=float, required=True, help="j (GammaJR, Lambda0J) or k (LambdaTildeKR)")
    p.add_argument("--r", type=float, default=0.0)

    p = sub.add_parser("converge", parents=[common], help="antichain exponents against s_r or s0")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--j", dest="j_list", type=_float_list, default=[100.0, 1000.0, 10000.0])

    p = sub.add_parser("shells", parents=[common], help="shell counts and delta_{k,r}")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--k-max", type=int, default=4)

    p = sub.add_parser("quantize", parents=[common], help="empirical error curve")
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--k", dest="k_list", type=_int_list, default=[2, 4, 8, 16, 32])
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--restarts", type=int, default=settings.restarts)

    p = sub.add_parser("bounds", parents=[common], help="antichain and geometric upper bounds")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--j", dest="j_list", type=_float_list, default=[100.0, 1000.0])

    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    return parser


def _manifest(args: argparse.Namespace, config_hash: str) -> RunManifest:
    flags = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in ("config", "out", "command", "seed")
    }
    return RunManifest(
        config_path=str(args.config),
        config_hash=config_hash,
        command=args.command,
        flags=flags,
        seed=args.seed,
        version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


def cmd_dims(args, carpet, manifest) -> int:
    rows = []
    for report in dims_service.dims_rows(carpet, args.r_list, args.tol):
        rows.append(
            {
                "r": report.r,
                "s0": report.s0,
                "sr": report.sr,
                "tr": report.tr,
                "kappa": report.kappa,
                "condA": report.condition_a,
                "condB": report.condition_b,
                "condC": report.condition_c,
                "pi_r": report.pi_r,
                "C_jr": ";".join("%.17g" % c for c in report.c_values),
                "C_j": ";".join("%.17g" % row.c_j for row in report.rows),
            }
        )
    write_csv(args.out / "dims.csv", rows, manifest)
    return 0


def cmd_spectrum(args, carpet, manifest) -> int:
    if not args.t_lo < args.t_hi:
        return _usage("--t-lo must be below --t-hi")
    if args.steps < 2:
        return _usage("--steps must be at least 2")
    step = (args.t_hi - args.t_lo) / (args.steps - 1)
    grid = [args.t_lo + idx * step for idx in range(args.steps)]
    table = dims_service.spectrum(carpet, grid, args.r_list)
    write_csv(
        args.out / "spectrum.csv",
        [{"t": row.t, "T": row.T, "alpha": row.alpha, "f": row.f} for row in table.rows],
        manifest,
    )
    theta_rows = []
    for row in table.theta_rows:
        tr = dims_service.solve_tr(carpet, row.r) if row.r > 0 and row.theta_r is not None else None
        theta_rows.append(
            {
                "r": row.r,
                "theta_r": row.theta_r,
                "identity": row.identity,
                "tr": tr,
                "gap": None if tr is None else abs(row.identity - tr),
                "error": row.error or "",
            }
        )
    if theta_rows:
        write_csv(args.out / "theta.csv", theta_rows, manifest)
    return 0


def cmd_antichain(args, carpet, manifest) -> int:
    kind = AntichainKind(args.kind)
    antichain = antichain_service.build_antichain(carpet, kind, args.param, args.r, args.budget)
    stats = antichain.stats
    label = "psi" if kind is AntichainKind.LAMBDA_0J else "N"
    stats_line = (
        f"{label}={stats.cardinality} depth={stats.min_depth}..{stats.max_depth} "
        f"mass={stats.mass:.17g} nodes={stats.nodes_visited}"
    )
    rows = antichain_service.antichain_rows(carpet, antichain.words(), antichain.r)
    write_csv(args.out / "antichain.csv", rows, manifest, extra_header=[stats_line])
    print(stats_line)
    return 0


def cmd_converge(args, carpet, manifest) -> int:
    rows = []
    if args.r == 0:
        target = dims_service.s0(carpet)
        for j in args.j_list:
            ac = antichain_service.build_antichain(
                carpet, AntichainKind.LAMBDA_0J, j, 0.0, args.budget, retain_words=False
            )
            value = antichain_service.antichain_entropy_ratio(ac)
            rows.append({"j": j, "count": len(ac), "t": value, "target": target, "gap": abs(value - target)})
    else:
        target = dims_service.solve_sr(carpet, args.r)
        for j in args.j_list:
            ac = antichain_service.build_antichain(
                carpet, AntichainKind.GAMMA_JR, j, args.r, args.budget, retain_words=False
            )
            value = antichain_service.antichain_exponent(ac)
            rows.append({"j": j, "count": len(ac), "t": value, "target": target, "gap": abs(value - target)})
    write_csv(args.out / "converge.csv", rows, manifest)
    return 0


def cmd_shells(args, carpet, manifest) -> int:
    counts = antichain_service.shell_counts(carpet, args.r, args.k_max, args.budget)
    rows = [
        {
            "k": row.k,
            "phi": row.phi,
            "phi_tilde": row.phi_tilde,
            "shell_exponent": row.shell_exponent,
            "tilde_exponent": row.tilde_exponent,
            "delta_kr": row.delta_kr,
            "bracket_lo": row.bracket_lo,
            "bracket_hi": row.bracket_hi,
        }
        for row in counts.rows
    ]
    write_csv(args.out / "shells.csv", rows, manifest, extra_header=[f"lambda1={counts.lambda1:.17g}"])
    return 0


def cmd_quantize(args, carpet, manifest) -> int:
    ks = args.k_list
    if not ks or any(b <= a for a, b in zip(ks, ks[1:])):
        return _usage("--k must be a strictly ascending list")
    curve = quantizer_service.error_curve(
        carpet,
        args.r,
        ks,
        args.depth,
        seed=args.seed,
        restarts=args.restarts,
        workers=args.workers,
        budget=args.budget,
    )
    coef_name = "s0inv_logk_plus_ehat" if args.r == 0 else "k1s_e"
    rows = [
        {
            "k": row.k,
            "e": row.e,
            "residual": row.residual,
            "restarts": row.restarts,
            coef_name: row.coefficient,
            "monotone": row.monotone,
        }
        for row in curve.rows
    ]
    header = [
        f"r={curve.r:.17g} s={curve.s:.17g} depth={curve.depth} bias={curve.bias:.17g}",
        f"slope={curve.slope:.17g} slope_residual={curve.slope_residual:.17g}",
        "tolerances on slope and coefficient windows are engineering choices",
    ]
    write_csv(args.out / "curve.csv", rows, manifest, extra_header=header)
    return 0


def cmd_bounds(args, carpet, manifest) -> int:
    count_name = "psi" if args.r == 0 else "N"
    rows = [
        {"j": row.j, count_name: row.count, "bound": row.bound, "proxy": row.proxy}
        for row in quantizer_service.bound_rows(carpet, args.r, args.j_list, args.budget)
    ]
    write_csv(args.out / "bounds.csv", rows, manifest)
    return 0


def cmd_verify(args, carpet, manifest) -> int:
    settings = get_settings().model_copy(
        update={"seed": args.seed, "budget": args.budget, "tol": args.tol, "workers": args.workers}
    )
    result = asyncio.run(VerifyAgent().ainvoke(carpet, settings))
    path = args.out / "verify.md"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(result["report"] + "\n", encoding="utf-8")
    manifest.outputs.append(str(path))
    print(result["report"])
    return 0 if result["passed"] else 1


COMMANDS = {
    "dims": cmd_dims,
    "spectrum": cmd_spectrum,
    "antichain": cmd_antichain,
    "converge": cmd_converge,
    "shells": cmd_shells,
    "quantize": cmd_quantize,
    "bounds": cmd_bounds,
    "verify": cmd_verify,
}


def _usage(message: str) -> int:
    print(f"carpetq: error: {message}", file=sys.stderr)
    return 2


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    logging.basicConfig(level=settings.log_level, format=LOG_FORMAT)
    args = build_parser().parse_args(argv)
    try:
        carpet, digest = load_config(args.config, args.separation_gap)
        manifest = _manifest(args, digest)
        status = COMMANDS[args.command](args, carpet, manifest)
        write_manifest(args.out, manifest)
    except CarpetError as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"carpetq: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return status


if __name__ == "__main__":
    raise SystemExit(main())
