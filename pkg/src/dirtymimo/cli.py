"""Command-line front end.

Subcommands: ``decompose``, ``rates``, ``twrc`` and ``sim``.  Inputs are JSON
files (``bundled:<name>`` selects a file shipped in ``dirtymimo/data``);
tables are CSV.

Exit codes: 0 success, 2 parse error, 3 validation error, 4 numerical
failure, 5 verifier failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import decomp, rates, twrc
from .errors import DirtyMimoError, ParseError, TooFewBlocks, VerificationFailed
from .linalg import DEFAULT_TOL, ProperChannel, matrix_from_json, matrix_to_json, qr_lower, svd, validate_proper
from .sim import SimConfig

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ParseError(message)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("dirtymimo") / "data" / name))


def _read_json(path: str):
    if path.startswith("bundled:"):
        p = bundled_path(path.split(":", 1)[1])
    else:
        p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON: {exc}") from exc


def _write(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _tolerances(items) -> decomp.Tolerances:
    overrides = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise ParseError(f"--tol expects NAME=VALUE, got {item!r}")
        try:
            overrides[name] = float(value)
        except ValueError as exc:
            raise ParseError(f"--tol {name}: {value!r} is not a number") from exc
    try:
        return DEFAULT_TOL.replace(**overrides)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def _sweep_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, points = spec.split(":")
        return twrc.geometric_grid(float(lo), float(hi), int(points))
    except ValueError as exc:
        raise ParseError(f"--sweep expects min:max:points with 0 < min < max, points >= 2: {exc}") from exc


def _matrices(args, count: int | None = None) -> list[np.ndarray]:
    mats = []
    for path in args.input:
        obj = _read_json(path)
        if isinstance(obj, dict) and "channels" in obj:
            mats.extend(matrix_from_json(m) for m in obj["channels"])
        else:
            mats.append(matrix_from_json(obj))
    if count is not None and len(mats) != count:
        raise ParseError(f"expected {count} matrices, got {len(mats)}")
    return mats


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_decompose(args) -> int:
    tol = _tolerances(args.tol)
    if args.kind in ("jet", "jet_left"):
        a1, a2 = _matrices(args, 2)
        if args.kind == "jet":
            jt = decomp.jet_shared_right(a1, a2, tol)
        else:
            jt = decomp.jet_shared_left(a1, a2, tol)
        report = decomp.verify_joint_triangularization(jt, [a1, a2], tol)
        factors = jt.to_json()
        diag = jt.diag
    else:
        (a,) = _matrices(args, 1)
        if args.kind == "qr":
            q, t = qr_lower(a)
            result = decomp.GtdResult(np.eye(a.shape[0]), t, q)
            factors = {"q": matrix_to_json(q), "t": matrix_to_json(t)}
        elif args.kind == "svd":
            u, sigma, v = svd(a)
            result = decomp.GtdResult(u, np.diag(sigma), v)
            factors = {"u": matrix_to_json(u), "sigma": sigma.tolist(), "v": matrix_to_json(v)}
        else:
            result = decomp.gmd(a, tol)
            factors = {"u": matrix_to_json(result.u), "t": matrix_to_json(result.t), "v": matrix_to_json(result.v)}
        report = decomp.verify_gtd(result, a, tol)
        diag = result.diag
    out = {"kind": args.kind, "factors": factors, "report": report.to_json()}
    _write(json.dumps(out, indent=2) + "\n", args.output)
    verdict = "pass" if report.passed else "fail: " + "; ".join(report.failures)
    print(f"{args.kind}: {verdict}; diag = [{', '.join(f'{x:.12g}' for x in diag)}]", file=sys.stderr)
    if not report.passed:
        raise VerificationFailed(verdict)
    return EXIT_OK


def _instance(args):
    obj = _read_json(args.input[0])
    try:
        channels = [matrix_from_json(m) for m in obj["channels"]]
        power = obj.get("power") if args.power is None else args.power
        kind = args.power_kind or obj.get("power_kind", "total")
        blocks = args.blocks if args.blocks is not None else obj.get("blocks")
    except (KeyError, TypeError, AttributeError) as exc:
        raise ParseError(f"bad rate instance: {exc}") from exc
    if power is None:
        raise ParseError("no power given (instance 'power' field or --power)")
    return channels, power, kind, blocks


def _rate_summary(channels, power, kind, blocks) -> rates.RateSummary:
    ants = tuple(h.shape[1] for h in channels)
    p = np.broadcast_to(np.asarray(power, dtype=float), (len(channels),))
    ps = rates.PowerSet(tuple(p), rates.PowerKind(kind), ants)
    k = len(channels)
    if k >= 3 and blocks is None:
        n_r = channels[0].shape[0]
        raise TooFewBlocks(
            f"{k} users need --blocks N with N >= N_r^(K-2) = {n_r ** (k - 2)} "
            "(usable blocks N~ = N - N_r^(K-2) + 1)"
        )
    summary = rates.gap_report(channels, ps, blocks)
    chans = [ProperChannel(h, t) for h, t in zip(channels, ps.totals())]
    qrd = rates.qrd_bottleneck_rate(chans)
    summary.rates["qrd_bottleneck"] = qrd["qrd_bottleneck"]
    summary.meta["power_kind"] = ps.kind.value
    summary.meta["total_powers"] = ps.totals().tolist()
    return summary


def cmd_rates(args) -> int:
    channels, power, kind, blocks = _instance(args)
    for i, h in enumerate(channels):
        report = validate_proper(h, DEFAULT_TOL.proper)
        if not report.accepted:
            raise decomp.NotProper(f"channel {i + 1}: " + "; ".join(report.failures))
    if args.sweep:
        grid = _sweep_grid(args.sweep)
        summaries = [_rate_summary(channels, p, kind, blocks) for p in grid]
        if args.format == "json":
            text = json.dumps([{"P": float(p), **s.to_json()} for p, s in zip(grid, summaries)], indent=2) + "\n"
        else:
            text = rates.summaries_to_csv(grid, summaries)
    else:
        summary = _rate_summary(channels, power, kind, blocks)
        if args.format == "csv":
            p0 = float(np.atleast_1d(power)[0])
            text = rates.summaries_to_csv([p0], [summary])
        else:
            text = json.dumps(summary.to_json(), indent=2) + "\n"
    _write(text, args.output)
    return EXIT_OK


def cmd_twrc(args) -> int:
    obj = _read_json(args.input[0])
    if args.power_kind:
        obj = dict(obj, power_kind=args.power_kind)
    if args.power is not None:
        obj = dict(obj, power=args.power)
    scenario = twrc.TwrcScenario.from_json(obj)
    grid = _sweep_grid(args.sweep) if args.sweep else np.array([scenario.power])
    rows = twrc.sweep(scenario, grid)
    if args.format == "json":
        text = json.dumps({"meta": twrc.power_mapping_note(scenario), "rows": rows}, indent=2) + "\n"
    else:
        text = twrc.sweep_csv(scenario, rows)
    _write(text, args.output)
    return EXIT_OK


def cmd_sim(args) -> int:
    config = SimConfig.from_json(_read_json(args.input[0]))
    if args.trials is not None:
        config.trials = args.trials
    # the flag is mandatory; a config "seed" only serves library callers
    if args.seed is None:
        raise ParseError("sim needs --seed")
    report = config.run(args.seed)
    _write(report.dumps() + "\n", args.output)
    print(report.summary(), file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", action="append", required=True, help="input JSON file (repeatable)")
    common.add_argument("--output", help="output file (default: stdout)")
    common.add_argument("--tol", action="append", metavar="NAME=VALUE",
                        help="tolerance override, e.g. reconstruction=1e-6 (repeatable)")
    common.add_argument("--format", choices=("json", "csv"), default=None)

    power = _Parser(add_help=False)
    power.add_argument("--power", type=float)
    power.add_argument("--power-kind", choices=("total", "per_antenna"))
    power.add_argument("--sweep", metavar="MIN:MAX:POINTS", help="geometric power grid")

    parser = _Parser(prog="dirtymimo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose", parents=[common], help="factorize matrices and verify the factors")
    p.add_argument("--kind", choices=("qr", "svd", "gmd", "jet", "jet_left"), required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("rates", parents=[common, power], help="rate bounds of a dirty MAC instance")
    p.add_argument("--blocks", type=int, help="time-extension block count N (required for K >= 3)")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("twrc", parents=[common, power], help="two-way relay rate table")
    p.set_defaults(func=cmd_twrc)

    p = sub.add_parser("sim", parents=[common], help="Monte Carlo run of a transmission scheme")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_sim)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.format is None:
            args.format = "csv" if args.command == "twrc" or getattr(args, "sweep", None) else "json"
        return args.func(args)
    except DirtyMimoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: ValidationError: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: NumericalError: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
