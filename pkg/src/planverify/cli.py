"""Command-line front end.

Exit codes: 0 success, 1 domain error (structured JSON diagnostic on
stderr), 2 usage error or missing input file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import corpus as bundled
from .automata import AutomatonError, fsa_to_doc, fsa_to_dot, ts_from_doc
from .calibration import DegenerateCalibration
from .checker import check_plan
from .config import ConfigError, RunConfig
from .formula import LtlSyntaxError, parse_ltl
from .l2a import L2AError, PropositionMapping, UnmappedApi, l2a
from .ltl import FormulaTooLarge
from .oracles import BackendUnavailable, DimensionMismatch, UnparseableAnswer
from .pipeline import EmptyStream, Runner, dump_json, metrics, read_verdicts, verify_one
from .plan_lang import ApiTable, PlanError, ast_to_doc, parse_plan, pretty_print, validate_plan
from .projector import DegenerateLabels
from .refine import MissingPair

log = logging.getLogger("planverify")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2

DOMAIN_ERRORS = (
    PlanError, LtlSyntaxError, L2AError, AutomatonError, FormulaTooLarge, BackendUnavailable, UnparseableAnswer,
    DimensionMismatch, DegenerateLabels, DegenerateCalibration, EmptyStream, MissingPair,
)


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p.read_text(encoding="utf-8")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _config(args) -> RunConfig:
    path = getattr(args, "config", None)
    cfg = RunConfig.load(_require(path)) if path else RunConfig()
    changes = {}
    for name in ("seed", "backend", "tau", "out_dir"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    return replace(cfg, **changes) if changes else cfg


def _require(path: str) -> str:
    if not Path(path).exists():
        raise UsageError(f"no such file: {path}")
    return path


def _mapping(args) -> PropositionMapping:
    if args.mapping:
        return PropositionMapping.load(_require(args.mapping))
    return bundled.mapping(args.domain)


def _formula(args):
    if args.formula:
        return parse_ltl(args.formula)
    specs = bundled.load_specs(_require(args.specs) if args.specs else None)
    if args.spec not in specs:
        raise UsageError(f"unknown specification id {args.spec!r}; known: {', '.join(sorted(specs))}")
    return specs[args.spec].formula


# --- commands ------------------------------------------------------------------------


def cmd_parse(args) -> int:
    ast = parse_plan(_read(args.plan))
    if args.format == "text":
        _emit(pretty_print(ast), args.output)
        return EXIT_OK
    doc = {"ast": ast_to_doc(ast)}
    if args.api or args.domain:
        table = ApiTable.from_doc(json.loads(_read(args.api))) if args.api else bundled.api_table(args.domain)
        doc["diagnostics"] = [d.__dict__ for d in validate_plan(ast, table)]
    _emit(_json(doc), args.output)
    return EXIT_OK


def cmd_l2a(args) -> int:
    fsa = l2a(parse_plan(_read(args.plan)), _mapping(args), permissive=args.permissive)
    if args.dot:
        Path(args.dot).write_text(fsa_to_dot(fsa), encoding="utf-8")
    if args.format == "dot":
        _emit(fsa_to_dot(fsa), args.output)
    else:
        _emit(_json(fsa_to_doc(fsa)), args.output)
    return EXIT_OK


def cmd_check(args) -> int:
    ts = ts_from_doc(json.loads(_read(args.ts))) if args.ts else None
    result = check_plan(parse_plan(_read(args.plan)), _mapping(args), _formula(args), ts=ts, permissive=args.permissive)
    _emit(_json(result.to_doc()), args.output)
    return EXIT_OK


def cmd_train(args) -> int:
    report = Runner(_config(args)).train()
    _emit(_json({k: v for k, v in report.items() if k != "epoch_losses"} | {"epoch_losses": report["epoch_losses"]}), None)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    runner = Runner(_config(args))
    _require(str(runner.path("checkpoint")))
    table = runner.calibrate()
    _emit(_json({"n": table.n, "prior_unsafe": table.prior(0), "prior_safe": table.prior(1),
                 "path": str(runner.path("calibration"))}), None)
    return EXIT_OK


def cmd_verify(args) -> int:
    runner = Runner(_config(args))
    _require(str(runner.path("checkpoint")))
    _require(str(runner.path("calibration")))
    if args.plan:
        if not args.rule:
            raise UsageError("--plan requires --rule")
        v = verify_one(_read(args.plan), args.rule, runner.params(), runner.table(), runner.interpreter, runner.embedder)
        _emit(_json(v.to_doc()), None)
        return EXIT_OK
    report = runner.verify()
    _emit(_json({k: report[k] for k in ("n", "accuracy", "interpreter_accuracy", "compliance_rate",
                                        "predicted_compliance_rate") if k in report}), None)
    return EXIT_OK


def cmd_refine(args) -> int:
    runner = Runner(_config(args))
    _require(str(runner.path("verdicts")))
    _emit(_json(runner.refine()), None)
    return EXIT_OK


def cmd_report(args) -> int:
    report = metrics(read_verdicts(_require(args.verdicts)))
    _emit(dump_json(report), args.output)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--backend", choices=("mock", "remote"), help="override the configured backend")
    common.add_argument("--tau", type=float, help="guarantee threshold for SFT export")
    common.add_argument("--out-dir", dest="out_dir", help="artifact directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="planverify", description="Formal and probabilistic verification of robot plans.",
                                parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def mapping_opts(sp):
        sp.add_argument("--domain", default="carla", choices=bundled.DOMAINS, help="bundled mapping to use")
        sp.add_argument("--mapping", help="proposition mapping file (overrides --domain)")
        sp.add_argument("--permissive", action="store_true", help="treat unmapped action calls as no-ops")

    sp = sub.add_parser("parse", parents=[common], help="parse a plan and dump its AST")
    sp.add_argument("plan")
    sp.add_argument("--format", choices=("json", "text"), default="json")
    sp.add_argument("--domain", choices=bundled.DOMAINS, help="validate against a bundled API table")
    sp.add_argument("--api", help="validate against an API table file")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("l2a", parents=[common], help="compile a plan to an automaton")
    sp.add_argument("plan")
    mapping_opts(sp)
    sp.add_argument("--format", choices=("json", "dot"), default="json")
    sp.add_argument("--dot", help="also write DOT text to this file")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_l2a)

    sp = sub.add_parser("check", parents=[common], help="model-check a plan against an LTL formula")
    sp.add_argument("plan")
    mapping_opts(sp)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--spec", help="specification id from the specs file")
    g.add_argument("--formula", help="LTL formula text")
    sp.add_argument("--specs", help="specs file (default: bundled)")
    sp.add_argument("--ts", help="environment transition system file")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("train", parents=[common], help="collect labeled samples and train the projector")
    sp.set_defaults(func=cmd_train)
    sp = sub.add_parser("calibrate", parents=[common], help="build the calibration table")
    sp.set_defaults(func=cmd_calibrate)
    sp = sub.add_parser("verify", parents=[common], help="verify held-out plans (or one plan)")
    sp.add_argument("--plan", help="verify a single plan file")
    sp.add_argument("--rule", help="natural-language rule for --plan")
    sp.set_defaults(func=cmd_verify)
    sp = sub.add_parser("refine", parents=[common], help="export SFT and DPO data from verdicts")
    sp.set_defaults(func=cmd_refine)
    sp = sub.add_parser("report", parents=[common], help="metrics from a verdict stream")
    sp.add_argument("verdicts")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_report)
    return p


def _diagnostic(exc: BaseException) -> dict:
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, PlanError):
        doc.update(line=exc.line, column=exc.column, expected=exc.expected)
    elif isinstance(exc, LtlSyntaxError):
        doc.update(position=exc.pos)
    elif isinstance(exc, UnmappedApi):
        doc.update(api=exc.api, arguments=list(exc.arguments), line=exc.line)
    return doc


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_USAGE
    except DOMAIN_ERRORS as exc:
        sys.stderr.write(json.dumps(_diagnostic(exc), default=str) + "\n")
        return EXIT_DOMAIN
    except (ValueError, json.JSONDecodeError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
