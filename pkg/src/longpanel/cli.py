"""Command-line interface.

Subcommands: ``generate`` (synthetic panel), ``split`` (emit split plans),
``run`` (full experiment), ``report`` (re-render figure tables from a
persisted run), ``audit`` (leakage check on a plan file).  Failures exit
nonzero and print a one-line JSON error summary to stderr.
"""

import argparse
import json
import os
import sys

from . import __version__
from .errors import LongpanelError
from .panel import save_panel
from .report import emit_report
from .runner import ExperimentConfig, prepare, run_to_dir, write_plans
from .splits import SplitPlan, audit_plan
from .synthetic import CohortSpec, generate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_AUDIT_FAILED = 2


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _override_seeds(doc, seed):
    """--seed replaces every named seed in the config document."""
    doc = dict(doc)
    doc["seed"] = seed
    if "synthetic" in doc and doc["synthetic"] is not None:
        doc["synthetic"] = dict(doc["synthetic"], seed=seed)
    if "split" in doc and doc["split"] is not None:
        doc["split"] = dict(doc["split"], seed=seed)
    return doc


def _cmd_generate(args):
    doc = _load_json(args.config)
    cohort = doc.get("synthetic", doc)
    if args.seed is not None:
        cohort = dict(cohort, seed=args.seed)
    spec = CohortSpec(**cohort)
    panel, truth = generate(spec)
    os.makedirs(args.out, exist_ok=True)
    panel_path = os.path.join(args.out, "panel.csv")
    truth_path = os.path.join(args.out, "truth.csv")
    save_panel(panel, panel_path)
    truth.to_csv(truth_path)
    print(
        f"wrote {panel_path} ({panel.n_people} people x "
        f"{panel.study_length} days x {panel.feature_dim} features) "
        f"and {truth_path}"
    )
    return EXIT_OK


def _config_from_args(args):
    doc = _load_json(args.config)
    if args.seed is not None:
        doc = _override_seeds(doc, args.seed)
    return ExperimentConfig.from_dict(doc)


def _cmd_split(args):
    config = _config_from_args(args)
    prepared = prepare(config)
    paths = write_plans(prepared, args.out)
    for path in paths:
        print(f"wrote {path}")
    bad = {
        key: audit for key, audit in prepared.audits.items() if not audit.passed
    }
    for (regime, h), err in sorted(
        prepared.failures.items(), key=lambda kv: (kv[0][0].value, kv[0][1])
    ):
        print(f"plan {regime.value} h={h} failed: {err}", file=sys.stderr)
    if bad:
        summary = {
            "error": "LeakageError",
            "message": "; ".join(
                f"{regime.value}/h{h}: " + "; ".join(audit.violations)
                for (regime, h), audit in sorted(
                    bad.items(), key=lambda kv: (kv[0][0].value, kv[0][1])
                )
            ),
        }
        print(json.dumps(summary), file=sys.stderr)
        return EXIT_AUDIT_FAILED
    return EXIT_OK


def _cmd_run(args):
    config = _config_from_args(args)
    result = run_to_dir(config, args.out, jobs=args.jobs)
    n_ok = sum(1 for c in result.cells if c.status == "ok")
    n_bad = len(result.cells) - n_ok
    print(f"{n_ok} cells ok, {n_bad} failed; results in {args.out}")
    if n_ok == 0 and result.cells:
        print(
            json.dumps(
                {
                    "error": "AllCellsFailed",
                    "message": result.cells[0].error or "every cell failed",
                }
            ),
            file=sys.stderr,
        )
        return EXIT_ERROR
    return EXIT_OK


def _cmd_report(args):
    written = emit_report(args.out, fmt=args.format)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_audit(args):
    plan = SplitPlan.from_csv(args.plan)
    report = audit_plan(plan)
    summary = {
        "regime": report.regime.value,
        "passed": report.passed,
        "checks": {k: bool(v) for k, v in sorted(report.checks.items())},
        "required": list(report.required),
        "violations": list(report.violations),
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK if report.passed else EXIT_AUDIT_FAILED


def build_parser():
    parser = argparse.ArgumentParser(
        prog="longpanel",
        description="Longitudinal panel evaluation toolkit",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic panel")
    p.add_argument("--config", required=True, help="cohort spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the seed")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("split", help="emit split plans and their audits")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override all seeds")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("run", help="run the full experiment grid")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override all seeds")
    p.add_argument("--jobs", type=int, default=1, help="parallel cells")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="re-render tables from a persisted run")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument(
        "--format", choices=("csv", "markdown", "both"), default="both"
    )
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("audit", help="leakage-audit a split plan file")
    p.add_argument("--plan", required=True, help="plan CSV path")
    p.set_defaults(func=_cmd_audit)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LongpanelError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return EXIT_ERROR
    except OSError as exc:
        print(
            json.dumps({"error": "IOError", "message": str(exc)}),
            file=sys.stderr,
        )
        return EXIT_ERROR


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
