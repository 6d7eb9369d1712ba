# pace_cli.py
"""
Command-line entry point: optimize, eval, perturb, report and bench.

Exit codes: 0 success, 1 usage, 2 config, 3 data, 4 backend, 5 internal.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from bench_harness import (
    EvalContext,
    PromptSetting,
    Strategy,
    evaluate_final,
    run_benchmark,
    run_optimization,
    select_initial_prompt,
    setting_name,
)
from data_models import Prompt, PromptOrigin, RunMode, load_task, make_split
from llm_gateway import BackendKind, LLMGateway
from pace_config import CliConfig
from pace_errors import PaceError, UsageError
from perturbation import PerturbSpec, butter_fingers
from run_artifacts import REPORT_FORMATS, RunArtifact, emit_report
from scoring import Metric

logger = logging.getLogger(__name__)

SETTINGS = [s.value for s in PromptSetting]

class PaceArgumentParser(argparse.ArgumentParser):
    """Reports bad flags as UsageError (exit 1) instead of exiting with 2"""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")

def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="Run seed")
    parser.add_argument("--backend", choices=[k.value for k in BackendKind], help="Backend kind")

def _add_prompt_flags(parser: argparse.ArgumentParser, default_setting: Optional[str]) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--prompt", help="Literal initial prompt text")
    group.add_argument("--setting", choices=SETTINGS, default=None,
                       help=f"Initial-prompt setting (default {default_setting})")

def build_parser() -> argparse.ArgumentParser:
    parser = PaceArgumentParser(prog="pace", description="Actor-critic prompt editing")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--quiet", action="store_true", help="Warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=PaceArgumentParser)

    optimize = commands.add_parser("optimize", help="Optimize a task prompt and write a run artifact")
    optimize.add_argument("--task", required=True, help="Task JSON file")
    _add_prompt_flags(optimize, "worst")
    _add_run_flags(optimize)
    optimize.add_argument("--out", help="Run directory (default runs/<task>-<setting>)")
    optimize.add_argument("--mode", choices=[m.value for m in RunMode], help="full or an ablation")
    optimize.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.PACE.value)
    optimize.add_argument("--max-iters", type=int, dest="max_iters")
    optimize.add_argument("--n-agents", type=int, dest="n_agents")
    optimize.add_argument("--candidates", type=int, dest="candidates_per_iter")

    evaluate = commands.add_parser("eval", help="Score one prompt on one split")
    evaluate.add_argument("--task", required=True, help="Task JSON file")
    prompt_group = evaluate.add_mutually_exclusive_group()
    prompt_group.add_argument("--prompt", help="Literal prompt text")
    prompt_group.add_argument("--prompt-file", dest="prompt_file", help="File holding the prompt")
    prompt_group.add_argument("--setting", choices=SETTINGS, help="Initial-prompt setting")
    evaluate.add_argument("--split", choices=["train", "val", "test"], default="test")
    _add_run_flags(evaluate)

    perturb = commands.add_parser("perturb", help="Butter Fingers typos on text")
    source = perturb.add_mutually_exclusive_group(required=True)
    source.add_argument("--text", help="Text to perturb")
    source.add_argument("--file", help="File to perturb")
    perturb.add_argument("--rate", type=float, default=PerturbSpec().rate)
    perturb.add_argument("--seed", type=int, default=0)

    report = commands.add_parser("report", help="Summarize run directories")
    report.add_argument("runs", nargs="*", help="Run directories")
    report.add_argument("--format", choices=list(REPORT_FORMATS), default="markdown")
    report.add_argument("--output", help="Write the report to a file instead of stdout")

    bench = commands.add_parser("bench", help="Run every task x setting and print the report")
    bench.add_argument("--task", action="append", required=True, help="Task JSON file (repeatable)")
    bench.add_argument("--settings", default=",".join(SETTINGS), help="Comma-separated settings")
    bench.add_argument("--repeats", type=int, default=1)
    bench.add_argument("--out", default="runs", help="Directory for run artifacts")
    bench.add_argument("--format", choices=list(REPORT_FORMATS), default="markdown")
    bench.add_argument("--mode", choices=[m.value for m in RunMode])
    bench.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.PACE.value)
    _add_run_flags(bench)

    return parser

def _load_config(args: argparse.Namespace) -> CliConfig:
    overrides = {
        "seed": args.seed,
        "backend": args.backend,
        "mode": getattr(args, "mode", None),
        "max_iters": getattr(args, "max_iters", None),
        "n_agents": getattr(args, "n_agents", None),
        "candidates_per_iter": getattr(args, "candidates_per_iter", None),
    }
    return CliConfig.load(args.config, overrides)

# Commands
def cmd_optimize(args: argparse.Namespace) -> int:
    cli_config = _load_config(args)
    task = load_task(args.task)
    setting = args.prompt if args.prompt is not None else (args.setting or PromptSetting.WORST.value)
    out_dir = args.out or str(Path("runs") / f"{task.name}-{setting_name(setting)}")

    artifact = run_optimization(
        task, setting, cli_config.run, out_dir, cli_config.templates(), args.strategy
    )
    footer = artifact.footer
    print(f"Final prompt: {footer.final_prompt}")
    print(f"Val score: {footer.val_score:.2f}")
    print(f"Test score: {footer.test_score:.2f}")
    print(f"Run artifact: {out_dir}")
    return 0

def cmd_eval(args: argparse.Namespace) -> int:
    cli_config = _load_config(args)
    task = load_task(args.task)
    run = cli_config.run
    context = EvalContext(
        split=make_split(task, run.split_ratios, run.seed),
        metric=Metric.of(task.metric),
        gateway=LLMGateway(run.backend),
        templates=cli_config.templates(),
        parallelism=run.parallelism,
    )

    if args.prompt_file:
        try:
            text = Path(args.prompt_file).read_text(encoding="utf-8").strip()
        except OSError as e:
            raise UsageError(f"cannot read prompt file {args.prompt_file}: {e}") from e
        prompt = Prompt(text=text, origin=PromptOrigin.HUMAN) if text else Prompt.empty()
    elif args.prompt is not None:
        prompt = Prompt(text=args.prompt, origin=PromptOrigin.HUMAN) if args.prompt else Prompt.empty()
    else:
        prompt = select_initial_prompt(task, args.setting or PromptSetting.MEDIUM.value, context)

    report = evaluate_final(prompt, context) if args.split == "test" else context.score(prompt, args.split)
    for index, score in report.per_pair:
        print(f"pair {index}: {score:.4f}")
    print(f"mean: {report.mean:.2f} ({report.metric_id.value}, {report.n_pairs} pairs, split {args.split})")
    return 0

def cmd_perturb(args: argparse.Namespace) -> int:
    if args.file:
        try:
            text = Path(args.file).read_text(encoding="utf-8")
        except OSError as e:
            raise UsageError(f"cannot read {args.file}: {e}") from e
    else:
        text = args.text
    if not 0.0 <= args.rate <= 1.0:
        raise UsageError("--rate must be within [0, 1]")

    result = butter_fingers(text, PerturbSpec(rate=args.rate, seed=args.seed))
    sys.stdout.write(result if result.endswith("\n") else result + "\n")
    return 0

def _write_report(document: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(document if document.endswith("\n") else document + "\n", encoding="utf-8")
        logger.info(f"✅ Report written to {output}")
    else:
        print(document)

def cmd_report(args: argparse.Namespace) -> int:
    artifacts = [RunArtifact.load(run_dir) for run_dir in args.runs]
    _write_report(emit_report(artifacts, args.format), args.output)
    return 0

def cmd_bench(args: argparse.Namespace) -> int:
    cli_config = _load_config(args)
    settings = [s.strip() for s in args.settings.split(",") if s.strip()]
    unknown = [s for s in settings if s not in SETTINGS]
    if unknown:
        raise UsageError(f"unknown settings: {', '.join(unknown)}")

    artifacts = run_benchmark(
        args.task, settings, cli_config.run, args.out, cli_config.templates(),
        repeats=args.repeats, strategy=args.strategy,
    )
    print(emit_report(artifacts, args.format))
    return 0

COMMANDS = {
    "optimize": cmd_optimize,
    "eval": cmd_eval,
    "perturb": cmd_perturb,
    "report": cmd_report,
    "bench": cmd_bench,
}

def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"❌ {e.detail}", file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr, force=True)

    try:
        return COMMANDS[args.command](args)
    except PaceError as e:
        print(f"❌ {e.detail}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        print(f"❌ internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 5

if __name__ == "__main__":
    sys.exit(main())
