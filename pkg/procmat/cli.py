"""Command-line front end: `python -m procmat <command> [flags]`.

Exit codes: 0 success, 2 invalid input (files, parameters, processes),
3 solver did not converge.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import Any, Dict, Optional, Sequence, TextIO

from . import __version__
from .builder import NAMED_PROCESSES, NamedProcessBuilder
from .conic_solver import SolverError
from .contract_adapter import ContractAdapter
from .facade import CSV_COLUMNS, DEFAULT_KAPPAS, AnalysisFacade
from .persistence_proxy import PersistenceProxy
from .process_space import FamilyParams, ProcessMatrix
from .sampler import ChainConfig
from .store_json import JsonFileDatabase

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3

_REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _threads_from_env() -> int:
    raw = os.getenv("PROCMAT_THREADS", "").strip()
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        logger.warning("ignoring PROCMAT_THREADS=%r (not an integer)", raw)
        return 1


def _data_path_from_env() -> str:
    return os.getenv("PROCMAT_DATA_PATH", os.path.join(_REPO_ROOT, "data", "store.json"))


def _log_level_from_env() -> str:
    return os.getenv("PROCMAT_LOG_LEVEL", "WARNING").strip().upper() or "WARNING"


def build_facade(threads: Optional[int] = None) -> AnalysisFacade:
    db = JsonFileDatabase(_data_path_from_env())
    return AnalysisFacade(
        adapter=ContractAdapter(),
        proxy=PersistenceProxy(db),
        builder=NamedProcessBuilder(),
        threads=threads if threads is not None else _threads_from_env(),
    )


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------

def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--in", dest="input", help="input JSON file, '-' for stdin")
    p.add_argument("--out", help="output file (CSV commands also write <out>.manifest.json)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--name", choices=NAMED_PROCESSES, default=None, help="named process to use instead of --in")
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--tol", type=float, default=None, help="solver tolerance (default 1e-9)")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default $PROCMAT_THREADS or 1)")
    p.add_argument("--allow-invalid", action="store_true", help="accept processes that fail validation")
    p.add_argument("--verbose", "-v", action="count", default=0)
    return p


_CSV_HELP = "\n".join(f"  {cmd}: {', '.join(cols)}" for cmd, cols in CSV_COLUMNS.items())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="procmat",
        description="Bipartite process matrices: validity, causal separability, see-saw and sampling.",
        epilog="CSV columns:\n" + _CSV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"procmat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()

    def add(name: str, help_: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    add("named", "print a named process as a Pauli ProcessFile")
    add("validate", "report PSD / normalization / subspace checks; exit 2 when invalid")
    add("robustness", "random robustness R_r(W) by SDP")
    w = add("witness", "the built-in causal witness and its sufficient check")
    w.add_argument("--certify", action="store_true", help="also certify the witness by SDP")
    b = add("born", "probability table of random instruments on a process")
    b.add_argument("--settings", type=int, default=2)
    b.add_argument("--outcomes", type=int, default=2)
    add("causal-lp", "decide whether a probability table (--in) is causal")
    s = add("seesaw", "see-saw maximization of a game (GYNI by default)")
    s.add_argument("--game", help="GameFunctional JSON file")
    for name, help_ in (("sample", "hit-and-run samples of valid processes"),
                        ("ptb-pipeline", "separable samples pushed through the partial transpose")):
        c = add(name, help_)
        c.add_argument("--warmup", type=int, default=10_000)
        c.add_argument("--thinning", type=int, default=100)
        c.add_argument("--variant", choices=("chord", "reject"), default="chord")
        if name == "sample":
            c.add_argument("--no-classify", action="store_true", help="skip the robustness SDPs")
            c.add_argument("--checkpoint", help="name under which the chain state is saved and resumed")
    r = add("region", "validity and causal-separability thresholds of W(q, eps)")
    r.add_argument("--grid", type=int, default=1001)
    add("werner-window", "gamma window of the Werner-like family, checked by SDP at --gamma (default 0.2)")
    n = add("noise-sweep", "see-saw on the ancilla-extended process under white noise")
    n.add_argument("--game", help="GameFunctional JSON file")
    n.add_argument("--kappas", default=",".join(repr(k) for k in DEFAULT_KAPPAS),
                   help="comma-separated noise weights")
    return parser


# ----------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------

def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc.strerror}") from None


def _family_params(args: argparse.Namespace) -> FamilyParams:
    values = {k: getattr(args, k) for k in ("q", "eps", "alpha", "gamma", "kappa") if getattr(args, k) is not None}
    return FamilyParams(**values)


def _process(facade: AnalysisFacade, args: argparse.Namespace, allow_invalid: bool = False) -> ProcessMatrix:
    if args.input:
        return facade.load_process(_read_text(args.input), allow_invalid or args.allow_invalid)
    name = args.name or "wopt"
    return facade.builder.build(name, _family_params(args))


def _emit(text: str, out: Optional[str], stream: TextIO) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text if text.endswith("\n") else text + "\n")
    else:
        stream.write(text if text.endswith("\n") else text + "\n")


def _dump(model: Any) -> str:
    return model.model_dump_json(indent=2, exclude_none=True)


def _chain_config(args: argparse.Namespace) -> ChainConfig:
    return ChainConfig(seed=args.seed, warmup_steps=args.warmup, thinning=args.thinning, variant=args.variant)


def _config_snapshot(args: argparse.Namespace) -> Dict[str, Any]:
    skip = {"verbose", "out", "format", "input"}
    snap = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    snap["input"] = args.input
    return snap


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def run(args: argparse.Namespace, stdout: TextIO) -> int:
    facade = build_facade(args.threads)
    cmd = args.command
    started = time.perf_counter()

    if cmd == "named":
        _emit(_dump(facade.named(args.name or "wopt", _family_params(args))), args.out, stdout)
        return EXIT_OK

    if cmd == "validate":
        report = facade.validate(_process(facade, args, allow_invalid=True))
        if args.format == "json":
            _emit(_dump(report), args.out, stdout)
        else:
            lines = [f"{k}: {v}" for k, v in report.model_dump().items()]
            _emit("\n".join(lines), args.out, stdout)
        return EXIT_OK if report.valid else EXIT_INVALID

    if cmd == "robustness":
        result = facade.robustness(_process(facade, args), args.tol)
        text = _dump(result) if args.format == "json" else f"{result.lambda_opt:.6f}"
        _emit(text, args.out, stdout)
        return EXIT_OK

    if cmd == "witness":
        result = facade.witness(args.certify, args.tol)
        if args.format == "json":
            text = _dump(result)
        else:
            lines = [f"{t.term} {t.coeff:+.6f}" for t in result.terms]
            lines.append(f"check_passed: {result.check_passed}")
            if result.certified is not None:
                lines.append(f"certified: {result.certified} (min value {result.certificate_value:.3e})")
            text = "\n".join(lines)
        _emit(text, args.out, stdout)
        return EXIT_OK

    if cmd == "born":
        table = facade.born(_process(facade, args), args.seed, args.settings, args.outcomes)
        _emit(_dump(table), args.out, stdout)
        return EXIT_OK

    if cmd == "causal-lp":
        if not args.input:
            raise ValueError("causal-lp needs --in <table.json>")
        table = facade.adapter.parse_table_text(_read_text(args.input))
        result = facade.causal_lp(table, args.tol)
        if args.format == "json":
            text = _dump(result)
        elif result.causal:
            text = f"causal (weight of A<B part {result.q:.6f})"
        else:
            text = f"not causal: certificate value {result.certificate_value:.6f} > bound {result.certificate_bound:g}"
        _emit(text, args.out, stdout)
        return EXIT_OK

    if cmd in ("seesaw", "noise-sweep"):
        game = facade.load_game(_read_text(args.game) if args.game else None)
        if cmd == "seesaw":
            summary, rows = facade.seesaw(_process(facade, args), game, args.restarts, args.seed,
                                          args.tol, args.kappa or 0.0)
            logger.info("seesaw: %s", summary)
        else:
            try:
                kappas = [float(k) for k in args.kappas.split(",") if k.strip()]
            except ValueError:
                raise ValueError(f"--kappas must be comma-separated numbers, got {args.kappas!r}") from None
            w_ext = _process(facade, args) if args.input else None
            rows = facade.noise_sweep(w_ext, game, kappas, args.restarts, args.seed, args.tol)
            summary = None
        facade.emit_csv(cmd, rows, args.out, _config_snapshot(args), [args.seed], started, stdout)
        if summary is not None and args.out:
            _emit(json.dumps(summary, indent=2), None, stdout)
        return EXIT_OK

    if cmd == "sample":
        summary, rows = facade.sample(_chain_config(args), args.samples, args.tol,
                                      classify=not args.no_classify, checkpoint_name=args.checkpoint)
        facade.emit_csv(cmd, rows, args.out, _config_snapshot(args), [args.seed], started, stdout)
        if args.out:
            _emit(json.dumps(summary, indent=2), None, stdout)
        return EXIT_OK

    if cmd == "ptb-pipeline":
        summary, rows = facade.ptb_pipeline(args.samples, _chain_config(args), args.tol)
        facade.emit_csv(cmd, rows, args.out, _config_snapshot(args), [args.seed], started, stdout)
        if args.out:
            _emit(json.dumps(summary, indent=2), None, stdout)
        return EXIT_OK

    if cmd == "region":
        rows = [r.model_dump() for r in facade.region(args.grid)]
        facade.emit_csv(cmd, rows, args.out, _config_snapshot(args), [], started, stdout)
        return EXIT_OK

    if cmd == "werner-window":
        alpha = 0.5 if args.alpha is None else args.alpha
        gamma = 0.2 if args.gamma is None else args.gamma
        result = facade.werner_window(alpha, gamma, args.tol)
        if args.format == "json":
            text = _dump(result)
        else:
            text = "\n".join([
                f"alpha: {result.alpha:g}",
                f"R_mix: {result.r_mix:.6f}  R'_mix: {result.r_mix_tb:.6f}",
                f"gamma window: [{result.gamma_low:.5f}, {result.gamma_high:.5f})",
                f"at gamma={result.gamma_check:g}: R={result.r_wer:.6f}, R(T_B)={result.r_wer_tb:.6f}, "
                f"check {'passed' if result.check_passed else 'FAILED'}",
            ])
        _emit(text, args.out, stdout)
        return EXIT_OK

    raise ValueError(f"unknown command {cmd!r}")


def main(argv: Optional[Sequence[str]] = None, stdout: Optional[TextIO] = None) -> int:
    args = build_parser().parse_args(argv)
    level = "DEBUG" if args.verbose > 1 else "INFO" if args.verbose == 1 else _log_level_from_env()
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    stdout = stdout or sys.stdout
    try:
        return run(args, stdout)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID