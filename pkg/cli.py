#!/usr/bin/env python3
"""
hctlab 命令行入口

每个命令在 stdout 输出 JSON 摘要; 指定 --out DIR 时另外写出 CSV 表和 manifest.json
(参数、种子、版本及每个数据文件的 SHA-256)。日志以 JSON 行写到 stderr。

CSV 列顺序:
  hct        trace.csv       i, i_over_p, p_value, hc_value
  ideal      curves.csv      t, sep, err, fdr, lfdr
  phase      phase.csv       beta, r, region, q_star, fdr_limit, lfdr_limit, elevation_ratio,
                             sep_exponent_ideal, sep_exponent_fdrt, sep_exponent_bonf
  boundary   boundary.csv    p, n, level, beta, r, status
  simulate   records.csv     replicate, threshold_used, n_selected, n_true_selected, realized_fdr,
                             realized_mdr, test_error, realized_sep, plugin_error, error
  exponents  exponents.csv   beta, r, ideal, hct, fdrt, bonferroni
  compare    compare.csv     tau, method, threshold, sep, err, fdr, mdr
"""

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import Config
from distributions import ArwParams, RwParams, ThresholdKind
from errors import AppError, ErrorCode, InternalError, InvalidParamsError
from hc import hct_empirical, hct_ideal
from ideal import compare_methods, ideal_threshold, threshold_grid_table
from logger_config import get_trace_id, setup_logger
from phase import exponent_curves, finite_p_boundary, method_success_region, phase_table, Method
from rwsim import SelectorKind, SimConfig, Selector, ZScoreMode, run

logger = setup_logger(Config.APP_NAME, getattr(logging, Config.LOG_LEVEL, logging.INFO))

CSV_FLOAT_FORMAT = "%.17g"

# ==================== Output plumbing ====================

@dataclass
class RunManifest:
    command: str
    parameters: Dict[str, Any]
    seed: Optional[int]
    version: str
    checksums: Dict[str, str] = field(default_factory=dict)
    settings: Dict[str, Any] = field(default_factory=Config.get_config_dict)

    def to_dict(self) -> Dict[str, Any]:
        return _json_safe(asdict(self))


def _json_safe(value: Any) -> Any:
    """NaN/inf become null; numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class OutputDir:
    """原子地写入输出目录; 运行失败时删除已写出的全部文件"""

    def __init__(self, root: Optional[str]):
        self.root = Path(root) if root else None
        self.written: List[Path] = []

    def _write_text(self, name: str, text: str) -> Optional[Path]:
        if self.root is None:
            return None
        self.root.mkdir(parents=True, exist_ok=True)
        target = self.root / name
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
        self.written.append(target)
        return target

    def write_csv(self, name: str, frame: pd.DataFrame) -> Optional[Path]:
        return self._write_text(name, frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT))

    def write_json(self, name: str, payload: Dict[str, Any]) -> Optional[Path]:
        return self._write_text(name, json.dumps(_json_safe(payload), indent=2, ensure_ascii=False) + "\n")

    def finalize(self, manifest: RunManifest) -> None:
        if self.root is None:
            return
        manifest.checksums = {path.name: sha256_file(path) for path in self.written}
        self.write_json("manifest.json", manifest.to_dict())

    def discard(self) -> None:
        for path in self.written:
            if path.exists():
                path.unlink()
        self.written.clear()


# ==================== Argument handling ====================

def _add_model_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--p", type=int, help="number of features")
    parser.add_argument("--n", type=int, help="training-set size (derived from --p when --beta/--r are used)")
    parser.add_argument("--epsilon", type=float, help="fraction of useful features")
    parser.add_argument("--tau", type=float, help="feature strength in z-score units")
    parser.add_argument("--beta", type=float, help="rarity exponent, epsilon = p^-beta")
    parser.add_argument("--r", type=float, help="strength exponent, tau = sqrt(2 r log p)")
    parser.add_argument("--kind", choices=[k.value for k in ThresholdKind], default=ThresholdKind.CLIP.value)
    parser.add_argument("--grid-step", type=float, help="threshold search grid step (default from HCTLAB_GRID_STEP)")


def resolve_params(args: argparse.Namespace) -> Tuple[RwParams, Dict[str, Any]]:
    """(p, n, epsilon, tau) directly, or (p, beta, r) through the asymptotic scalings."""
    if args.p is None:
        raise InvalidParamsError("--p is required")
    if args.beta is not None or args.r is not None:
        if args.beta is None or args.r is None:
            raise InvalidParamsError("--beta and --r must be given together")
        arw = ArwParams(beta=args.beta, r=args.r, p=args.p)
        params = arw.to_rw()
        if args.n is not None:
            params = RwParams(p=params.p, n=args.n, epsilon=params.epsilon, tau=params.tau)
        echo = {"beta": args.beta, "r": args.r, **asdict(params)}
        return params, echo
    missing = [name for name in ("n", "epsilon", "tau") if getattr(args, name) is None]
    if missing:
        raise InvalidParamsError("missing model parameters", details={"missing": ["--" + m for m in missing]})
    params = RwParams(p=args.p, n=args.n, epsilon=args.epsilon, tau=args.tau)
    return params, asdict(params)


def _apply_grid_step(args: argparse.Namespace) -> None:
    if getattr(args, "grid_step", None) is not None:
        if not 0.0 < args.grid_step < 1.0:
            raise InvalidParamsError("--grid-step must lie in (0, 1)", details={"grid_step": args.grid_step})
        Config.GRID_STEP = args.grid_step


def unit_grid(step: float) -> np.ndarray:
    """Interior points step, 2 step, ... of (0, 1)."""
    if not 0.0 < step < 1.0:
        raise InvalidParamsError("grid step must lie in (0, 1)", details={"step": step})
    count = int(math.floor(1.0 / step + 1e-9))
    grid = np.round(step * np.arange(1, count + 1), 12)
    return grid[grid < 1.0]


def read_z_scores(path: str, column: Optional[str] = None) -> np.ndarray:
    try:
        if column is None:
            frame = pd.read_csv(path, header=None, comment="#", skip_blank_lines=True)
            if frame.shape[1] != 1:
                raise InvalidParamsError("input has several columns; choose one with --column",
                                         details={"columns": int(frame.shape[1])})
            series = frame.iloc[:, 0]
        else:
            frame = pd.read_csv(path, comment="#")
            if column not in frame.columns:
                raise InvalidParamsError(f"column not found: {column}", details={"columns": list(frame.columns)})
            series = frame[column]
        values = pd.to_numeric(series, errors="raise").to_numpy(dtype=float)
    except (ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InvalidParamsError(f"cannot parse z-scores from {path}: {e}")
    except OSError as e:
        raise InvalidParamsError(f"cannot read {path}: {e}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hctlab",
        description="Higher Criticism thresholding for rare/weak feature selection",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {Config.VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_hct = sub.add_parser("hct", help="empirical HC threshold of a z-score file")
    p_hct.add_argument("--input", required=True, help="one z-score per line, or a CSV with --column")
    p_hct.add_argument("--column", help="CSV column holding the z-scores")
    p_hct.add_argument("--alpha0", type=float, default=Config.ALPHA0)

    p_ideal = sub.add_parser("ideal", help="ideal threshold and its proxy characteristics")
    _add_model_arguments(p_ideal)

    p_phase = sub.add_parser("phase", help="phase-diagram classification on a (beta, r) grid")
    p_phase.add_argument("--grid-step", type=float, default=0.01)

    p_boundary = sub.add_parser("boundary", help="finite-p classification boundaries")
    p_boundary.add_argument("--p", type=int, nargs="+", default=[3000, 30000, 300000])
    p_boundary.add_argument("--levels", type=float, nargs="+", default=[0.10, 0.40])
    p_boundary.add_argument("--beta-step", type=float, default=0.05)
    p_boundary.add_argument("--kind", choices=[k.value for k in ThresholdKind], default=ThresholdKind.CLIP.value)

    p_sim = sub.add_parser("simulate", help="Monte Carlo run of a threshold classifier")
    _add_model_arguments(p_sim)
    p_sim.add_argument("--selector", default="hct", help="hct[:alpha0] | ideal | fixed:T | fdrt:ALPHA | bonferroni")
    p_sim.add_argument("--alpha0", type=float, help="alpha0 of the hct selector")
    p_sim.add_argument("--alpha", type=float, help="level of the fdrt selector")
    p_sim.add_argument("--replicates", type=int, default=Config.REPLICATES)
    p_sim.add_argument("--test-size", type=int, default=Config.TEST_SIZE)
    p_sim.add_argument("--seed", type=int, default=Config.SEED)
    p_sim.add_argument("--zscore-mode", choices=[m.value for m in ZScoreMode], default=ZScoreMode.DIRECT.value)

    p_exp = sub.add_parser("exponents", help="separation exponent of each method against r")
    p_exp.add_argument("--beta", type=float, nargs="+", default=[0.5, 0.625])
    p_exp.add_argument("--grid-step", type=float, default=0.01)

    p_cmp = sub.add_parser("compare", help="ideal, HCT, FDRT and Bonferroni thresholds across tau")
    p_cmp.add_argument("--p", type=int, required=True)
    p_cmp.add_argument("--n", type=int, required=True)
    p_cmp.add_argument("--epsilon", type=float, required=True)
    p_cmp.add_argument("--kind", choices=[k.value for k in ThresholdKind], default=ThresholdKind.CLIP.value)
    p_cmp.add_argument("--grid-step", type=float)
    p_cmp.add_argument("--taus", type=float, nargs="+", help="tau values (default 1.0, 1.25, ..., 6.0)")
    p_cmp.add_argument("--alpha", type=float, default=0.05)

    for sub_parser in sub.choices.values():
        sub_parser.add_argument("--out", help="output directory for CSV/JSON files and manifest.json")
    return parser


# ==================== Commands ====================

class HctLabCli:
    """命令分发器; 每个命令返回 (summary, parameters, seed)"""

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = build_parser().parse_args(argv)
        trace_id = get_trace_id()
        logger.info(f"Command called: {args.command}", extra={"trace_id": trace_id, "command": args.command})
        output = OutputDir(args.out)

        saved_step = Config.GRID_STEP
        try:
            if args.command not in ("phase", "exponents"):
                _apply_grid_step(args)
            summary, parameters, seed = self._dispatch(args, output)
            output.finalize(RunManifest(command=args.command, parameters=parameters, seed=seed,
                                        version=Config.VERSION))
        except AppError as e:
            output.discard()
            logger.error(f"AppError in {args.command}: {e.message}",
                         extra={"trace_id": trace_id, "error_code": e.code.value})
            print(json.dumps(_json_safe(e.to_dict()), ensure_ascii=False), file=sys.stderr)
            return 2 if e.code is ErrorCode.INVALID_PARAMS else 1
        except Exception as e:
            output.discard()
            logger.exception(f"Unexpected error in {args.command}", extra={"trace_id": trace_id})
            print(json.dumps(InternalError(str(e)).to_dict(), ensure_ascii=False), file=sys.stderr)
            return 1
        finally:
            Config.GRID_STEP = saved_step

        print(json.dumps(_json_safe(summary), indent=2, ensure_ascii=False))
        return 0

    def _dispatch(self, args: argparse.Namespace, output: OutputDir):
        if args.command == "hct":
            return self.cmd_hct(args, output)
        elif args.command == "ideal":
            return self.cmd_ideal(args, output)
        elif args.command == "phase":
            return self.cmd_phase(args, output)
        elif args.command == "boundary":
            return self.cmd_boundary(args, output)
        elif args.command == "simulate":
            return self.cmd_simulate(args, output)
        elif args.command == "exponents":
            return self.cmd_exponents(args, output)
        elif args.command == "compare":
            return self.cmd_compare(args, output)
        raise InvalidParamsError(f"unknown command: {args.command}")

    def cmd_hct(self, args, output: OutputDir):
        z = read_z_scores(args.input, args.column)
        result = hct_empirical(z, args.alpha0)
        summary = result.summary()
        output.write_json("hct.json", summary)
        output.write_csv("trace.csv", result.trace_frame())
        parameters = {"input": str(args.input), "column": args.column, "alpha0": args.alpha0, "n_features": z.size}
        return summary, parameters, None

    def cmd_ideal(self, args, output: OutputDir):
        params, echo = resolve_params(args)
        kind = ThresholdKind(args.kind)
        summary = ideal_threshold(params, kind).to_dict()
        if params.epsilon > 0.0:
            summary["hct_threshold"] = hct_ideal(params.mixture())
        output.write_json("ideal.json", summary)
        output.write_csv("curves.csv", threshold_grid_table(params, kind))
        return summary, {**echo, "kind": kind.value, "grid_step": Config.GRID_STEP}, None

    def cmd_phase(self, args, output: OutputDir):
        grid = unit_grid(args.grid_step)
        table = phase_table(grid, grid)
        output.write_csv("phase.csv", table)
        summary = {"points": int(len(table)),
                   "region_counts": {k: int(v) for k, v in table["region"].value_counts().sort_index().items()}}
        return summary, {"grid_step": args.grid_step}, None

    def cmd_boundary(self, args, output: OutputDir):
        betas = unit_grid(args.beta_step)
        kind = ThresholdKind(args.kind)
        frames = [finite_p_boundary(p, args.levels, betas, kind=kind) for p in args.p]
        table = pd.concat(frames, ignore_index=True)
        output.write_csv("boundary.csv", table)
        summary = {"rows": int(len(table)), "out_of_range": int((table["status"] != "ok").sum())}
        parameters = {"p": list(args.p), "levels": list(args.levels), "beta_step": args.beta_step,
                      "kind": kind.value, "n_rule": "max(2, round(log(p) / 2))"}
        return summary, parameters, None

    def cmd_simulate(self, args, output: OutputDir):
        params, echo = resolve_params(args)
        selector = Selector.parse(args.selector)
        if args.alpha0 is not None and selector.kind is SelectorKind.HCT:
            selector = Selector(selector.kind, args.alpha0)
        if args.alpha is not None and selector.kind is SelectorKind.FDRT:
            selector = Selector(selector.kind, args.alpha)
        config = SimConfig(
            params=params,
            kind=ThresholdKind(args.kind),
            selector=selector,
            replicates=args.replicates,
            test_size=args.test_size,
            seed=args.seed,
            zscore_mode=ZScoreMode(args.zscore_mode),
        )
        outcome = run(config)
        summary = outcome.to_dict()
        output.write_csv("records.csv", outcome.records)
        output.write_json("summary.json", summary)
        return summary, {**echo, **config.to_dict(), "grid_step": Config.GRID_STEP}, args.seed

    def cmd_exponents(self, args, output: OutputDir):
        r_grid = unit_grid(args.grid_step)
        table = pd.concat([exponent_curves(beta, r_grid) for beta in args.beta], ignore_index=True)
        output.write_csv("exponents.csv", table)
        summary = {
            "betas": list(args.beta),
            "success_boundaries": {
                str(beta): {m.value: method_success_region(m, beta) for m in Method} for beta in args.beta
            },
        }
        return summary, {"beta": list(args.beta), "grid_step": args.grid_step}, None

    def cmd_compare(self, args, output: OutputDir):
        taus = args.taus if args.taus else list(np.round(np.arange(1.0, 6.0 + 1e-9, 0.25), 10))
        table = compare_methods(args.p, args.n, args.epsilon, taus, ThresholdKind(args.kind), args.alpha)
        output.write_csv("compare.csv", table)
        summary = {"rows": int(len(table)), "methods": sorted(table["method"].unique().tolist())}
        parameters = {"p": args.p, "n": args.n, "epsilon": args.epsilon, "taus": [float(t) for t in taus],
                      "alpha": args.alpha, "kind": args.kind, "grid_step": Config.GRID_STEP}
        return summary, parameters, None


def main(argv: Optional[List[str]] = None) -> int:
    return HctLabCli().run(argv)


if __name__ == "__main__":
    sys.exit(main())
