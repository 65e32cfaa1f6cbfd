"""
Command-line entry point.

    icu-sir zones --config configs/example1.json --out out/
    icu-sir lp-solve --config configs/lp_example1.json --seed 7

Exit codes: 0 success, 2 invalid input or config, 3 numerical failure.
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import ValidationError

from .config import ExperimentConfig, build_cost, load_config, parse_config, settings
from .costs import SamplingGrid, check_assumptions, check_gencond
from .dual_dp import PositivityGrid, two_stage_solve
from .errors import NumericalFailure, ValidationFailure
from .export import write_json, write_jsonl, write_rows, write_trajectory
from .params import EXAMPLE1, State
from .policy import greedy_simulate, hj_residual, is_differentiable, value_gradient, value_W
from .reachable import reachable_spec, reachable_zone_mask
from .zones import classify, curve_table, data_tips, psi

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


class Context:
    """What every command receives: the parsed config plus global flags."""

    def __init__(self, cfg: ExperimentConfig, config_path: Path, out: Path, seed: int, threads: int):
        self.cfg = cfg
        self.config_path = config_path
        self.out = out
        self.seed = seed
        self.threads = threads

    @property
    def params(self):
        return self.cfg.params

    def cost(self):
        return build_cost(self.cfg.cost, self.config_path.parent)

    def map(self, fn: Callable, items: Sequence) -> list:
        """Ordered map, fanned out over threads when asked."""
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]


# =============================================================================
# Commands
# =============================================================================

def cmd_zones(ctx: Context) -> list[Path]:
    p = ctx.params
    rows = curve_table(p, ctx.cfg.zones.n_points)
    fields = list(rows[0])
    tips = data_tips(p, ctx.cfg.population)
    logger.info(f"Zone tips: {tips['proportions']}")
    return [write_rows(ctx.out / "zone_curves.csv", rows, fields),
            write_json(ctx.out / "zone_tips.json", tips)]


def cmd_simulate(ctx: Context) -> list[Path]:
    p, c, block = ctx.params, ctx.cost(), ctx.cfg.simulate
    starts = [State(s, i) for s, i in block.starts]
    results = ctx.map(lambda x: greedy_simulate(p, x, c, block.horizon, block.step), starts)
    paths, summary = [], []
    for k, (x, res) in enumerate(zip(starts, results)):
        paths.append(write_trajectory(ctx.out / f"greedy_{k}.csv", res.trajectory))
        summary.append({"start": [x.s, x.i], "cost": res.cost, "tau_green": res.tau_green,
                        "segments": res.segments, "max_infection": res.trajectory.max_infection()})
    paths.append(write_json(ctx.out / "greedy_summary.json", summary))
    return paths


def _value_row(p, c, x: State, n_controls: int) -> Optional[dict]:
    zone = classify(p, x)
    if not zone.viable:
        return None
    row = {"s": x.s, "i": x.i, "zone": zone.value, "W": value_W(p, c, x),
           "dWds": float("nan"), "dWdi": float("nan"), "hj_residual": float("nan")}
    if is_differentiable(p, x):
        row["dWds"], row["dWdi"] = value_gradient(p, c, x)
        row["hj_residual"] = hj_residual(p, c, x, n_controls).max_residual
    return row


def cmd_value(ctx: Context) -> list[Path]:
    p, c, block = ctx.params, ctx.cost(), ctx.cfg.value
    s_axis = np.linspace(0.0, psi(p, 0.0), block.n_s + 1)[1:]
    i_axis = np.linspace(0.0, p.istar, block.n_i + 1)[1:]
    points = [State(float(s), float(i)) for s in s_axis for i in i_axis]
    rows = [r for r in ctx.map(lambda x: _value_row(p, c, x, block.hj_controls), points) if r]
    logger.info(f"Value grid: {len(rows)} yellow points of {len(points)}")
    fields = ("s", "i", "zone", "W", "dWds", "dWdi", "hj_residual")
    return [write_rows(ctx.out / "value_grid.csv", rows, fields)]


def sample_differentiability_points(p, n: int, seed: int) -> list[State]:
    """Uniform draws from the yellow zone, keeping points where W is differentiable."""
    rng = np.random.default_rng(seed)
    s_hi = psi(p, 0.0)
    out: list[State] = []
    while len(out) < n:
        s, i = rng.uniform(0.0, s_hi), rng.uniform(0.0, p.istar)
        x = State(float(s), float(i))
        if is_differentiable(p, x):
            out.append(x)
    return out


def cmd_verify_hj(ctx: Context) -> list[Path]:
    p, c, block = ctx.params, ctx.cost(), ctx.cfg.verify_hj
    points = sample_differentiability_points(p, block.samples, ctx.seed)
    res = ctx.map(lambda x: hj_residual(p, c, x, block.hj_controls), points)
    worst = int(np.argmax([r.max_residual for r in res]))
    nonzero = [(x, r.argmax_a) for x, r in zip(points, res) if r.argmax_a > 0]
    report = {
        "samples": len(points),
        "max_residual": res[worst].max_residual,
        "worst_point": [points[worst].s, points[worst].i],
        "tolerance": block.tolerance,
        "argmax_a_zero_everywhere": not nonzero,
        "nonzero_argmax_points": [[x.s, x.i, a] for x, a in nonzero[:20]],
        "passed": res[worst].max_residual <= block.tolerance and not nonzero,
    }
    level = "✅" if report["passed"] else "⚠️"
    logger.info(f"{level} HJ residual max {report['max_residual']:.3e} over {len(points)} points")
    return [write_json(ctx.out / "hj_report.json", report)]


def cmd_check_cost(ctx: Context) -> list[Path]:
    p, c, block = ctx.params, ctx.cost(), ctx.cfg.check_cost
    report = check_assumptions(c, p, SamplingGrid(block.n_s, block.n_i, block.n_a))
    gencond = None if c.control_independent else check_gencond(c, p)
    out = report.to_dict()
    out["gencond"] = gencond.to_dict() if gencond else None
    return [write_json(ctx.out / "cost_report.json", out)]


def cmd_lp_solve(ctx: Context) -> list[Path]:
    block = ctx.cfg.lp
    p = ctx.params.with_discount(block.q)
    n_s, n_i, n_a = block.grid
    result = two_stage_solve(
        p, ctx.cost(), State(*block.x0), block.r, block.T,
        max_iters=block.iters, gap_tol=block.gap, scenario_budget=block.scenario_budget,
        seed=ctx.seed, grid=PositivityGrid(n_s, n_i, n_a), depth=block.depth,
        step=block.step, threads=ctx.threads,
    )
    return [write_jsonl(ctx.out / "lp_iterations.jsonl", [r.to_dict() for r in result.records]),
            write_json(ctx.out / "cuts.json", result.cuts.to_dict())]


def cmd_reach(ctx: Context) -> list[Path]:
    block = ctx.cfg.reach
    spec = reachable_spec(ctx.params, State(*block.x0), block.T, block.n_points)
    meta = {"x0": list(block.x0), "T": block.T, "s_lower_limits": list(spec.s_lower_limits),
            "all_viable": bool(reachable_zone_mask(ctx.params, spec).all())}
    return [write_rows(ctx.out / "reachable.csv", spec.to_rows(), ("branch", "s", "i")),
            write_json(ctx.out / "reachable.json", meta)]


def cmd_serve(ctx: Context) -> list[Path]:
    import uvicorn

    logger.info(f"serving on {settings.host}:{settings.port}")
    uvicorn.run("src.icusir.api:app", host=settings.host, port=settings.port)
    return []


COMMANDS: dict[str, Callable[[Context], list[Path]]] = {
    "zones": cmd_zones,
    "simulate": cmd_simulate,
    "value": cmd_value,
    "verify-hj": cmd_verify_hj,
    "check-cost": cmd_check_cost,
    "lp-solve": cmd_lp_solve,
    "reach": cmd_reach,
    "serve": cmd_serve,
}

# Commands that run on the built-in reference setting when no config is given.
CONFIG_OPTIONAL = {"serve"}


# =============================================================================
# Entry point
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icu-sir", description="ICU-constrained SIR control toolkit")
    parser.add_argument("--config", type=Path, default=settings.default_config,
                        help="experiment config (JSON)")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--threads", type=int, default=settings.threads)
    parser.add_argument("--log-level", default=settings.log_level)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {name: sub.add_parser(name) for name in COMMANDS}

    lp = commands["lp-solve"]
    lp.add_argument("--r", type=int, help="degree parameter (polynomials of degree 2r)")
    lp.add_argument("--q", type=float, help="discount rate")
    lp.add_argument("--T", type=float, help="first-stage horizon")
    lp.add_argument("--x0", type=State.parse, help="start as s,i")
    lp.add_argument("--iters", type=int, help="iteration cap")
    lp.add_argument("--gap", type=float, help="stopping gap")

    reach = commands["reach"]
    reach.add_argument("--x0", type=State.parse, help="start as s,i")
    reach.add_argument("--T", type=float, help="horizon (omit for infinite)")
    return parser


BLOCK_FLAGS = {
    "lp-solve": ("lp", ("r", "q", "T", "x0", "iters", "gap")),
    "reach": ("reach", ("x0", "T")),
}


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Command flags win over the config block; the result is revalidated."""
    if args.command not in BLOCK_FLAGS:
        return cfg
    block_name, flags = BLOCK_FLAGS[args.command]
    updates = {}
    for flag in flags:
        value = getattr(args, flag, None)
        if value is not None:
            updates[flag] = value.as_tuple() if isinstance(value, State) else value
    if not updates:
        return cfg
    data = cfg.model_dump(by_alias=True)
    data[block_name].update(updates)
    return parse_config(data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logger.remove()
    logger.add(sys.stderr, level=args.log_level.upper())

    try:
        if args.config is None and args.command in CONFIG_OPTIONAL:
            cfg = ExperimentConfig(params=EXAMPLE1)
        elif args.config is None:
            raise ValidationFailure("--config is required (or set ICUSIR_DEFAULT_CONFIG)")
        else:
            cfg = apply_overrides(load_config(args.config), args)
        seed = cfg.seed if args.seed is None else args.seed
        out = args.out or Path(cfg.output_dir or settings.output_dir)
        ctx = Context(cfg, Path(args.config or "."), out, seed, max(1, args.threads))
        paths = COMMANDS[args.command](ctx)
    except (ValidationFailure, ValidationError) as exc:
        logger.error(f"❌ {exc}")
        return EXIT_INVALID
    except NumericalFailure as exc:
        logger.error(f"❌ numerical failure: {exc}")
        return EXIT_NUMERICAL

    for path in paths:
        logger.info(f"✅ wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
