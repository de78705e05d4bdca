"""Command-line front end.

Exit statuses: 0 success, 2 validation or usage error, 3 insufficient
Monte Carlo statistics.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Sequence

from . import keyrate, montecarlo, optimizer
from .model import ExperimentParams, FreeParams
from .optimizer import OptimizerConfig

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INSUFFICIENT = 3

COMMANDS = ("rate", "sweep", "optimize", "simulate", "equivalence", "bounds")
SWEEP_COLUMNS = ("distance_km", "t", "mu", "rate", "rate_unclamped", "eta_lim", "repeaterless")
BOUNDS_COLUMNS = ("distance_km", "eta_lim", "repeaterless")
DEFAULT_DISTANCES = "0:600:10"


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    experiment: ExperimentParams = field(default_factory=ExperimentParams)
    t: float = 0.5
    mu: float = 0.1
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    distances: list[float] | None = None
    n_slots: int = 1_000_000
    seed: int = 1
    workers: int | None = None
    out: str | None = None
    format: str | None = None
    transcript: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["optimizer"]["t_range"] = list(self.optimizer.t_range)
        d["optimizer"]["mu_range"] = list(self.optimizer.mu_range)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "experiment" in d:
            d["experiment"] = ExperimentParams(**d["experiment"])
        if "optimizer" in d:
            opt = dict(d["optimizer"])
            for key in ("t_range", "mu_range"):
                if key in opt:
                    opt[key] = tuple(opt[key])
            d["optimizer"] = OptimizerConfig(**opt)
        if d.get("distances") is not None:
            d["distances"] = [float(x) for x in d["distances"]]
        return cls(**d)

    def free_params(self) -> FreeParams:
        return FreeParams(self.t, self.mu)


# --- formatting ------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _clean(obj: Any) -> Any:
    """Round floats to 12 significant digits and map non-finite values to null."""
    if isinstance(obj, float):
        return float(_fmt(obj)) if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _json(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2) + "\n"


def _csv(columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def parse_distances(text: str) -> list[float]:
    """Parse ``start:stop:step`` (stop inclusive) or a comma-separated list."""
    text = text.strip()
    if not text:
        raise UsageError("empty distance list")
    if ":" in text:
        try:
            start, stop, step = (float(p) for p in text.split(":"))
        except ValueError as exc:
            raise UsageError(f"bad distance range {text!r}; expected start:stop:step") from exc
        if step <= 0:
            raise UsageError("distance step must be positive")
        n = math.floor((stop - start) / step + 1e-9)
        out = [start + i * step for i in range(n + 1)] if n >= 0 else []
    else:
        try:
            out = [float(p) for p in text.split(",") if p.strip()]
        except ValueError as exc:
            raise UsageError(f"bad distance list {text!r}") from exc
    if not out:
        raise UsageError(f"distance list {text!r} is empty")
    return out


# --- commands --------------------------------------------------------------


def cmd_rate(cfg: RunConfig) -> str:
    rb = keyrate.conference_key_rate(cfg.free_params(), cfg.experiment)
    return _json({
        "command": "rate",
        "distance_km": cfg.experiment.total_distance_km,
        "t": cfg.t,
        "mu": cfg.mu,
        "breakdown": rb.as_dict(),
    })


def _sweep_distances(cfg: RunConfig) -> list[float]:
    return cfg.distances if cfg.distances is not None else parse_distances(DEFAULT_DISTANCES)


def cmd_sweep(cfg: RunConfig) -> str:
    rows = optimizer.sweep(cfg.experiment, _sweep_distances(cfg), cfg.optimizer, workers=cfg.workers)
    table = [
        (r.distance_km, r.best_t, r.best_mu, r.rate, r.rate_unclamped, r.eta_lim, r.repeaterless)
        for r in rows
    ]
    if (cfg.format or "csv") == "json":
        return _json([dict(zip(SWEEP_COLUMNS, row)) for row in table])
    return _csv(SWEEP_COLUMNS, table)


def cmd_optimize(cfg: RunConfig) -> str:
    fp, rb = optimizer.optimize(cfg.experiment, cfg.optimizer)
    return _json({
        "command": "optimize",
        "distance_km": cfg.experiment.total_distance_km,
        "t": fp.send_probability,
        "mu": fp.intensity,
        "zero_rate": rb.rate == 0.0,
        "breakdown": rb.as_dict(),
    })


def cmd_bounds(cfg: RunConfig) -> str:
    distances = cfg.distances if cfg.distances is not None else [cfg.experiment.total_distance_km]
    rows = [keyrate.bounds(cfg.experiment.at_distance(d)) for d in distances]
    table = [(b.distance_km, b.eta_lim, b.repeaterless) for b in rows]
    if (cfg.format or "csv") == "json":
        return _json([dict(zip(BOUNDS_COLUMNS, row)) for row in table])
    return _csv(BOUNDS_COLUMNS, table)


def cmd_simulate(cfg: RunConfig) -> str:
    fp, ep = cfg.free_params(), cfg.experiment
    stats = montecarlo.run_protocol(fp, ep, cfg.n_slots, cfg.seed, workers=cfg.workers, transcript=cfg.transcript)
    empirical = montecarlo.empirical_breakdown(stats, ep)
    analytic = keyrate.conference_key_rate(fp, ep)
    comparisons = montecarlo.compare_to_model(stats)
    return _json({
        "command": "simulate",
        "n_slots": cfg.n_slots,
        "seed": cfg.seed,
        "distance_km": ep.total_distance_km,
        "t": fp.send_probability,
        "mu": fp.intensity,
        "comparisons": [asdict(c) for c in comparisons],
        "all_pass": all(c.passed for c in comparisons),
        "sent": dict(zip(montecarlo.CATEGORIES, stats.sent.tolist())),
        "clicked": dict(zip(montecarlo.CATEGORIES, stats.clicked.tolist())),
        "erroneous": dict(zip(montecarlo.CATEGORIES, stats.erroneous.tolist())),
        "dt_count": stats.dt_count,
        "df_count": stats.df_count,
        "evaluated_pairs": stats.evaluated_pairs,
        "dispositions": stats.disposition_counts(),
        "sifted_bits": int(stats.sifted_charlie.size),
        "empirical_rate": empirical.rate,
        "empirical_rate_unclamped": empirical.rate_unclamped,
        "analytic_rate": analytic.rate,
        "analytic_rate_unclamped": analytic.rate_unclamped,
    })


def cmd_equivalence(cfg: RunConfig) -> str:
    rec = montecarlo.folding_equivalence_stats(
        cfg.free_params(), cfg.experiment, cfg.n_slots, cfg.seed, workers=cfg.workers
    )
    if rec.cka.dt_count + rec.cka.df_count == 0 or rec.cow.dt_count + rec.cow.df_count == 0:
        raise montecarlo.InsufficientStatistics("no interference clicks on |a>|a> pairs")

    def summary(s: montecarlo.InterferenceSummary) -> dict[str, Any]:
        return {
            "evaluated_pairs": s.evaluated_pairs,
            "dt_count": s.dt_count,
            "df_count": s.df_count,
            "p_dt": s.p_dt,
            "p_df": s.p_df,
            "visibility": s.visibility.value,
            "visibility_stderr": s.visibility.stderr,
        }

    se = rec.combined_stderr
    z = rec.delta_visibility / se if se > 0 else (0.0 if rec.delta_visibility == 0 else math.inf)
    return _json({
        "command": "equivalence",
        "n_slots": cfg.n_slots,
        "seed": cfg.seed,
        "cka": summary(rec.cka),
        "cow": summary(rec.cow),
        "delta_p_dt": rec.delta_p_dt,
        "delta_p_df": rec.delta_p_df,
        "delta_visibility": rec.delta_visibility,
        "combined_stderr": se,
        "z": z,
        "pass": abs(z) <= 3.0,
    })


HANDLERS = {
    "rate": cmd_rate,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "equivalence": cmd_equivalence,
    "bounds": cmd_bounds,
}


# --- argument handling -----------------------------------------------------


def _pair(text: str) -> tuple[float, float]:
    lo, hi = (float(p) for p in text.split(":"))
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cowcka", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--dump-config", action="store_true", help="print the resolved config as JSON and exit")
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"))

    g = p.add_argument_group("experiment")
    g.add_argument("--distance", "--total-distance-km", dest="total_distance_km", type=float)
    g.add_argument("--detector-efficiency", type=float)
    g.add_argument("--dark-count-rate", type=float)
    g.add_argument("--attenuation", type=float)
    g.add_argument("--error-correction-efficiency", type=float)
    g.add_argument("--time-misalignment", type=float)
    g.add_argument("--ed-prime", "--interference-misalignment", dest="interference_misalignment", type=float)

    g = p.add_argument_group("protocol")
    g.add_argument("--t", type=float, help="send probability")
    g.add_argument("--mu", type=float, help="intensity of the non-vacuum pulse")

    g = p.add_argument_group("optimizer")
    g.add_argument("--distances", help="start:stop:step (inclusive) or comma list")
    g.add_argument("--population", type=int)
    g.add_argument("--generations", type=int)
    g.add_argument("--grid-resolution", type=int)
    g.add_argument("--t-range", type=_pair, help="lo:hi")
    g.add_argument("--mu-range", type=_pair, help="lo:hi")

    g = p.add_argument_group("simulation")
    g.add_argument("--n-slots", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--transcript", help="write one CSV row per simulated slot")
    return p


_EXPERIMENT_FLAGS = tuple(f.name for f in fields(ExperimentParams))
_OPTIMIZER_FLAGS = ("population", "generations", "grid_resolution", "t_range", "mu_range")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        with open(args.config) as fh:
            cfg = RunConfig.from_dict(json.load(fh))
    else:
        cfg = RunConfig()

    exp = {k: getattr(args, k) for k in _EXPERIMENT_FLAGS if getattr(args, k) is not None}
    if exp:
        cfg.experiment = replace(cfg.experiment, **exp)
    opt = {k: getattr(args, k) for k in _OPTIMIZER_FLAGS if getattr(args, k) is not None}
    if args.seed is not None:
        opt["seed"] = args.seed
    if opt:
        cfg.optimizer = replace(cfg.optimizer, **opt)
    for key in ("t", "mu", "n_slots", "seed", "workers", "out", "format", "transcript"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    if args.distances is not None:
        cfg.distances = parse_distances(args.distances)
    # validates t and mu early so every command fails the same way
    cfg.free_params()
    if cfg.workers is not None and cfg.workers < 1:
        raise UsageError("--workers must be >= 1")
    return cfg


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.dump_config:
            _emit(_json_exact(cfg.to_dict()), cfg.out)
            return EXIT_OK
        text = HANDLERS[args.command](cfg)
    except montecarlo.InsufficientStatistics as exc:
        print(f"cowcka: insufficient statistics: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (ValueError, TypeError, OSError) as exc:
        print(f"cowcka: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    _emit(text, cfg.out)
    return EXIT_OK


def _json_exact(obj: Any) -> str:
    # configs keep full precision so they re-parse to the identical RunConfig
    return json.dumps(obj, indent=2) + "\n"


if __name__ == "__main__":
    sys.exit(main())
