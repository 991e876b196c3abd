"""Command-line front end: ``finsler-myers <command> CONFIG [--out-dir DIR] [--seed N]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 domain or
atlas escape. Failures print one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .errors import AtlasCoverageError, DomainError, NumericalError
from .geodesic import integrate_geodesic, parallel_frame
from .metric import eval_F
from .myers import (
    BoundParams,
    bound_table,
    default_directions,
    myers_csv,
    myers_json,
    myers_verify,
    probe_csv,
    theoremB_probe,
)
from .variational import first_conjugate_point, sine_trial_terms

COMMANDS = ("geodesic", "conjugate", "index-sweep", "myers", "theorem-b", "bounds")
EXIT_CONFIG, EXIT_NUMERICAL, EXIT_DOMAIN = 2, 3, 4


class Context:
    def __init__(self, cfg: ExperimentConfig, out_dir: str):
        self.cfg = cfg
        self.out_dir = out_dir
        self.metric = cfg.build_metric()
        self.policy = cfg.policy()
        self.run = cfg.section("run")
        self.digest = cfg.digest()

    def footer(self, extra=()) -> str:
        lines = [f"# {k}={v}" for k, v in extra]
        lines += [f"# config_sha256={self.digest}", f"# version=finsler_myers {__version__}"]
        return "\n".join(lines) + "\n"

    def write(self, name: str, body: str) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(body)
        return path

    def start(self):
        n = self.metric.dim
        chart = self.run["chart"]
        x0 = np.zeros(n) if self.run["x0"] is None else np.asarray(self.run["x0"], float)
        y0 = np.eye(n)[0] if self.run["y0"] is None else np.asarray(self.run["y0"], float)
        speed = eval_F(self.metric, chart, x0, y0)
        if speed <= 0:
            raise ConfigError("[run].y0 must be a nonzero vector")
        return chart, x0, y0 / speed

    def params(self) -> BoundParams:
        b = self.cfg.section("bounds")
        try:
            return BoundParams(float(b["a"]), self.metric.dim if b["n"] is None else b["n"],
                               float(b["Lambda"]), b["epsilon"])
        except DomainError as err:
            raise ConfigError(f"[bounds]: {err}") from None

    def directions(self):
        chart, x0, _ = self.start()
        if self.cfg.run.get("y0") is not None and self.run["directions"] == 1:
            return chart, x0, np.array([self.start()[2]])
        seed = self.cfg.section("output")["seed"]
        return chart, x0, default_directions(self.metric, chart, x0, self.run["directions"], seed)


def cmd_geodesic(ctx: Context) -> list[str]:
    chart, x0, y0 = ctx.start()
    traj = integrate_geodesic(ctx.metric, chart, x0, y0, ctx.run["L"], h=ctx.run["h"], policy=ctx.policy)
    buf = io.StringIO()
    traj.to_csv(buf)
    return [ctx.write("geodesic.csv", buf.getvalue() + ctx.footer())]


def cmd_conjugate(ctx: Context) -> list[str]:
    chart, x0, y0 = ctx.start()
    traj = integrate_geodesic(ctx.metric, chart, x0, y0, ctx.run["L"], h=ctx.run["h"], policy=ctx.policy)
    rep = first_conjugate_point(traj, ctx.policy)
    doc = {"metric": dict(ctx.metric.spec), "x0": x0.tolist(), "y0": y0.tolist(), **rep.to_dict(),
           "config_sha256": ctx.digest, "version": __version__}
    return [ctx.write("conjugate.json", json.dumps(doc, indent=2) + "\n")]


def _r_grid(sec) -> np.ndarray:
    k = int(np.floor((sec["r_max"] - sec["r_min"]) / sec["r_step"] + 1e-9))
    return np.round(sec["r_min"] + sec["r_step"] * np.arange(k + 1), 12)


def cmd_index_sweep(ctx: Context) -> list[str]:
    chart, x0, y0 = ctx.start()
    rs = _r_grid(ctx.cfg.section("sweep"))
    traj = integrate_geodesic(ctx.metric, chart, x0, y0, float(rs[-1]), h=ctx.run["h"], nodes=tuple(rs),
                              policy=ctx.policy)
    frame = parallel_frame(traj, ctx.policy)
    p = ctx.params()
    bounds = dict(bound_table(p))
    n = ctx.metric.dim
    buf = io.StringIO()
    header = ["r", "sum_I", "ricci_formula", "discrepancy", "ric_integral"]
    header += [f"I_{a + 1}" for a in range(n - 1)] + ["bound_classical", "bound_theoremA"]
    buf.write(",".join(header) + "\n")
    worst = 0.0
    bA = bounds["theoremA_eps_minus" if p.epsilon == -1 else "theoremA_eps_plus"]
    for r in rs:
        t = sine_trial_terms(frame, float(r), ctx.policy)
        worst = max(worst, t.discrepancy)
        row = [t.r, t.direct, t.formula, t.discrepancy, t.ric_integral, *t.per_alpha, bounds["classical"], bA]
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return [ctx.write("index_sweep.csv", buf.getvalue() + ctx.footer([("max_discrepancy", repr(worst))]))]


def cmd_myers(ctx: Context) -> list[str]:
    chart, x0, dirs = ctx.directions()
    p = ctx.params()
    reps = myers_verify(ctx.metric, chart, x0, dirs, p, ctx.cfg.section("bounds")["L_max"], h=ctx.run["h"],
                        workers=ctx.run["workers"], policy=ctx.policy)
    doc = json.loads(myers_json(ctx.metric, p, reps, ctx.cfg.section("output")["include_samples"]))
    doc["config_sha256"] = ctx.digest
    doc["version"] = __version__
    counts = {}
    for r in reps:
        counts[r.verdict] = counts.get(r.verdict, 0) + 1
    extra = [("verdicts", json.dumps(counts, sort_keys=True, separators=(",", ":")))]
    return [
        ctx.write("myers.json", json.dumps(doc, indent=2) + "\n"),
        ctx.write("myers.csv", myers_csv(reps) + ctx.footer(extra)),
    ]


def cmd_theorem_b(ctx: Context) -> list[str]:
    chart, x0, dirs = ctx.directions()
    tb = ctx.cfg.section("theorem_b")
    reps = theoremB_probe(ctx.metric, chart, x0, dirs, tb["r_max"], tb["b"], tb["r_step"], h=ctx.run["h"],
                          workers=ctx.run["workers"], policy=ctx.policy)
    return [
        ctx.write("theorem_b.csv", probe_csv(reps) + ctx.footer()),
        ctx.write("theorem_b_summary.csv", probe_csv(reps, rows=False) + ctx.footer()),
    ]


def cmd_bounds(ctx: Context) -> list[str]:
    p = ctx.params()
    rows = bound_table(p)
    table = "bound,value\n" + "".join(f"{k},{v!r}\n" for k, v in rows)
    sys.stdout.write(table)
    return [ctx.write("bounds.csv", table + ctx.footer([(k, v) for k, v in p.to_dict().items()]))]


HANDLERS = {
    "geodesic": cmd_geodesic,
    "conjugate": cmd_conjugate,
    "index-sweep": cmd_index_sweep,
    "myers": cmd_myers,
    "theorem-b": cmd_theorem_b,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="finsler-myers", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"finsler_myers {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="TOML experiment config")
        sp.add_argument("--out-dir", help="override [output].dir")
        sp.add_argument("--seed", type=int, help="override [output].seed")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return ap


def _fail(code: int, err: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(err).__name__, "message": str(err), "exit": code}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg.output["seed"] = args.seed
        out_dir = args.out_dir or cfg.section("output")["dir"]
        ctx = Context(cfg, out_dir)
        paths = HANDLERS[args.command](ctx)
    except ConfigError as err:
        return _fail(EXIT_CONFIG, err)
    except NumericalError as err:
        return _fail(EXIT_NUMERICAL, err)
    except (DomainError, AtlasCoverageError) as err:
        return _fail(EXIT_DOMAIN, err)
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
