"""Command-line front end.

Every option is also a key of a flat ``key = value`` config file given
with ``--config``; flags override file values, and the effective
configuration is written to each output directory together with a run
manifest.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
failure of a whole stage.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .basis import ExpBasis
from .combine import combine, write_combined_json, write_curves_csv
from .design import one_factorization, validate_factorization
from .diagnose import gibbs_simulate, pearson_node_residuals, write_residuals_csv, write_trace_csv
from .errors import DataError, EmptySummaryError, ErgmError, NumericalError, ValidationError
from .glm import aggregate_estimates, fit_parametric_all, write_fits_csv, write_summary_csv
from .graph import UndirectedGraph, ego_net, read_edge_list, write_edge_list
from .npfit import FitConfig, NpModel, fit_np_all, read_models_json, write_models_json, write_tally_csv
from .npfit import tally as np_tally

logger = logging.getLogger("npergm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Option:
    key: str
    type: type
    default: object
    help: str


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


OPTIONS = [
    Option("input", str, None, "edge list file (two node ids per line, may be .gz)"),
    Option("n", int, None, "number of nodes (default: inferred from the edge list)"),
    Option("drop_node", str, "last", "how to make n even: last | random | none"),
    Option("seed", int, 0, "random seed (node dropping, simulation)"),
    Option("statistics", str, "edges,twostars,triangles", "model statistics (fixed)"),
    Option("glm_min_ones", int, 3, "skip GLM rounds with fewer edges"),
    Option("intercept_floor", float, -10.0, "exclude GLM fits with a lower intercept"),
    Option("min_ones", int, 10, "no non-parametric fit below this many edges"),
    Option("K", int, 20, "basis size"),
    Option("gamma_min", float, 0.0005, "smallest basis rate"),
    Option("gamma_max", float, 1.0, "largest basis rate"),
    Option("zero_threshold", float, 0.005, "sup-norm threshold for zeroing an effect"),
    Option("conv_tol", float, 1e-12, "convergence tolerance"),
    Option("t_max", int, 20, "Newton iterations per penalty value"),
    Option("s_max", int, 100, "penalty updates"),
    Option("lambda_init", float, 1.0, "starting penalty"),
    Option("lambda_max", float, 1e10, "penalty treated as infinite"),
    Option("grid", int, 200, "grid points per effect for combining"),
    Option("residual_model", str, "median", "model for residuals: median | mean"),
    Option("workers", int, None, "worker processes (default: all cores)"),
    Option("output_dir", str, "out", "output directory"),
    Option("check", _bool, False, "factorize: validate the factorization"),
    Option("models", str, None, "combine: per-round model JSON"),
    Option("combined", str, None, "residuals/simulate: combined JSON"),
    Option("ego", int, None, "ego-net: ego node id"),
    Option("theta", str, None, "simulate: comma-separated (edges, twostars, triangles)"),
    Option("sweeps", int, 500, "simulate: Gibbs sweeps"),
    Option("init_density", float, 0.5, "simulate: density of the random start"),
]
OPTION_BY_KEY = {o.key: o for o in OPTIONS}

COMMANDS = {
    "factorize": ("n", "check"),
    "fit-glm": ("input", "n", "drop_node", "seed", "glm_min_ones", "intercept_floor"),
    "fit-np": ("input", "n", "drop_node", "seed", "min_ones", "K", "gamma_min", "gamma_max",
               "zero_threshold", "conv_tol", "t_max", "s_max", "lambda_init", "lambda_max"),
    "combine": ("models", "K", "gamma_min", "gamma_max", "grid"),
    "residuals": ("input", "n", "combined", "residual_model"),
    "simulate": ("n", "seed", "theta", "combined", "residual_model", "sweeps", "init_density"),
    "ego-net": ("input", "ego"),
}
# pipeline takes the union of the stages it runs
COMMANDS["pipeline"] = tuple(dict.fromkeys(
    COMMANDS["fit-glm"] + COMMANDS["fit-np"] + ("grid", "residual_model")))


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        k = k.replace("-", "_")
        if k not in OPTION_BY_KEY:
            raise UsageError(f"{path}:{lineno}: unknown key {k!r}")
        out[k] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="npergm", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, keys in COMMANDS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("-v", "--verbose", action="store_true")
        for o in OPTIONS:
            if o.key not in keys and o.key not in ("workers", "output_dir"):
                continue
            flag = "--" + o.key.replace("_", "-")
            if o.type is _bool:
                p.add_argument(flag, dest=o.key, nargs="?", const="true", default=None, help=o.help)
            else:
                p.add_argument(flag, dest=o.key, default=None, help=f"{o.help} [{o.default}]")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then flags."""
    raw = {o.key: o.default for o in OPTIONS}
    if args.config:
        raw.update(read_config_file(args.config))
    for o in OPTIONS:
        v = getattr(args, o.key, None)
        if v is not None:
            raw[o.key] = v
    cfg = {}
    for k, v in raw.items():
        o = OPTION_BY_KEY[k]
        if v is None or v == "":
            cfg[k] = None
            continue
        try:
            cfg[k] = o.type(v)
        except ValueError:
            raise UsageError(f"invalid value for {k}: {v!r}") from None
    if cfg["drop_node"] not in ("last", "random", "none"):
        raise UsageError("drop_node must be last, random or none")
    if cfg["residual_model"] not in ("median", "mean"):
        raise UsageError("residual_model must be median or mean")
    if cfg["statistics"] != "edges,twostars,triangles":
        raise UsageError("only the statistics edges,twostars,triangles are supported")
    return cfg


def fit_config(cfg: dict) -> FitConfig:
    return FitConfig(
        K=cfg["K"], gamma_min=cfg["gamma_min"], gamma_max=cfg["gamma_max"],
        min_ones=cfg["min_ones"], zero_threshold=cfg["zero_threshold"], conv_tol=cfg["conv_tol"],
        t_max=cfg["t_max"], s_max=cfg["s_max"], lambda_init=cfg["lambda_init"],
        lambda_max=cfg["lambda_max"],
    )


class Run:
    """Output directory with provenance files."""

    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg["output_dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.t0 = time.perf_counter()
        self.artifacts: list[str] = []
        self.notes: dict = {}

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def finish(self) -> None:
        with open(self.out / "config.txt", "w", encoding="utf-8") as fh:
            for k in sorted(self.cfg):
                v = self.cfg[k]
                fh.write(f"{k} = {'' if v is None else v}\n")
        import numba
        import scipy

        manifest = {
            "command": self.command,
            "config": self.cfg,
            "versions": {
                "npergm": __version__, "python": platform.python_version(),
                "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__,
            },
            "artifacts": sorted(set(self.artifacts)),
            "notes": self.notes,
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        with open(self.out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, default=str)


# stages


def load_graph(cfg: dict, require_even: bool = True) -> UndirectedGraph:
    if not cfg["input"]:
        raise UsageError("--input is required")
    g = read_edge_list(cfg["input"], n=cfg["n"], relabel=cfg["n"] is None)
    logger.info("loaded %d nodes, %d edges", g.n, g.n_edges)
    if require_even and g.n % 2:
        policy = cfg["drop_node"]
        if policy == "none":
            raise ValidationError(f"n={g.n} is odd and drop_node = none")
        node = g.n - 1 if policy == "last" else int(np.random.default_rng(cfg["seed"]).integers(g.n))
        label = node if g.labels is None else int(g.labels[node])
        logger.info("n is odd; dropping node %d", label)
        g = g.drop_node(node)
    return g


def stage_factorize(run: Run) -> int:
    n = run.cfg["n"]
    if n is None:
        raise UsageError("--n is required")
    f = one_factorization(n)
    with open(run.path("factorization.txt"), "w", encoding="utf-8") as fh:
        for m in f:
            line = f"round {m.round}: " + " ".join(f"({a},{b})" for a, b in m.pairs)
            fh.write(line + "\n")
            if n <= 50:
                print(line)
    print(f"{len(f)} rounds")
    if run.cfg["check"]:
        rep = validate_factorization(f)
        print(f"validation: {'ok' if rep else rep.message}")
        if not rep:
            return EXIT_NUMERIC
    return EXIT_OK


def stage_fit_glm(run: Run, g: UndirectedGraph) -> None:
    cfg = run.cfg
    fits = fit_parametric_all(g, min_ones=cfg["glm_min_ones"], workers=cfg["workers"])
    write_fits_csv(fits, run.path("glm_fits.csv"))
    try:
        summ = aggregate_estimates(fits, intercept_floor=cfg["intercept_floor"])
    except EmptySummaryError:
        logger.warning("no usable GLM fits; writing an empty summary")
        summ = None
    write_summary_csv(summ, run.path("glm_summary.csv"))
    if summ is not None:
        run.notes["glm"] = {
            "used": summ.n_used, "skipped": summ.n_skipped,
            "excluded_extreme": summ.n_excluded_extreme, "nonconverged": summ.n_nonconverged,
        }
        for row in summ.rows():
            print(f"{row['parameter']:>10}  mean {row['mean']: .4f}  median {row['median']: .4f}"
                  f"  5% {row['q05']: .4f}  95% {row['q95']: .4f}")


def stage_fit_np(run: Run, g: UndirectedGraph) -> list[NpModel]:
    models, counts = fit_np_all(g, fit_config(run.cfg), workers=run.cfg["workers"])
    write_models_json(models, run.path("np_models.json"))
    write_tally_csv(counts, run.path("np_tally.csv"))
    run.notes["np_tally"] = counts
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return models


def stage_combine(run: Run, models: list[NpModel]) -> bool:
    basis = fit_config(run.cfg).basis()
    try:
        c = combine(models, basis, run.cfg["grid"])
    except (EmptySummaryError, DataError) as exc:
        logger.error("cannot combine: %s", exc)
        write_curves_csv(None, run.path("curves.csv"))
        return False
    write_combined_json(c, basis, run.path("combined.json"))
    write_curves_csv(c, run.path("curves.csv"))
    run.notes["median_round"] = c.median.round
    print(f"median round {c.median.round} ({c.median.model.model_label}), "
          f"{c.family.m} curves combined")
    return True


def load_combined(path: str | Path, which: str) -> tuple[NpModel, ExpBasis]:
    try:
        rec = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read combined output {path}: {exc}") from None
    key = "median_model" if which == "median" else "mean_model"
    return NpModel.from_record(rec[key]), ExpBasis.from_dict(rec["basis"])


def stage_residuals(run: Run, g: UndirectedGraph, combined: str | Path) -> None:
    model, basis = load_combined(combined, run.cfg["residual_model"])
    r = pearson_node_residuals(g, model, basis, source=model.round or run.cfg["residual_model"])
    write_residuals_csv(r, run.path("residuals.csv"))
    top = r.top(min(10, g.n))
    run.notes["top_residual_nodes"] = [int(v) for v in top]
    print("largest average residuals: " + " ".join(str(int(v)) for v in top))


def stage_simulate(run: Run) -> None:
    cfg = run.cfg
    if cfg["n"] is None:
        raise UsageError("--n is required")
    if cfg["theta"]:
        try:
            params = [float(v) for v in cfg["theta"].split(",")]
        except ValueError:
            raise UsageError("--theta must be comma-separated numbers") from None
        if len(params) != 3:
            raise UsageError("--theta needs three values")
        basis = None
    elif cfg["combined"]:
        params, basis = load_combined(cfg["combined"], cfg["residual_model"])
    else:
        raise UsageError("simulate needs --theta or --combined")
    t = gibbs_simulate(params, cfg["n"], cfg["sweeps"], cfg["seed"], basis=basis,
                       init=cfg["init_density"])
    write_trace_csv(t, run.path("trace.csv"))
    write_edge_list(t.final_graph, run.path("final_graph.txt"))
    run.notes["degenerate"] = t.degenerate
    print(f"final density {t.density_path[-1]:.4f}; degenerate: {t.degenerate}")


def stage_ego_net(run: Run) -> None:
    cfg = run.cfg
    if cfg["ego"] is None:
        raise UsageError("--ego is required")
    g = read_edge_list(cfg["input"], relabel=True)
    hits = np.flatnonzero(g.labels == cfg["ego"])
    if not hits.size:
        raise ValidationError(f"ego {cfg['ego']} is not in the graph")
    sub, _ = ego_net(g, int(hits[0]))
    name = f"ego_{cfg['ego']}.txt"
    with open(run.path(name), "w", encoding="utf-8") as fh:
        labels = sub.labels if sub.labels is not None else np.arange(sub.n)
        for i, j in sub.edge_array():
            fh.write(f"{labels[i]} {labels[j]}\n")
    print(f"ego-net of {cfg['ego']}: {sub.n} nodes, {sub.n_edges} edges -> {run.out / name}")


def dispatch(command: str, cfg: dict) -> int:
    run = Run(command, cfg)
    status = EXIT_OK
    try:
        if command == "factorize":
            status = stage_factorize(run)
        elif command == "fit-glm":
            stage_fit_glm(run, load_graph(cfg))
        elif command == "fit-np":
            stage_fit_np(run, load_graph(cfg))
        elif command == "combine":
            if not cfg["models"]:
                raise UsageError("--models is required")
            try:
                models = read_models_json(cfg["models"])
            except (OSError, ValueError, KeyError) as exc:
                raise DataError(f"cannot read models {cfg['models']}: {exc}") from None
            if not stage_combine(run, models):
                status = EXIT_NUMERIC
        elif command == "residuals":
            if not cfg["combined"]:
                raise UsageError("--combined is required")
            stage_residuals(run, load_graph(cfg, require_even=False), cfg["combined"])
        elif command == "simulate":
            stage_simulate(run)
        elif command == "ego-net":
            if not cfg["input"]:
                raise UsageError("--input is required")
            stage_ego_net(run)
        elif command == "pipeline":
            full = load_graph(cfg, require_even=False)
            g = load_graph(cfg)
            stage_fit_glm(run, g)
            models = stage_fit_np(run, g)
            if stage_combine(run, models):
                stage_residuals(run, full, run.out / "combined.json")
            else:
                status = EXIT_NUMERIC
    finally:
        run.finish()
    return status


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        return dispatch(args.command, cfg)
    except UsageError as exc:
        print(f"npergm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"npergm {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"npergm {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ErgmError as exc:
        print(f"npergm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
