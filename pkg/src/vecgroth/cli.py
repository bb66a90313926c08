"""Command-line experiment driver.

Settings come from an optional JSON file (``--config``) overlaid by flags.
Tables go to CSV (stdout or ``--out``); with ``--out`` a JSON sidecar holds
the resolved configuration and wall-clock timings, which are kept out of the
CSV so that repeated runs produce identical bytes.
"""

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__, asymptotics, linalg, solvers, verify
from .model import NumericError, sample_disorder
from .parisi import functional
from .parisi.types import ParisiParams, QuadratureSpec

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

COLUMNS = ("command", "row", "n", "p", "kappa", "t", "beta", "replica", "value", "stderr",
           "aux_name", "aux_value", "converged", "version")


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    command: str
    action: str = ""
    seed: int = 0
    workers: int = 1
    out: str = ""
    n_grid: list = field(default_factory=lambda: [64])
    p: list = field(default_factory=lambda: [3.0])
    kappa: list = field(default_factory=lambda: [1])
    t_grid: list = field(default_factory=lambda: [1.0])
    replicas: int = 4
    restarts: int = 8
    r_max: int = 3
    beta: float = 0.0
    quad: str = "grid"
    samples: int = 100_000
    d: object = "identity*1.0"
    params: str = ""
    suite: str = "all"

    def validate(self):
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigError("workers", "must be at least 1")
        if not self.n_grid or any(int(n) != n or n < 1 for n in self.n_grid):
            raise ConfigError("n_grid", "must list positive integers")
        if not self.p or any(not math.isfinite(p) or p < 1 for p in self.p):
            raise ConfigError("p", "must list values >= 1")
        if not self.kappa or any(int(k) != k or k < 1 for k in self.kappa):
            raise ConfigError("kappa", "must list positive integers")
        if not self.t_grid or any(t <= 0 for t in self.t_grid):
            raise ConfigError("t_grid", "must list positive values")
        if self.replicas < 1:
            raise ConfigError("replicas", "must be at least 1")
        if self.restarts < 0:
            raise ConfigError("restarts", "must be non-negative")
        if self.r_max < 1:
            raise ConfigError("r_max", "must be at least 1")
        if self.beta < 0:
            raise ConfigError("beta", "must be non-negative (0 means zero temperature)")
        if self.quad not in ("grid", "mc"):
            raise ConfigError("quad", "must be 'grid' or 'mc'")
        if self.samples < 1:
            raise ConfigError("samples", "must be positive")
        self.n_grid = [int(n) for n in self.n_grid]
        self.kappa = [int(k) for k in self.kappa]
        return self

    def d_matrix(self, kappa):
        """Parse ``d`` as 'identity*scale' or a nested list."""
        spec = self.d
        if isinstance(spec, str):
            text = spec.strip()
            if text.startswith("identity"):
                scale = 1.0
                if "*" in text:
                    try:
                        scale = float(text.split("*", 1)[1])
                    except ValueError:
                        raise ConfigError("d", f"bad scale in {spec!r}") from None
                if scale < 0:
                    raise ConfigError("d", "scale must be non-negative")
                return scale * np.eye(kappa)
            try:
                spec = json.loads(text)
            except json.JSONDecodeError:
                raise ConfigError("d", f"cannot parse {spec!r}") from None
        try:
            mat = linalg.as_sym(spec)
        except (linalg.DomainError, ValueError) as exc:
            raise ConfigError("d", str(exc)) from None
        if mat.shape != (kappa, kappa):
            raise ConfigError("d", f"expected a {kappa}x{kappa} matrix")
        if not linalg.is_gram(mat):
            raise ConfigError("d", "matrix is not positive semidefinite")
        return mat


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    w.writerow(COLUMNS)
    for rec in records:
        w.writerow([_fmt(rec.get(c)) for c in COLUMNS])
    return buf.getvalue()


def parse_csv(text):
    """Read records written by ``to_csv`` back into typed dictionaries."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        rec = {}
        for key in COLUMNS:
            raw = row[key]
            if key in ("n", "kappa", "replica"):
                rec[key] = int(raw) if raw else None
            elif key in ("p", "t", "beta", "value", "stderr", "aux_value"):
                rec[key] = float(raw) if raw else None
            elif key == "converged":
                rec[key] = {"true": True, "false": False}.get(raw)
            else:
                rec[key] = raw
        out.append(rec)
    return out


def _record(cfg, **kw):
    rec = {c: None for c in COLUMNS}
    rec.update(command=cfg.command, version=__version__)
    rec.update(kw)
    return rec


def _pool_map(fn, tasks, workers):
    """Map in task order; results do not depend on the worker count."""
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def _mean_stderr(vals):
    arr = np.asarray(vals, dtype=float)
    if arr.size < 2:
        return float(arr.mean()), float("nan")
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def _aggregate(cfg, groups, aux_name=None):
    rows = []
    for key, items in groups.items():
        mean, se = _mean_stderr([it["value"] for it in items])
        aux = [it["aux_value"] for it in items if it["aux_value"] is not None]
        rows.append(_record(cfg, row="aggregate", n=key[0], p=key[1], kappa=key[2], t=key[3],
                            value=mean, stderr=se, aux_name=aux_name,
                            aux_value=_mean_stderr(aux)[0] if aux else None,
                            converged=all(it["converged"] for it in items)))
    return rows


# ground state


def scaled_ground_state(gp, n, p):
    """GP under the N-scaling of its regime (the GSE itself when p > 2)."""
    kind = asymptotics.regime(p)
    if kind == "1<p<2":
        return gp * n ** (-1.0 / asymptotics.conjugate_exponent(p))
    if kind == "p=2":
        return gp / math.sqrt(n)
    if kind == "p=1":
        return gp / math.sqrt(math.log(n)) if n > 1 else float("nan")
    return gp * n ** (2.0 / p - 1.5)


def _ground_state_task(task):
    seed, n, p, kappa, replica, restarts = task
    g = sample_disorder(seed, n, replica).g
    res = solvers.maximize_sphere(g, p, kappa, solvers.SolverConfig(restarts=restarts, seed=seed))
    return res.value, scaled_ground_state(res.value, n, p), res.converged


def cmd_ground_state(cfg):
    tasks = [(cfg.seed, n, p, k, rep, cfg.restarts)
             for n in cfg.n_grid for p in cfg.p for k in cfg.kappa for rep in range(cfg.replicas)]
    results = _pool_map(_ground_state_task, tasks, cfg.workers)
    rows, groups = [], {}
    for (seed, n, p, k, rep, _), (gp, scaled, conv) in zip(tasks, results):
        rec = _record(cfg, row="replica", n=n, p=p, kappa=k, replica=rep, value=gp,
                      aux_name="scaled", aux_value=scaled, converged=conv)
        rows.append(rec)
        groups.setdefault((n, p, k, None), []).append(rec)
    return rows + _aggregate(cfg, groups, "scaled")


# Lagrangian


def _lagrangian_task(task):
    seed, n, p, kappa, t, replica, restarts, d = task
    g = sample_disorder(seed, n, replica).g
    scfg = solvers.SolverConfig(restarts=restarts, seed=seed)
    if d is not None:
        res = solvers.constrained_lagrangian(g, p, t, d, scfg)
        return res.value, None, res.converged
    rep = solvers.derivative_relation_check(g, p, t, kappa, scfg)
    return rep.value, rep.transform, bool(rep.residual <= 1e-3)


def cmd_lagrangian(cfg, constrained=False):
    tasks = []
    for n in cfg.n_grid:
        for p in cfg.p:
            if p <= 2:
                raise ConfigError("p", "the Lagrangian needs p > 2")
            for k in cfg.kappa:
                d = cfg.d_matrix(k) if constrained else None
                for t in cfg.t_grid:
                    for rep in range(cfg.replicas):
                        tasks.append((cfg.seed, n, p, k, t, rep, cfg.restarts, d))
    results = _pool_map(_lagrangian_task, tasks, cfg.workers)
    rows, groups = [], {}
    aux_name = None if constrained else "gse_transform"
    for task, (val, transform, conv) in zip(tasks, results):
        _, n, p, k, t, rep, _, _ = task
        rec = _record(cfg, row="replica", n=n, p=p, kappa=k, t=t, replica=rep, value=val,
                      aux_name=aux_name, aux_value=transform, converged=conv)
        rows.append(rec)
        groups.setdefault((n, p, k, t), []).append(rec)
    return rows + _aggregate(cfg, groups, aux_name)


# Parisi


def _quad(cfg):
    return QuadratureSpec(mode=cfg.quad, samples=cfg.samples, seed=cfg.seed)


def cmd_parisi(cfg):
    beta = cfg.beta or None
    if len(cfg.p) != 1 or len(cfg.t_grid) != 1:
        raise ConfigError("p", "parisi runs take a single p and a single t")
    p, t = cfg.p[0], cfg.t_grid[0]
    if p <= 2:
        raise ConfigError("p", "the Parisi functional needs p > 2")
    if cfg.action == "eval":
        if not cfg.params:
            raise ConfigError("params", "eval needs --params PATH")
        try:
            with open(cfg.params) as fh:
                params = ParisiParams.from_json(fh.read())
        except OSError as exc:
            raise ConfigError("params", str(exc)) from None
        except (ValueError, KeyError) as exc:
            raise ConfigError("params", f"invalid parameter document: {exc}") from None
        val = functional.evaluate(params, p, t, beta=beta, quad=_quad(cfg))
        return [_record(cfg, row="eval", kappa=params.path.kappa, p=p, t=t, beta=beta, value=val,
                        aux_name="r", aux_value=float(params.path.r), converged=True)], None
    kappa = cfg.kappa[0]
    d = cfg.d_matrix(kappa)
    mode = "beta" if beta else "inf"
    rows, best = [], None
    for r in range(1, cfg.r_max + 1):
        res = functional.minimize_parisi(d, p, t, r, mode=mode, beta=beta, quad=_quad(cfg),
                                         seed=cfg.seed)
        rows.append(_record(cfg, row="min", kappa=kappa, p=p, t=t, beta=beta, value=res.value,
                            aux_name="r", aux_value=float(r), converged=res.converged))
        if best is None or res.value < best.value:
            best = res
    return rows, best.params


# asymptotics


def cmd_asymptotics(cfg):
    rows = []
    for p in cfg.p:
        lim = asymptotics.describe_regime(p)
        const = lim.constant if isinstance(lim.constant, float) else None
        rows.append(_record(cfg, row=lim.regime, p=p, value=const,
                            aux_name=f"scaling {lim.scaling_exponent}", converged=True))
    for n in cfg.n_grid:
        rows.append(_record(cfg, row="goe_edge", n=n, value=asymptotics.goe_edge_reference(n),
                            converged=True))
    return rows


# entry point


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with settings; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="CSV path; a JSON sidecar is written next to it")
    common.add_argument("--n-grid", type=int, nargs="+", dest="n_grid")
    common.add_argument("--p", type=float, nargs="+")
    common.add_argument("--kappa", type=int, nargs="+")
    common.add_argument("--t-grid", type=float, nargs="+", dest="t_grid")
    common.add_argument("--replicas", type=int)
    common.add_argument("--restarts", type=int)
    common.add_argument("--r-max", type=int, dest="r_max")
    common.add_argument("--beta", type=float, help="inverse temperature; omit for zero temperature")
    common.add_argument("--quad", choices=("grid", "mc"))
    common.add_argument("--samples", type=int)
    common.add_argument("--d", help="self-overlap: 'identity*SCALE' or a JSON matrix")

    parser = argparse.ArgumentParser(prog="vecgroth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ground-state", parents=[common], help="sphere maxima over (N, p, kappa)")
    lag = sub.add_parser("lagrangian", parents=[common], help="penalized maxima over a t-grid")
    lag.add_argument("--constrained", action="store_true",
                     help="fix the self-overlap to --d instead of leaving it free")
    par = sub.add_parser("parisi", parents=[common], help="evaluate or minimize the functional")
    par.add_argument("action", choices=("eval", "min"))
    par.add_argument("--params", help="parameter document (eval input, min output)")
    sub.add_parser("asymptotics", parents=[common], help="closed-form limits table")
    ver = sub.add_parser("verify", parents=[common], help="run self-check suites")
    ver.add_argument("suite", nargs="?", default="all", choices=list(verify.SUITES) + ["all"])
    return parser


def resolve_config(args):
    settings = {}
    if args.config:
        try:
            with open(args.config) as fh:
                settings = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from None
        if not isinstance(settings, dict):
            raise ConfigError("config", "top level must be an object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(settings) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown setting")
    for name in known - {"command", "action"}:
        val = getattr(args, name, None)
        if val is not None and val is not False:
            settings[name] = val
    settings["command"] = args.command
    settings["action"] = getattr(args, "action", "") or ""
    try:
        cfg = ExperimentConfig(**settings)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None
    return cfg.validate()


def _emit(cfg, rows, started, extra=None):
    text = to_csv(rows)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        meta = {"config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
                "version": __version__, "wall_seconds": time.perf_counter() - started}
        meta["config"]["d"] = str(meta["config"]["d"])
        if extra:
            meta.update(extra)
        with open(cfg.out + ".json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2)
    else:
        sys.stdout.write(text)


def _run_verify(cfg):
    checks = verify.run(cfg.suite, seed=cfg.seed)
    failed = [c for c in checks if not c.passed]
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} [{c.suite}] {c.name} ({c.trials} trials)")
    if failed:
        first = failed[0]
        print(f"first counterexample ({first.suite}: {first.name}):", file=sys.stderr)
        print(json.dumps(first.counterexample, indent=2, default=str), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = resolve_config(args)
        if cfg.command == "verify":
            return _run_verify(cfg)
        if cfg.command == "ground-state":
            rows = cmd_ground_state(cfg)
        elif cfg.command == "lagrangian":
            rows = cmd_lagrangian(cfg, constrained=args.constrained)
        elif cfg.command == "asymptotics":
            rows = cmd_asymptotics(cfg)
        else:
            rows, best = cmd_parisi(cfg)
            if best is not None and cfg.params:
                with open(cfg.params, "w", encoding="utf-8") as fh:
                    fh.write(best.to_json())
        _emit(cfg, rows, started)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, linalg.DomainError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
