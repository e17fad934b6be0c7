"""Command-line front end.

Configuration is an INI file (sections of flat key = value pairs); every key
has a default, listed by ``onoff-qcd config-reference``. ``--seed``,
``--trials`` and ``--out`` override the file. Each run writes CSV tables and
a JSON summary whose bytes depend only on the resolved configuration.

Exit codes: 0 success, 1 replication cells out of tolerance, 2 no stopping
region / bad structure, 3 calibration failure, 4 reliability warning
(trials truncated at the horizon cap), 64 bad configuration.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

from . import asymptotics, bellman, montecarlo
from ._io import write_csv, write_json
from .kernels import BACKEND
from .observation_model import GaussianMeanShiftModel, GeometricPrior
from .policy import FractionalSampling, Shiryaev, TwoThreshold, ConfigurationError
from .posterior import NEG_INF
from .tables import TABLES, Replicator

log = logging.getLogger("onoff_qcd")

EXIT_OK = 0
EXIT_REPLICATION = 1
EXIT_STRUCTURE = 2
EXIT_CALIBRATION = 3
EXIT_RELIABILITY = 4
EXIT_USAGE = 64


def _float(s: str) -> float:
    s = s.strip().lower()
    if s in ("-inf", "-infinity"):
        return -math.inf
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    return float(s)


def _floats(s: str) -> list[float]:
    return [_float(x) for x in s.split(",") if x.strip()]


def _strs(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: str
    doc: str


SCHEMA: dict[str, dict[str, Key]] = {
    "model": {
        "theta": Key(_float, "0.75", "post-change mean; f0 = N(0,1), f1 = N(theta,1)"),
    },
    "prior": {
        "rho": Key(_float, "0.01", "geometric change-time parameter, 0 < rho < 1"),
        "pi0": Key(_float, "0.0", "probability that the change is already in effect at time 0"),
    },
    "policy": {
        "kind": Key(str, "two-threshold", "two-threshold | shiryaev | fractional | dp"),
        "a": Key(_float, "6.467", "stopping threshold in log-odds (stop once z > a)"),
        "b": Key(_float, "-2.2", "sampling threshold in log-odds (observe iff z >= b); -inf = always"),
        "eps": Key(_float, "1.0", "observation probability of the fractional policy"),
        "z0": Key(str, "", "starting log-odds for simulate; empty = log(pi0/(1-pi0))"),
    },
    "targets": {
        "alpha": Key(_float, "1e-3", "PFA target for calibrate-a, tradeoff, compare-fractional"),
        "ano_percent": Key(_float, "30", "ANO% target for calibrate-b and compare-fractional"),
        "tol_rel": Key(_float, "0.02", "relative tolerance on PFA during calibration"),
        "tol_points": Key(_float, "1.0", "absolute tolerance on ANO% (percentage points)"),
    },
    "montecarlo": {
        "n_trials": Key(int, "100000", "trials per estimate"),
        "master_seed": Key(int, "0", "root of all random streams"),
        "horizon_cap": Key(int, "0", "per-trial step cap; 0 = ceil(20/rho + 40 a/(D + |log(1-rho)|))"),
        "workers": Key(int, "0", "worker threads; 0 = number of CPUs (results do not depend on it)"),
    },
    "bellman": {
        "grid_size": Key(int, "2000", "points of the uniform p-grid"),
        "iters": Key(int, "1500", "value-iteration sweeps"),
        "quad_nodes": Key(int, "129", "Gauss-Legendre nodes for the observation expectation"),
        "lambda_f": Key(_float, "50", "false-alarm multiplier"),
        "lambda_e": Key(_float, "0.5", "observation-cost multiplier"),
    },
    "approx": {
        "n_crossings": Key(int, "1000000", "overshoot samples"),
        "n_eta": Key(int, "1000000", "paths for the slowly changing remainder"),
        "n_wald": Key(int, "200000", "paths for the down-crossing probability"),
        "table": Key(str, "", "run every row of this table (II, III, IV, V, VI, VII, VIII) instead of [policy]"),
    },
    "experiment": {
        "rho_list": Key(_floats, "0.05,0.01,0.005,0.001", "rho values for tradeoff / compare-fractional"),
        "ano_percent_list": Key(_floats, "75,50,30,15", "ANO% targets for tradeoff"),
    },
    "replicate": {
        "tables": Key(_strs, "II,III,IV,V,VI,VII,VIII", "tables to replicate"),
        "n_trials_pfa": Key(int, "1000000", "trials for the Table II PFA simulations"),
        "simulate": Key(_bool, "true", "also run the simulation columns"),
    },
    "output": {
        "dir": Key(str, "out", "output directory"),
    },
}


def config_reference() -> str:
    lines = ["# onoff-qcd configuration reference: every key with its default.", ""]
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for name, k in keys.items():
            lines.append(f"# {k.doc}")
            lines.append(f"{name} = {k.default}")
        lines.append("")
    return "\n".join(lines)


class ConfigError(ValueError):
    pass


def load_config(path: Optional[str], overrides: dict[tuple[str, str], str] = ()) -> dict:
    """Parse and validate an INI file against the schema; returns {section: {key: value}}."""
    cp = configparser.ConfigParser(interpolation=None)
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
    out: dict[str, dict] = {}
    for sec, keys in SCHEMA.items():
        out[sec] = {}
        for name, k in keys.items():
            raw = dict(overrides).get((sec, name))
            if raw is None:
                raw = cp.get(sec, name, fallback=k.default)
            try:
                out[sec][name] = k.parse(raw)
            except ValueError as e:
                raise ConfigError(f"[{sec}] {name} = {raw!r}: {e}") from None
    return out


def _canonical(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return [_canonical(x) for x in v]
    if isinstance(v, dict):
        return {k: _canonical(x) for k, x in v.items()}
    return v


def config_hash(cfg: dict) -> str:
    """Hash of the resolved configuration, ignoring where the output goes."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    blob = json.dumps(_canonical(body), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------- helpers

class Run:
    def __init__(self, cfg: dict, command: str):
        self.cfg = cfg
        self.command = command
        self.hash = config_hash(cfg)
        self.out = Path(cfg["output"]["dir"])
        self.warnings: list[str] = []

    @property
    def model(self):
        return GaussianMeanShiftModel(self.cfg["model"]["theta"])

    def prior(self, rho: Optional[float] = None):
        p = self.cfg["prior"]
        return GeometricPrior(p["rho"] if rho is None else rho, p["pi0"])

    @property
    def mc(self) -> dict:
        m = self.cfg["montecarlo"]
        return {"n_trials": m["n_trials"], "master_seed": m["master_seed"],
                "workers": m["workers"] or None}

    def header(self) -> list[str]:
        return [f"onoff-qcd {self.command} config_hash={self.hash}"]

    def csv(self, name: str, rows, columns=None):
        p = write_csv(self.out / name, rows, columns, self.header())
        log.info("wrote %s", p)

    def json(self, name: str, obj: dict):
        body = {"command": self.command, "config_hash": self.hash, "config": self.cfg}
        body.update(obj)
        p = write_json(self.out / name, body)
        log.info("wrote %s", p)

    def note(self, est):
        w = getattr(est, "warning", None)
        if w:
            self.warnings.append(w)

    def status(self) -> int:
        if self.warnings:
            for w in self.warnings:
                log.warning("reliability: %s", w)
            return EXIT_RELIABILITY
        return EXIT_OK


def _policy(cfg: dict):
    p = cfg["policy"]
    kind = p["kind"]
    if kind == "two-threshold":
        return TwoThreshold.from_log_odds(p["a"], p["b"])
    if kind == "shiryaev":
        return Shiryaev(p["a"])
    if kind == "fractional":
        return FractionalSampling(p["a"], p["eps"])
    raise ConfigError(f"unknown policy kind {kind!r}")


# ---------------------------------------------------------------- commands

def cmd_bellman(run: Run) -> int:
    b = run.cfg["bellman"]
    costs = bellman.CostParams(b["lambda_f"], b["lambda_e"])
    grid = bellman.value_iterate(run.model, run.prior(), costs, b["grid_size"], b["iters"],
                                 b["quad_nodes"])
    bellman.write_grid_csv(grid, run.out / "grid.csv", run.header()[0])
    try:
        st = bellman.extract_structure(grid)
    except bellman.StructureError as e:
        log.error("%s", e)
        run.json("structure.json", {"error": str(e)})
        return EXIT_STRUCTURE
    run.json("structure.json", {"structure": st.as_dict(), "iterations_run": grid.iterations_run,
                                "sup_norm_delta": grid.sup_norm_delta})
    print(json.dumps(st.as_dict()))
    return EXIT_OK


def _simulate_policy(run: Run):
    kind = run.cfg["policy"]["kind"]
    if kind == "dp":
        b = run.cfg["bellman"]
        grid = bellman.value_iterate(run.model, run.prior(),
                                     bellman.CostParams(b["lambda_f"], b["lambda_e"]),
                                     b["grid_size"], b["iters"], b["quad_nodes"])
        return bellman.to_tabulated_policy(grid)
    return _policy(run.cfg)


def cmd_simulate(run: Run) -> int:
    pol = _simulate_policy(run)
    cap = run.cfg["montecarlo"]["horizon_cap"] or None
    z0 = run.cfg["policy"]["z0"].strip()
    est = montecarlo.estimate_metrics(pol, run.model, run.prior(), horizon_cap=cap,
                                      z0=_float(z0) if z0 else None, **run.mc)
    run.note(est)
    row = montecarlo.metrics_row(pol, run.model, est, run.hash)
    run.csv("metrics.csv", [row], montecarlo.METRIC_COLUMNS)
    run.json("summary.json", {"metrics": est.as_dict()})
    print(json.dumps({k: row[k] for k in ("add_conditional", "pfa", "ano", "ano1", "ano_percent")}))
    return run.status()


def _calibration_out(run: Run, res, name: str) -> int:
    d = res.as_dict()
    run.csv(name + ".csv", [{k: v for k, v in d.items() if k != "metrics"}])
    run.json(name + ".json", {"calibration": d})
    print(json.dumps({k: d[k] for k in ("threshold", "achieved", "target", "converged")}))
    if res.metrics is not None:
        run.note(res.metrics)
    if not res.converged:
        log.error("calibration did not reach its tolerance")
        return EXIT_CALIBRATION
    return run.status()


def cmd_calibrate_a(run: Run) -> int:
    t = run.cfg["targets"]
    p = run.cfg["policy"]
    b = NEG_INF if p["kind"] in ("shiryaev", "fractional") else p["b"]
    eps = p["eps"] if p["kind"] == "fractional" else None
    res = montecarlo.calibrate_a(t["alpha"], b, run.model, run.prior(), tol_rel=t["tol_rel"],
                                 eps=eps, **run.mc)
    return _calibration_out(run, res, "calibrate_a")


def cmd_calibrate_b(run: Run) -> int:
    t = run.cfg["targets"]
    res = montecarlo.calibrate_b(t["ano_percent"], run.cfg["policy"]["a"], run.model, run.prior(),
                                 tol=t["tol_points"], **run.mc)
    return _calibration_out(run, res, "calibrate_b")


def _flag_rows(run: Run, rows):
    for r in rows:
        if r["truncated_fraction"] > montecarlo.TRUNCATION_WARN:
            run.warnings.append(f"rho={r['rho']}: truncated fraction {r['truncated_fraction']:.2e}")
    if not all(r["converged"] for r in rows):
        log.error("some calibrations did not reach their tolerance")
        return EXIT_CALIBRATION
    return run.status()


def cmd_tradeoff(run: Run) -> int:
    t, e = run.cfg["targets"], run.cfg["experiment"]
    rows = montecarlo.tradeoff_curve(run.model, e["rho_list"], t["alpha"], e["ano_percent_list"],
                                     tol_rel=t["tol_rel"], tol=t["tol_points"], **run.mc)
    run.csv("tradeoff.csv", rows)
    run.json("tradeoff.json", {"rows": rows})
    return _flag_rows(run, rows)


def cmd_compare_fractional(run: Run) -> int:
    t, e = run.cfg["targets"], run.cfg["experiment"]
    rows = montecarlo.compare_fractional(run.model, e["rho_list"], t["alpha"], t["ano_percent"],
                                         tol_rel=t["tol_rel"], tol=t["tol_points"], **run.mc)
    run.csv("compare_fractional.csv", rows)
    run.json("compare_fractional.json", {"rows": rows})
    return _flag_rows(run, rows)


def _cache(run: Run) -> asymptotics.RenewalCache:
    a = run.cfg["approx"]
    m = run.cfg["montecarlo"]
    return asymptotics.RenewalCache(a["n_crossings"], a["n_eta"], a["n_wald"], m["master_seed"],
                                    m["workers"] or None)


APPROX_COLUMNS = ("theta", "rho", "a", "b", "pfa_approx", "add_first_order", "add_shiryaev",
                  "add_shiryaev_eta_b", "add_new", "adds_cycle", "ano_approx", "ano1_approx",
                  "e1_nu_b", "lambda_hat_mean", "t_zhat_b_mean", "p1_below_b", "p1_below_b_se",
                  "p_b", "r_bar", "r_bar_se", "laplace_at_one", "laplace_se", "eta_minus_inf",
                  "eta_minus_inf_se", "eta_b", "eta_b_se")


def cmd_approx(run: Run) -> int:
    cache = _cache(run)
    table = run.cfg["approx"]["table"].strip().upper()
    if table:
        if table not in TABLES:
            raise ConfigError(f"unknown table {table!r}")
        points = [(r.theta, r.rho, r.a, r.b) for r in TABLES[table]]
    else:
        p = run.cfg["policy"]
        b = NEG_INF if p["kind"] in ("shiryaev", "fractional") else p["b"]
        points = [(run.cfg["model"]["theta"], run.cfg["prior"]["rho"], p["a"], b)]
    reports = [cache.report(a, b, GaussianMeanShiftModel(th), GeometricPrior(rho))
               for th, rho, a, b in points]
    rows = [r.as_dict() for r in reports]
    run.csv("approx.csv", rows, APPROX_COLUMNS)
    run.json("approx.json", {"reports": rows})
    for r in reports:
        print(json.dumps({"theta": r.theta, "rho": r.rho, "a": r.a, "b": r.b,
                          "pfa_approx": r.pfa_approx, "ano_approx": r.ano_approx,
                          "ano1_approx": r.ano1_approx, "add_new": r.add_new}))
    return EXIT_OK


def cmd_replicate_tables(run: Run) -> int:
    rep_cfg = run.cfg["replicate"]
    m = run.cfg["montecarlo"]
    rep = Replicator(_cache(run), m["n_trials"], m["master_seed"], rep_cfg["n_trials_pfa"],
                     rep_cfg["simulate"], m["workers"] or None)
    cells = []
    for name in rep_cfg["tables"]:
        name = name.upper()
        if name not in TABLES:
            raise ConfigError(f"unknown table {name!r}")
        got = rep.table(name)
        cells.extend(got)
        for c in got:
            flag = "PASS" if c.passed else ("FAIL" if c.acceptance else "info")
            print(f"{flag:4s} table {c.table:4s} row {c.row} {c.column:22s} "
                  f"reference={c.reference:.6g} ours={c.ours:.6g} err={c.error:.3g} tol={c.tolerance:g}")
    rows = [c.as_dict() for c in cells]
    run.csv("replication.csv", rows)
    failed = [c for c in cells if c.acceptance and not c.passed]
    run.json("replication.json", {"cells": rows, "n_failed": len(failed)})
    run.warnings.extend(rep.warnings)
    if failed:
        log.error("%d acceptance cells out of tolerance", len(failed))
        return EXIT_REPLICATION
    return run.status()


COMMANDS = {
    "bellman": cmd_bellman,
    "simulate": cmd_simulate,
    "calibrate-a": cmd_calibrate_a,
    "calibrate-b": cmd_calibrate_b,
    "tradeoff": cmd_tradeoff,
    "compare-fractional": cmd_compare_fractional,
    "approx": cmd_approx,
    "replicate-tables": cmd_replicate_tables,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="onoff-qcd",
                                 description="Quickest change detection with on-off observation control")
    ap.add_argument("command", choices=list(COMMANDS) + ["config-reference"])
    ap.add_argument("--config", metavar="PATH", help="INI configuration file")
    ap.add_argument("--seed", metavar="U64", type=int, help="override [montecarlo] master_seed")
    ap.add_argument("--out", metavar="DIR", help="override [output] dir")
    ap.add_argument("--trials", metavar="N", type=int, help="override [montecarlo] n_trials")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "config-reference":
        print(config_reference())
        return EXIT_OK
    overrides = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_USAGE
        overrides[("montecarlo", "master_seed")] = str(args.seed)
    if args.trials is not None:
        overrides[("montecarlo", "n_trials")] = str(args.trials)
    if args.out is not None:
        overrides[("output", "dir")] = args.out
    try:
        cfg = load_config(args.config, overrides)
        run = Run(cfg, args.command)
        log.info("backend %s, config %s", BACKEND, run.hash)
        return COMMANDS[args.command](run)
    except (ConfigError, ConfigurationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except montecarlo.CalibrationError as e:
        print(f"calibration failure: {e}", file=sys.stderr)
        return EXIT_CALIBRATION
    except bellman.StructureError as e:
        print(f"structure error: {e}", file=sys.stderr)
        return EXIT_STRUCTURE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
