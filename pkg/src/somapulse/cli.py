"""Command-line experiment runner.

``somapulse <command> [options]``; every training command reads a YAML
config (a path or the name of a bundled config, see ``somapulse list``)
and writes its artifacts plus a ``manifest.json`` into the output
directory. Exit codes: 0 success, 2 config or usage error, 3 numerical
failure, 4 weight/config mismatch.

Outputs go to ``--out`` if given, else to the config's ``output_dir``
resolved under ``$SOMAPULSE_OUTPUT_ROOT`` (default: the working directory).
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, baselines, decompose, nn
from .config import ConfigError, RunConfig, bundled_names, config_hash, eval_number
from .config import load as load_config
from .controls import flat_to_km, km_to_flat
from .evalspace import axis_sweep, r_max, radial_sweep, sample_uniform, write_sweep_csv
from .linalg import NoConvergence
from .models import DimensionMismatch
from .optim import NonFiniteObjective, write_trace_csv
from .soma import (
    FailedSamples,
    FixedPulseModel,
    LinearPulseModel,
    NetPulseModel,
    draw_test_set,
    evaluate_model,
    grape_with_restarts,
    soma_bp,
    soma_sl,
    write_dataset_jsonl,
    write_metrics,
)

log = logging.getLogger("somapulse")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISMATCH = 0, 2, 3, 4
OUTPUT_ROOT_ENV = "SOMAPULSE_OUTPUT_ROOT"


class Mismatch(ValueError):
    """Weight file and config describe different problems."""


# ---------------------------------------------------------------------------
# output bookkeeping


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


class Run:
    """Output directory, config hash and the list of files written."""

    def __init__(self, command: str, out_dir: Path, cfg_hash: str, seeds: dict):
        self.command, self.dir, self.hash, self.seeds = command, out_dir, cfg_hash, seeds
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    @property
    def comments(self) -> list[str]:
        return [f"config_hash: {self.hash}"]

    def write_json(self, name: str, doc: dict) -> dict:
        doc = dict(doc, config_hash=self.hash)
        _atomic_write(self.path(name), _dump(doc))
        return doc

    def finish(self) -> Path:
        man = {
            "command": self.command,
            "config_hash": self.hash,
            "tool_version": __version__,
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "seeds": self.seeds,
            "outputs": sorted(set(self.files)),
        }
        p = self.dir / "manifest.json"
        _atomic_write(p, _dump(man))
        return p


def _out_dir(args, rc: RunConfig | None, default: str) -> Path:
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    rel = rc["output_dir"] if rc is not None else default
    return root / rel


def _workers(args) -> int:
    return args.workers if args.workers else (os.cpu_count() or 1)


def _pulse_doc(rc: RunConfig, x: np.ndarray) -> dict:
    return {"kind": "fixed_pulse", "K": int(x.shape[0]), "M": int(x.shape[1]),
            "x": [float(v) for v in km_to_flat(x)], "problem_hash": rc.problem_hash}


def _metrics(run: Run, ev, seed: int, extra: dict) -> dict:
    doc = write_metrics(run.path("metrics.json"), ev, seed, run.hash, extra)
    log.info("mean infidelity %.3e (std %.3e, n=%d)", doc["mean_infidelity"], doc["std_infidelity"], doc["n_test"])
    return doc


def _optim_summary(res) -> dict:
    return {"n_iter": int(res.n_iter), "n_eval": int(res.n_eval), "converged": bool(res.converged),
            "message": res.message}


# ---------------------------------------------------------------------------
# commands


def cmd_grape(args) -> int:
    rc = load_config(args.config, args.seed)
    qoc = rc.qoc()
    run = Run("grape", _out_dir(args, rc, "runs"), rc.hash, rc["seeds"])
    lam = qoc.center()[None]
    out = grape_with_restarts(qoc, lam, rc.lbfgs(), rc.grape_restarts(), rc["optimizer"]["init_std"],
                              rc["optimizer"]["gradient"])
    best = out.best
    ev = evaluate_model(FixedPulseModel(best.x), qoc, lam)
    _metrics(run, ev, rc["seeds"]["restart"], {
        "command": "grape", "infidelity": best.infidelity, "gradient": rc["optimizer"]["gradient"],
        "restart_infidelities": out.metrics, "selected_restart": out.index, **_optim_summary(best.optim)})
    run.write_json("pulse.json", _pulse_doc(rc, best.x))
    write_trace_csv(run.path("trace.csv"), best.optim.trace, run.comments)
    run.finish()
    return EXIT_OK


def cmd_robust(args) -> int:
    rc = load_config(args.config, args.seed)
    qoc = rc.qoc()
    run = Run("robust", _out_dir(args, rc, "runs"), rc.hash, rc["seeds"])
    lams = sample_uniform(qoc.space, rc["robust"]["n_samples"], rc["seeds"]["train"])
    out = grape_with_restarts(qoc, lams, rc.lbfgs(), rc.grape_restarts(), rc["optimizer"]["init_std"],
                              rc["optimizer"]["gradient"])
    best = out.best
    test = draw_test_set(qoc, rc["evaluation"]["n_test"], rc["seeds"]["test"])
    ev = evaluate_model(FixedPulseModel(best.x), qoc, test)
    _metrics(run, ev, rc["seeds"]["test"], {
        "command": "robust", "train_objective": best.infidelity, "n_samples": len(lams),
        "restart_objectives": out.metrics, "selected_restart": out.index, **_optim_summary(best.optim)})
    run.write_json("pulse.json", _pulse_doc(rc, best.x))
    write_trace_csv(run.path("trace.csv"), best.optim.trace, run.comments)
    run.finish()
    return EXIT_OK


def _weights_meta(rc: RunConfig, run: Run, kind: str) -> dict:
    return {"kind": kind, "problem_hash": rc.problem_hash, "config_hash": run.hash,
            "K": rc["pulse"]["K"], "names": list(rc.space().names)}


def cmd_soma_sl(args) -> int:
    rc = load_config(args.config, args.seed)
    qoc = rc.qoc()
    cfg = rc.sl_config()
    run = Run("soma-sl", _out_dir(args, rc, "runs"), rc.hash, rc["seeds"])
    res = soma_sl(qoc, cfg, tuple(rc["soma_sl"]["net"]), _workers(args))
    write_dataset_jsonl(run.path("dataset.jsonl"), res.dataset, qoc.space.names, {"config_hash": run.hash})
    model = res.model
    net = model.as_mlp() if isinstance(model, LinearPulseModel) else model.net
    nn.save_weights(run.path("weights.json"), net, res.stats, _weights_meta(rc, run, cfg.model))
    test = draw_test_set(qoc, rc["evaluation"]["n_test"], rc["seeds"]["test"])
    ev = evaluate_model(model, qoc, test)
    _metrics(run, ev, rc["seeds"]["test"], {
        "command": "soma-sl", "model": cfg.model, "n_samples": cfg.n_samples, "n_failed": res.n_failed,
        "center_infidelity": res.center_solution.infidelity, "selection_metrics": res.selection_metrics,
        "selected_restart": res.selected})
    write_trace_csv(run.path("trace.csv"), res.trace, run.comments)
    run.finish()
    return EXIT_OK


def cmd_soma_bp(args) -> int:
    rc = load_config(args.config, args.seed)
    qoc = rc.qoc()
    cfg = rc.bp_config()
    run = Run("soma-bp", _out_dir(args, rc, "runs"), rc.hash, rc["seeds"])
    test = draw_test_set(qoc, rc["evaluation"]["n_test"], rc["seeds"]["test"])
    res = soma_bp(qoc, cfg, tuple(rc["soma_bp"]["net"]), test)
    nn.save_weights(run.path("weights.json"), res.model.net, res.stats, _weights_meta(rc, run, "mlp"))
    ev = evaluate_model(res.model, qoc, test)
    _metrics(run, ev, rc["seeds"]["test"], {
        "command": "soma-bp", "n_samples": cfg.n_samples, "train_objective": float(res.model.train_objective),
        "restart_test_infidelities": res.selection_metrics, "selected_restart": res.selected,
        "n_iter": len(res.trace) - 1 if res.trace else 0})
    write_trace_csv(run.path("trace.csv"), res.trace, run.comments)
    run.finish()
    return EXIT_OK


def load_pulse_model(path, rc: RunConfig):
    """A pulse model from a weight file or a fixed-pulse file, checked against ``rc``."""
    qoc = rc.qoc()
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise nn.CorruptFile(f"cannot read {path}: {exc}") from None
    if doc.get("kind") == "fixed_pulse":
        if doc.get("problem_hash") != rc.problem_hash:
            raise Mismatch("pulse file was produced for a different problem definition")
        if (doc["K"], doc["M"]) != (qoc.K, qoc.M):
            raise Mismatch(f"pulse has K={doc['K']}, M={doc['M']}; config needs K={qoc.K}, M={qoc.M}")
        return FixedPulseModel(flat_to_km(np.asarray(doc["x"], dtype=float), doc["K"], doc["M"]))
    net, stats, meta = nn.load_weights(path, with_meta=True)
    if net.layer_dims[0] != qoc.space.dim or net.layer_dims[-1] != qoc.Q:
        raise Mismatch(f"network maps {net.layer_dims[0]} -> {net.layer_dims[-1]}; "
                       f"config needs {qoc.space.dim} -> {qoc.Q}")
    if meta.get("problem_hash") not in (None, rc.problem_hash):
        raise Mismatch("weight file was trained for a different problem definition")
    return NetPulseModel(net, stats, qoc.space, qoc.K, qoc.M)


def cmd_eval(args) -> int:
    rc = load_config(args.config, args.seed)
    qoc = rc.qoc()
    model = load_pulse_model(args.weights, rc)
    run = Run(f"eval-{args.mode}", _out_dir(args, rc, "runs"), rc.hash, rc["seeds"])
    ev_cfg = rc["evaluation"]

    def evaluate(lams):
        return evaluate_model(model, qoc, lams).infidelities

    sp = qoc.space
    if args.mode == "axis":
        axes = [args.axis] if args.axis else [n for n, a in zip(sp.names, sp.active) if a]
        for name in axes:
            sw = axis_sweep(evaluate, sp, name, ev_cfg["axis_points"])
            write_sweep_csv(run.path(f"axis_{name}.csv"), sw.values, sw.infidelity,
                            np.zeros_like(sw.values), 1, run.comments)
    elif args.mode == "radial":
        radii = np.linspace(0.0, r_max(sp), ev_cfg["n_radii"])
        rep = radial_sweep(evaluate, sp, radii, ev_cfg["n_per_radius"], rc["seeds"]["test"])
        write_sweep_csv(run.path("radial.csv"), rep.radii_rel, rep.mean_infidelity, rep.std_infidelity,
                        rep.n_per_radius, run.comments)
    else:
        test = draw_test_set(qoc, ev_cfg["n_test"], rc["seeds"]["test"])
        ev = evaluate_model(model, qoc, test)
        write_metrics(run.path("metrics.json"), ev, rc["seeds"]["test"], run.hash, {"command": "eval-testset"})
        with open(run.path("testset.csv"), "w") as fh:
            fh.write(f"# config_hash: {run.hash}\n")
            fh.write(",".join([*sp.names, "infidelity"]) + "\n")
            for lam, v in zip(ev.lams, ev.infidelities):
                fh.write(",".join(f"{x:.17g}" for x in [*lam, v]) + "\n")
    run.finish()
    return EXIT_OK


def _angle(text: str) -> float:
    return eval_number(text, "angle")


def cmd_decompose(args) -> int:
    angle = _angle(args.angle) if args.target == "CRtheta" else None
    settings = {"target": args.target, "angle": angle, "method": args.method, "max_depth": args.max_depth,
                "seed": args.seed if args.seed is not None else 0, "max_moves": args.max_moves,
                "max_evaluations": args.max_evaluations}
    h = config_hash(settings)
    run = Run("decompose", _out_dir(args, None, "runs/decompose"), h, {"seed": settings["seed"]})
    G = decompose.cr_target(angle) if args.target == "CRtheta" else decompose.GATES["CNOT12"]
    if args.method == "exhaustive":
        if args.max_depth > 10:
            raise ConfigError("max_depth", "exhaustive search supports depth <= 10")
        res = decompose.exhaustive_search(G, args.max_depth, max_evaluations=args.max_evaluations)
    else:
        res = decompose.stochastic_descent(G, args.max_depth, settings["seed"], args.max_moves)
    run.write_json("result.json", res.to_json(args.target, angle))
    c = res.counts
    print(f"{'target':<10}{'angle':>12}{'method':>12}{'fidelity':>12}{'N_CNOT':>8}{'N_T':>5}{'N_S':>5}{'N_H':>5}")
    a = f"{angle:.6f}" if angle is not None else "-"
    print(f"{args.target:<10}{a:>12}{args.method:>12}{res.fidelity:>12.6f}{c[0]:>8}{c[1]:>5}{c[2]:>5}{c[3]:>5}")
    print("circuit:", " ".join(res.circuit) if res.circuit else "(identity)")
    run.finish()
    return EXIT_OK


BASELINE_SYSTEMS = {"bb1": "qubit", "corpse": "qubit", "drag": "qutrit", "stirap": "qutrit"}


def cmd_baseline(args) -> int:
    fam = args.family
    system = args.system or BASELINE_SYSTEMS[fam]
    if system != BASELINE_SYSTEMS[fam]:
        raise ConfigError("system", f"{fam} runs on the {BASELINE_SYSTEMS[fam]} model, not {system}")
    n = args.points
    settings = {"family": fam, "system": system, "points": n, "theta": args.theta, "lo": args.lo, "hi": args.hi}
    h = config_hash(settings)
    run = Run("baseline", _out_dir(args, None, f"runs/baseline_{fam}"), h, {})
    theta = _angle(args.theta) if args.theta is not None else None
    summary: dict = {"family": fam, "system": system}
    if fam == "bb1":
        lo, hi = args.lo or 1e-3, args.hi or 1e-1
        curve = baselines.bb1_sweep(np.logspace(np.log10(lo), np.log10(hi), n),
                                    theta1=theta if theta is not None else np.pi / 2)
        summary["slope"] = baselines.loglog_slope(curve.values, curve.infidelity)
        summary["reference_slope"] = baselines.loglog_slope(curve.values, curve.reference)
    elif fam == "corpse":
        lo, hi = args.lo or 1e-3, args.hi or 0.02
        curve = baselines.corpse_sweep(np.linspace(lo, hi, n), theta1=theta if theta is not None else np.pi / 2)
        summary["below_reference_everywhere"] = bool(np.all(curve.infidelity < curve.reference))
    elif fam == "stirap":
        lo, hi = args.lo or 5.0, args.hi or 40.0
        vals = np.linspace(lo, hi, n)
        rs = [baselines.stirap_transfer(v, v) for v in vals]
        curve = baselines.BaselineCurve("stirap", "Omega", vals, np.array([1 - r.transfer for r in rs]),
                                        np.array([r.max_intermediate for r in rs]))
        summary["transfer_at_max"] = rs[-1].transfer
        summary["max_intermediate_at_max"] = rs[-1].max_intermediate
    else:
        lo, hi = args.lo or 4.0, args.hi or 12.0
        vals = np.linspace(lo, hi, n)
        th = theta if theta is not None else np.pi
        cs = [baselines.drag_compare(theta1=th, T=v) for v in vals]
        curve = baselines.BaselineCurve("drag", "T", vals, np.array([c.leakage_drag for c in cs]),
                                        np.array([c.leakage_plain for c in cs]))
        summary["min_reduction"] = float(min(c.reduction for c in cs))
    baselines.write_curve_csv(run.path(f"{fam}.csv"), curve, run.comments)
    run.write_json("summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    run.finish()
    return EXIT_OK


def cmd_validate(args) -> int:
    rc = load_config(args.config, args.seed)
    print(f"ok {rc['name'] or args.config} config_hash={rc.hash} problem_hash={rc.problem_hash}")
    return EXIT_OK


def cmd_list(args) -> int:
    for n in bundled_names():
        print(n)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="somapulse", description="Pulse-family synthesis experiments.")
    p.add_argument("--version", action="version", version=f"somapulse {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="YAML config path or bundled config name")
        sp.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        sp.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
        sp.add_argument("--out", default=None, help="output directory")

    for name, fn, help_ in [("grape", cmd_grape, "single-problem GRAPE at the parameter centre"),
                            ("robust", cmd_robust, "one pulse for the whole sampled ensemble"),
                            ("soma-sl", cmd_soma_sl, "GRAPE dataset + regression"),
                            ("soma-bp", cmd_soma_bp, "network trained through the dynamics")]:
        sp = sub.add_parser(name, help=help_)
        common(sp)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("eval", help="sweeps of a trained model or pulse")
    common(sp)
    sp.add_argument("--weights", required=True, help="weights.json or pulse.json")
    sp.add_argument("--mode", choices=("axis", "radial", "testset"), default="testset")
    sp.add_argument("--axis", default=None, help="single axis for --mode axis (default: all active)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("decompose", help="discrete circuit search")
    common(sp, config=False)
    sp.add_argument("--target", choices=("CRtheta", "CNOT"), default="CRtheta")
    sp.add_argument("--angle", default="pi/4", help="CR angle, e.g. pi/sqrt(7)")
    sp.add_argument("--method", choices=("exhaustive", "stochastic"), default="exhaustive")
    sp.add_argument("--max-depth", type=int, default=10)
    sp.add_argument("--max-moves", type=int, default=200_000)
    sp.add_argument("--max-evaluations", type=int, default=10**9)
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("baseline", help="analytic pulse families and their robustness curves")
    common(sp, config=False)
    sp.add_argument("--family", choices=baselines.FAMILIES, required=True)
    sp.add_argument("--system", choices=("qubit", "qutrit", "two_qutrit"), default=None)
    sp.add_argument("--points", type=int, default=12)
    sp.add_argument("--theta", default=None, help="rotation angle")
    sp.add_argument("--lo", type=float, default=None, help="sweep start")
    sp.add_argument("--hi", type=float, default=None, help="sweep end")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("validate-config", help="schema-check a config and print its hash")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("list", help="names of the bundled configs")
    sp.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Mismatch, DimensionMismatch, nn.ShapeMismatch) as exc:
        print(f"mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (nn.CorruptFile, nn.VersionMismatch) as exc:
        print(f"weight file error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (NonFiniteObjective, NoConvergence, FailedSamples, decompose.BudgetExceeded,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
