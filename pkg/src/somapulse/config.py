"""Experiment configuration files: loading, validation, defaults and hashing.

Configs are YAML documents checked against ``configs/schema.json`` (unknown
keys are rejected). Frequencies are stored in GHz and times in ns; a
parameter entry may carry ``unit: MHz`` (or ``us``) and is converted on
load. Numbers may be written as arithmetic in ``pi`` and ``sqrt``, e.g.
``pi/2`` or ``pi/sqrt(7)``.

The content hash covers the fully defaulted config without
``output_dir``; the problem hash covers only the parts that define the
control problem (system, gate, parameters, grid, pulse, model) and is what
weight files are matched against.
"""
from __future__ import annotations

import ast
import copy
import json
import math
import operator
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .evalspace import ParameterSpace
from .optim import LbfgsConfig, RestartPolicy
from .soma import QocClass, SomaBpConfig, SomaSlConfig, config_hash

UNIT_SCALE = {"GHz": 1.0, "MHz": 1e-3, "ns": 1.0, "us": 1e3, "rad": 1.0, "": 1.0}

DEFAULTS = {
    "name": "",
    "description": "",
    "gate": {"angles": []},
    "model": {"bosonic": True, "angular": True, "method": "auto"},
    "grid": {"n_evo": 500},
    "pulse": {"K": 4, "scale": 0.01},
    "optimizer": {
        "memory": 10, "max_iter": 500, "grad_tol": 1e-9, "f_tol": 1e-12, "c1": 1e-4, "c2": 0.9,
        "max_ls": 25, "n_guesses": 5, "init_std": 1.0, "gradient": "analytic",
    },
    "robust": {"n_samples": 500},
    "soma_sl": {
        "n_samples": 1000, "warm_start": True, "model": "mlp", "filter_failed": True,
        "filter_threshold": 1e-4, "holdout": 0.1, "loss": "mse", "huber_delta": 1.0,
        "net": [256, 256], "fit_max_iter": 10000, "fit_grad_tol": 1e-10, "n_restarts": 5,
    },
    "soma_bp": {
        "n_samples": 500, "optimizer": "lbfgs", "max_iter": 6000, "grad_tol": 1e-10, "f_tol": 1e-14,
        "adam_lr": 1e-3, "n_restarts": 5, "resample_per_iter": False, "output_std": 1.0,
        "net": [256, 256], "max_wall_s": None,
    },
    "evaluation": {"n_test": 1000, "n_per_radius": 1000, "n_radii": 11, "axis_points": 41},
    "seeds": {"train": 0, "test": 0, "restart": 0},
    "output_dir": "runs",
}

PROBLEM_KEYS = ("system", "gate", "parameters", "grid", "pulse", "model")


class ConfigError(ValueError):
    """Invalid config; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


# ---------------------------------------------------------------------------
# numeric expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_NAMES = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt}


def eval_number(value, field: str = "") -> float:
    """A float from a number or a small arithmetic string such as ``"3*pi/8"``."""
    if isinstance(value, bool):
        raise ConfigError(field, "expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    try:
        tree = ast.parse(str(value), mode="eval")
        return float(_eval(tree.body))
    except (SyntaxError, ValueError, TypeError, ZeroDivisionError, KeyError) as exc:
        raise ConfigError(field, f"cannot evaluate {value!r}: {exc}") from None


def _eval(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Name):
        return _NAMES[node.id]
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and len(node.args) == 1:
        return _FUNCS[node.func.id](_eval(node.args[0]))
    raise ValueError("unsupported expression")


# ---------------------------------------------------------------------------
# loading


def schema() -> dict:
    return json.loads(resources.files("somapulse").joinpath("configs/schema.json").read_text())


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (``name`` without extension)."""
    p = resources.files("somapulse").joinpath(f"configs/{name}.yaml")
    if not p.is_file():
        raise ConfigError("", f"no bundled config named {name!r}")
    return Path(str(p))


def bundled_names() -> list[str]:
    d = resources.files("somapulse").joinpath("configs")
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".yaml"))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "parameters":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _path(err: jsonschema.ValidationError) -> str:
    path = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        path.append(missing)
    elif err.validator == "additionalProperties" and "'" in err.message:
        path.append(err.message.split("'")[1])
    return ".".join(path)


def validate(doc) -> None:
    """Schema check; raises :class:`ConfigError` naming the first offending field."""
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a mapping")
    v = jsonschema.Draft202012Validator(schema())
    errors = sorted(v.iter_errors(doc), key=lambda e: (len(list(e.absolute_path)), e.message))
    if errors:
        e = errors[0]
        raise ConfigError(_path(e), e.message)


def _normalize_parameters(params: dict) -> dict:
    out = {}
    for name, v in params.items():
        f = f"parameters.{name}"
        if not isinstance(v, dict):
            c = eval_number(v, f)
            out[name] = {"center": c, "lo": c, "hi": c}
            continue
        s = UNIT_SCALE[v.get("unit", "")]
        c = eval_number(v["center"], f + ".center") * s
        lo = eval_number(v["lo"], f + ".lo") * s if "lo" in v else c
        hi = eval_number(v["hi"], f + ".hi") * s if "hi" in v else c
        if not lo <= c <= hi:
            raise ConfigError(f, f"need lo <= center <= hi, got {lo}, {c}, {hi}")
        out[name] = {"center": c, "lo": lo, "hi": hi}
    return out


@dataclass
class RunConfig:
    """A validated, fully defaulted experiment config."""

    data: dict
    source: str = ""

    @property
    def hash(self) -> str:
        return config_hash({k: v for k, v in self.data.items() if k != "output_dir"})

    @property
    def problem_hash(self) -> str:
        return config_hash({k: self.data[k] for k in PROBLEM_KEYS})

    def __getitem__(self, k):
        return self.data[k]

    # -- builders -----------------------------------------------------------

    def space(self) -> ParameterSpace:
        return ParameterSpace.from_dict(self.data["parameters"])

    def qoc(self) -> QocClass:
        d = self.data
        try:
            return QocClass(d["system"], d["gate"]["family"], self.space(), d["grid"]["n_evo"], d["pulse"]["K"],
                            d["pulse"]["scale"], tuple(d["gate"]["angles"]), d["model"]["bosonic"],
                            d["model"]["angular"], d["model"]["method"])
        except ValueError as exc:
            raise ConfigError("parameters", str(exc)) from None

    def lbfgs(self, **over) -> LbfgsConfig:
        o = self.data["optimizer"]
        kw = dict(memory=o["memory"], max_iter=o["max_iter"], grad_tol=o["grad_tol"], f_tol=o["f_tol"],
                  c1=o["c1"], c2=o["c2"], max_ls=o["max_ls"])
        kw.update(over)
        return LbfgsConfig(**kw)

    def grape_restarts(self) -> RestartPolicy:
        return RestartPolicy(self.data["optimizer"]["n_guesses"], self.data["seeds"]["restart"])

    def sl_config(self) -> SomaSlConfig:
        s, o = self.data["soma_sl"], self.data["optimizer"]
        return SomaSlConfig(
            n_samples=s["n_samples"], seed=self.data["seeds"]["train"], warm_start=s["warm_start"],
            model=s["model"], filter_failed=s["filter_failed"], filter_threshold=s["filter_threshold"],
            holdout=s["holdout"], loss=s["loss"], huber_delta=s["huber_delta"], grape=self.lbfgs(),
            fit=self.lbfgs(max_iter=s["fit_max_iter"], grad_tol=s["fit_grad_tol"]),
            restart=RestartPolicy(s["n_restarts"], self.data["seeds"]["restart"], "test_infidelity"),
            seed_restarts=o["n_guesses"], init_std=o["init_std"],
        )

    def bp_config(self) -> SomaBpConfig:
        b = self.data["soma_bp"]
        try:
            return SomaBpConfig(
                n_samples=b["n_samples"], seed=self.data["seeds"]["train"], optimizer=b["optimizer"],
                max_iter=b["max_iter"],
                lbfgs=self.lbfgs(max_iter=b["max_iter"], grad_tol=b["grad_tol"], f_tol=b["f_tol"]),
                adam_lr=b["adam_lr"],
                restart=RestartPolicy(b["n_restarts"], self.data["seeds"]["restart"], "test_infidelity"),
                resample_per_iter=b["resample_per_iter"], n_test=self.data["evaluation"]["n_test"],
                output_std=b["output_std"], max_wall_s=b["max_wall_s"],
            )
        except ValueError as exc:
            raise ConfigError("soma_bp", str(exc)) from None


def from_dict(doc: dict, seed: int | None = None, source: str = "") -> RunConfig:
    validate(doc)
    d = _merge(DEFAULTS, doc)
    d["parameters"] = _normalize_parameters(doc["parameters"])
    d["gate"]["angles"] = [eval_number(a, f"gate.angles.{i}") for i, a in enumerate(d["gate"]["angles"])]
    if seed is not None:
        d["seeds"] = {"train": int(seed), "test": int(seed), "restart": int(seed)}
    fam = d["gate"]["family"]
    needs_theta = fam != "CNOT" and not d["gate"]["angles"]
    if needs_theta and "theta" not in d["parameters"]:
        raise ConfigError("parameters.theta", f"required for gate family {fam} without fixed angles")
    if fam in ("R1", "R2", "Rgeneral") and d["system"] != "qutrit":
        raise ConfigError("gate.family", f"{fam} is a single-qubit gate, system is {d['system']}")
    if fam in ("CNOT", "CRtheta") and d["system"] != "two_qutrit":
        raise ConfigError("gate.family", f"{fam} is a two-qubit gate, system is {d['system']}")
    if fam == "Rgeneral" and len(d["gate"]["angles"]) != 3:
        raise ConfigError("gate.angles", "Rgeneral needs three angles")
    if d["soma_bp"]["resample_per_iter"] and d["soma_bp"]["optimizer"] != "adam":
        raise ConfigError("soma_bp.resample_per_iter", "per-iteration resampling needs optimizer adam")
    rc = RunConfig(d, source)
    rc.qoc()  # parameter names checked against the system record
    return rc


def load(path, seed: int | None = None) -> RunConfig:
    """Read a YAML config (a path, or the name of a bundled config)."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        p = bundled_config(str(path))
    try:
        doc = yaml.safe_load(p.read_text())
    except OSError as exc:
        raise ConfigError("", f"cannot read {p}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("", f"not valid YAML: {exc}") from None
    return from_dict(doc, seed, str(p))

