"""Pulse synthesis over a whole class of control problems.

Four strategies share one problem description (:class:`QocClass`):

* ``run_grape``: one problem, one pulse.
* ``robust_grape``: one pulse minimising the mean infidelity of ``L`` sampled problems.
* ``soma_sl``: solve sampled problems with GRAPE (warm-started from the
  centre solution), then regress pulse coefficients on the normalized
  problem parameters (network or linear model).
* ``soma_bp``: train the network directly on the mean infidelity of ``L``
  sampled problems by back-propagating through the dynamics.

All produce a *pulse model* with ``predict(lams) -> (n, K, M)`` which
:func:`evaluate_model` scores on test problems.
"""
from __future__ import annotations

import hashlib
import json
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import nn
from .controls import flat_to_km, km_to_flat
from .engine import DEFAULT_METHOD, Ensemble, nn_gradient
from .evalspace import ParameterSpace, normalize, sample_uniform
from .models import make_model, target_gate
from .optim import (
    LbfgsConfig,
    OptimResult,
    RestartPolicy,
    adam_minimize,
    lbfgs_minimize,
    random_restart,
)

log = logging.getLogger(__name__)

SL_FILTER_THRESHOLD = 1e-4
TEST_SEED_OFFSET = 1_000_003


class FailedSamples(RuntimeError):
    """Raised when every generated regression sample fails the GRAPE quality filter."""


# ---------------------------------------------------------------------------
# problem class


@dataclass
class QocClass:
    """A family of gate-synthesis problems indexed by the parameters of ``space``.

    Space names must be fields of the system's parameter record (e.g.
    ``delta, alpha, phi, theta, T`` for the qutrit). Parameters not in the
    space keep their record defaults; ``scale`` is always taken from here.
    The target angle is read from the record's ``theta`` unless
    ``angles`` is given.
    """

    system: str
    family: str
    space: ParameterSpace
    n_evo: int = 500
    K: int = 4
    scale: float = 0.01
    angles: tuple = ()
    bosonic: bool = True
    angular: bool = True
    method: str = DEFAULT_METHOD

    def __post_init__(self):
        self.model = make_model(self.system, self.bosonic, self.angular)
        allowed = set(self.model.params_cls.names()) - {"scale"}
        bad = [n for n in self.space.names if n not in allowed]
        if bad:
            raise ValueError(f"parameters {bad} are not fields of {self.model.params_cls.__name__}")

    @property
    def M(self) -> int:
        return self.model.n_controls

    @property
    def Q(self) -> int:
        return self.K * self.M

    def params(self, lam):
        kw = dict(zip(self.space.names, map(float, lam)))
        return self.model.params_cls(**kw, scale=self.scale) if "scale" in self.model.params_cls.names() \
            else self.model.params_cls(**kw)

    def target(self, p):
        if self.family in ("CNOT",):
            return target_gate(self.family, (), self.model.dim)
        angles = self.angles if self.angles else (p.theta,)
        return target_gate(self.family, angles, self.model.dim)

    def ensemble(self, lams) -> Ensemble:
        ps = [self.params(l) for l in np.atleast_2d(lams)]
        return Ensemble(self.model, ps, [self.target(p) for p in ps], self.n_evo, self.K, method=self.method)

    def center(self) -> np.ndarray:
        return self.space.center.copy()


# ---------------------------------------------------------------------------
# pulse models


class FixedPulseModel:
    """The same coefficients for every problem (single or robust GRAPE)."""

    def __init__(self, x):
        self.x = np.asarray(x, dtype=float)

    def predict(self, lams) -> np.ndarray:
        n = np.atleast_2d(lams).shape[0]
        return np.broadcast_to(self.x, (n,) + self.x.shape).copy()


class NetPulseModel:
    """``x = stats.denormalize(g(w, normalize(lam)))`` reshaped to ``(K, M)``."""

    def __init__(self, net: nn.Mlp, stats: nn.NormalizationStats, space: ParameterSpace, K: int, M: int):
        self.net, self.stats, self.space, self.K, self.M = net, stats, space, K, M

    def inputs(self, lams) -> np.ndarray:
        return np.array([normalize(self.space, l) for l in np.atleast_2d(lams)])

    def predict(self, lams) -> np.ndarray:
        out = nn.forward(self.net, self.inputs(lams))
        return flat_to_km(self.stats.denormalize(out), self.K, self.M)


class LinearPulseModel:
    """Affine least-squares map from normalized parameters to normalized coefficients."""

    def __init__(self, W, b, stats: nn.NormalizationStats, space: ParameterSpace, K: int, M: int):
        self.W, self.b = np.asarray(W), np.asarray(b)
        self.stats, self.space, self.K, self.M = stats, space, K, M

    @classmethod
    def fit(cls, inputs, targets_norm, stats, space, K, M) -> "LinearPulseModel":
        A = np.hstack([inputs, np.ones((inputs.shape[0], 1))])
        coef, *_ = np.linalg.lstsq(A, targets_norm, rcond=None)
        return cls(coef[:-1], coef[-1], stats, space, K, M)

    def predict(self, lams) -> np.ndarray:
        z = np.array([normalize(self.space, l) for l in np.atleast_2d(lams)])
        return flat_to_km(self.stats.denormalize(z @ self.W + self.b), self.K, self.M)

    def as_mlp(self) -> nn.Mlp:
        """The same map as a network without hidden layers (for the weight-file format)."""
        return nn.Mlp([self.W.shape[0], self.W.shape[1]], [self.W.copy()], [self.b.copy()])


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalResult:
    mean_infidelity: float
    std_infidelity: float
    infidelities: np.ndarray
    lams: np.ndarray

    @property
    def mean_fidelity(self) -> float:
        return 1.0 - self.mean_infidelity

    def records(self, names) -> list[dict]:
        return [{"lambda": dict(zip(names, map(float, l))), "infidelity": float(v)}
                for l, v in zip(self.lams, self.infidelities)]


def evaluate_model(model, qoc: QocClass, lams) -> EvalResult:
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    x = model.predict(lams)
    inf = 1.0 - qoc.ensemble(lams).fidelities(x)
    return EvalResult(float(inf.mean()), float(inf.std()), inf, lams)


def draw_test_set(qoc: QocClass, n: int = 1000, seed: int = 0) -> np.ndarray:
    """Uniform test problems drawn with a seed disjoint from training seeds."""
    return sample_uniform(qoc.space, n, seed + TEST_SEED_OFFSET)


# ---------------------------------------------------------------------------
# GRAPE


@dataclass
class GrapeResult:
    x: np.ndarray
    infidelity: float
    optim: OptimResult

    @property
    def f(self) -> float:
        return self.infidelity

    @property
    def n_iter(self) -> int:
        return self.optim.n_iter


def fd_oracle(f, h: float = 1e-6):
    """Objective with a central finite-difference gradient (for cross-checks)."""
    def oracle(x):
        x = np.asarray(x, dtype=float)
        g = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            g[i] = (f(x + e) - f(x - e)) / (2 * h)
        return f(x), g
    return oracle


def robust_grape(qoc: QocClass, lams, x0, cfg: LbfgsConfig = LbfgsConfig(), gradient: str = "analytic") -> GrapeResult:
    """Minimise ``1 - mean_i F(x, lam_i)`` with the averaged gradient.

    ``gradient="fd"`` swaps the analytic gradient for central differences.
    """
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    if lams.shape[0] < 1:
        raise ValueError("need at least one sample")
    ens = qoc.ensemble(lams)
    if gradient == "analytic":
        oracle = ens.mean_infidelity_and_grad
    elif gradient == "fd":
        oracle = fd_oracle(ens.mean_infidelity)
    else:
        raise ValueError(f"unknown gradient {gradient!r}")
    res = lbfgs_minimize(oracle, km_to_flat(np.asarray(x0, dtype=float)), cfg)
    return GrapeResult(flat_to_km(res.x, qoc.K, qoc.M), float(res.f), res)


def run_grape(qoc: QocClass, lam, x0, cfg: LbfgsConfig = LbfgsConfig(), gradient: str = "analytic") -> GrapeResult:
    """Single-problem GRAPE (the one-sample case of :func:`robust_grape`)."""
    return robust_grape(qoc, np.atleast_2d(lam), x0, cfg, gradient)


def random_guess(qoc: QocClass, seed: int, std: float = 1.0) -> np.ndarray:
    return np.random.default_rng(seed).normal(0.0, std, (qoc.K, qoc.M))


def grape_with_restarts(qoc: QocClass, lams, cfg: LbfgsConfig, policy: RestartPolicy,
                        init_std: float = 1.0, gradient: str = "analytic"):
    """Robust (or single, for one row) GRAPE from ``n_guesses`` random starts, lowest objective wins."""
    return random_restart(lambda s: robust_grape(qoc, lams, random_guess(qoc, s, init_std), cfg, gradient),
                          policy, metric=lambda r: r.infidelity)


# ---------------------------------------------------------------------------
# SOMA SL


@dataclass(frozen=True)
class SomaSlConfig:
    n_samples: int = 1000
    seed: int = 0
    warm_start: bool = True
    model: str = "mlp"
    filter_failed: bool = True
    filter_threshold: float = SL_FILTER_THRESHOLD
    holdout: float = 0.1
    loss: str = "mse"
    huber_delta: float = 1.0
    grape: LbfgsConfig = LbfgsConfig(max_iter=500)
    fit: LbfgsConfig = LbfgsConfig(max_iter=10000, grad_tol=1e-10)
    restart: RestartPolicy = RestartPolicy(5, 0, "test_infidelity")
    seed_restarts: int = 5
    init_std: float = 1.0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.model not in ("mlp", "linear"):
            raise ValueError(f"unknown model {self.model!r}")
        if not 0 <= self.holdout < 1:
            raise ValueError("holdout fraction must be in [0, 1)")


@dataclass
class SampleRecord:
    lam: np.ndarray
    x_star: np.ndarray
    infidelity: float
    iters: int
    seed: int

    def to_json(self, names) -> dict:
        return {
            "lambda": [float(v) for v in self.lam],
            "names": list(names),
            "x_star": [float(v) for v in km_to_flat(self.x_star)],
            "shape": list(self.x_star.shape),
            "infidelity": float(self.infidelity),
            "iters": int(self.iters),
            "seed": int(self.seed),
        }


@dataclass
class SomaResult:
    model: object
    stats: nn.NormalizationStats | None
    center_solution: GrapeResult | None = None
    dataset: list[SampleRecord] = field(default_factory=list)
    n_failed: int = 0
    selection_metrics: list[float] = field(default_factory=list)
    selected: int = 0
    trace: list = field(default_factory=list)


def _solve_sample(args) -> SampleRecord:
    qoc, lam, x0, cfg, s = args
    r = run_grape(qoc, lam, x0, cfg)
    return SampleRecord(lam, r.x, r.infidelity, r.n_iter, s)


def generate_dataset(qoc: QocClass, cfg: SomaSlConfig, x_seed, workers: int = 1) -> list[SampleRecord]:
    """GRAPE solutions for ``n_samples`` uniform problems.

    Every sample starts from ``x_seed`` (warm start) or from its own seeded
    random guess, so the records do not depend on evaluation order or on
    the number of worker processes.
    """
    lams = sample_uniform(qoc.space, cfg.n_samples, cfg.seed)
    jobs = []
    for i, lam in enumerate(lams):
        s = cfg.seed + 1 + i
        x0 = x_seed if cfg.warm_start else random_guess(qoc, s, cfg.init_std)
        jobs.append((qoc, lam, x0, cfg.grape, s))
    if workers <= 1 or len(jobs) < 2:
        return [_solve_sample(j) for j in jobs]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
        return list(ex.map(_solve_sample, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _split(n: int, frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 2 or frac == 0:
        idx = np.arange(n)
        return idx, idx
    perm = np.random.default_rng(seed).permutation(n)
    n_hold = max(1, int(round(frac * n)))
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def fit_regressor(qoc: QocClass, records: Sequence[SampleRecord], cfg: SomaSlConfig, net_shape):
    """Fit the SL model to ``records``; restarts are ranked by infidelity on a held-out split."""
    lams = np.array([r.lam for r in records])
    X = np.array([normalize(qoc.space, l) for l in lams])
    Y = np.array([km_to_flat(r.x_star) for r in records])
    tr, ho = _split(len(records), cfg.holdout, cfg.seed)
    stats = nn.NormalizationStats.fit(Y[tr], qoc.space.lo, qoc.space.hi)
    Z = stats.normalize(Y)
    if cfg.model == "linear":
        model = LinearPulseModel.fit(X[tr], Z[tr], stats, qoc.space, qoc.K, qoc.M)
        m = evaluate_model(model, qoc, lams[ho]).mean_infidelity
        return model, stats, [m], 0, []
    dims = [qoc.space.dim, *net_shape, qoc.Q]

    def trial(seed):
        net = nn.init_mlp(dims, seed)

        def oracle(theta):
            return nn.mse_loss_grad(nn.unflatten_params(net, theta), X[tr], Z[tr], cfg.loss, cfg.huber_delta)

        res = lbfgs_minimize(oracle, nn.flatten_params(net), cfg.fit)
        model = NetPulseModel(nn.unflatten_params(net, res.x), stats, qoc.space, qoc.K, qoc.M)
        model.test_infidelity = evaluate_model(model, qoc, lams[ho]).mean_infidelity
        model.train_objective = res.f
        model.trace = res.trace
        return model

    policy = RestartPolicy(cfg.restart.n_guesses, cfg.restart.seed, cfg.restart.selector)
    out = random_restart(trial, policy)
    return out.best, stats, out.metrics, out.index, out.best.trace


def soma_sl(qoc: QocClass, cfg: SomaSlConfig = SomaSlConfig(), net_shape=(256, 256), workers: int = 1) -> SomaResult:
    center = grape_with_restarts(qoc, qoc.center()[None], cfg.grape,
                                 RestartPolicy(cfg.seed_restarts, cfg.seed), cfg.init_std).best
    log.info("seed solution infidelity %.3e", center.infidelity)
    records = generate_dataset(qoc, cfg, center.x, workers)
    keep = [r for r in records if not (cfg.filter_failed and r.infidelity > cfg.filter_threshold)]
    n_failed = len(records) - len(keep)
    if n_failed:
        log.warning("%d of %d samples above %.0e infidelity excluded", n_failed, len(records), cfg.filter_threshold)
    if not keep:
        raise FailedSamples("every GRAPE sample failed the quality filter")
    model, stats, metrics, idx, trace = fit_regressor(qoc, keep, cfg, net_shape)
    return SomaResult(model, stats, center, records, n_failed, metrics, idx, trace)


# ---------------------------------------------------------------------------
# SOMA BP


@dataclass(frozen=True)
class SomaBpConfig:
    n_samples: int = 500
    seed: int = 0
    optimizer: str = "lbfgs"
    max_iter: int = 6000
    lbfgs: LbfgsConfig = LbfgsConfig(max_iter=6000, grad_tol=1e-10, f_tol=1e-14)
    adam_lr: float = 1e-3
    restart: RestartPolicy = RestartPolicy(5, 0, "test_infidelity")
    resample_per_iter: bool = False
    n_test: int = 1000
    output_std: float = 1.0
    max_wall_s: float | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.optimizer not in ("lbfgs", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.resample_per_iter and self.optimizer != "adam":
            raise ValueError("per-iteration resampling needs the stochastic optimizer (adam)")


def soma_bp(qoc: QocClass, cfg: SomaBpConfig = SomaBpConfig(), net_shape=(256, 256), test_lams=None) -> SomaResult:
    """Train ``g(w, lam)`` on ``1 - mean_i F(g(w, lam_i), lam_i)`` over ``n_samples`` problems.

    Network outputs are read as raw coefficients scaled by ``output_std``.
    Restarts use seeds ``restart.seed + i`` and are ranked by mean
    infidelity on ``test_lams`` (default: ``n_test`` fresh uniform problems).
    """
    lams = sample_uniform(qoc.space, cfg.n_samples, cfg.seed)
    if test_lams is None:
        test_lams = draw_test_set(qoc, cfg.n_test, cfg.seed)
    dims = [qoc.space.dim, *net_shape, qoc.Q]
    stats = nn.NormalizationStats(np.zeros(qoc.Q), np.full(qoc.Q, cfg.output_std), qoc.space.lo, qoc.space.hi)
    inputs = np.array([normalize(qoc.space, l) for l in lams])
    ens = qoc.ensemble(lams)

    def trial(seed):
        net = nn.init_mlp(dims, seed)
        if cfg.resample_per_iter:
            rng = np.random.default_rng(seed)

            def oracle(theta):
                batch = sample_uniform(qoc.space, cfg.n_samples, int(rng.integers(2**31)))
                z = np.array([normalize(qoc.space, l) for l in batch])
                return nn_gradient(nn.unflatten_params(net, theta), z, qoc.ensemble(batch), 0.0, cfg.output_std)
        else:
            def oracle(theta):
                return nn_gradient(nn.unflatten_params(net, theta), inputs, ens, 0.0, cfg.output_std)

        theta0 = nn.flatten_params(net)
        if cfg.optimizer == "lbfgs":
            lc = {f.name: getattr(cfg.lbfgs, f.name) for f in fields(LbfgsConfig)}
            lc.update(max_iter=cfg.max_iter, max_wall_s=cfg.max_wall_s)
            res = lbfgs_minimize(oracle, theta0, LbfgsConfig(**lc))
        else:
            res = adam_minimize(oracle, theta0, lr=cfg.adam_lr, max_iter=cfg.max_iter, max_wall_s=cfg.max_wall_s)
        model = NetPulseModel(nn.unflatten_params(net, res.x), stats, qoc.space, qoc.K, qoc.M)
        model.train_objective = res.f
        model.trace = res.trace
        model.test_infidelity = evaluate_model(model, qoc, test_lams).mean_infidelity
        log.info("restart seed %d: train %.3e test %.3e (%d it, %s)", seed, res.f,
                 model.test_infidelity, res.n_iter, res.message)
        return model

    out = random_restart(trial, cfg.restart)
    return SomaResult(out.best, stats, None, [], 0, out.metrics, out.index, out.best.trace)


# ---------------------------------------------------------------------------
# files


def config_hash(cfg) -> str:
    """SHA-256 of the canonical JSON form of a (nested) config mapping or dataclass."""
    if hasattr(cfg, "__dataclass_fields__"):
        cfg = asdict(cfg)
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(blob.encode()).hexdigest()


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def write_dataset_jsonl(path, records: Sequence[SampleRecord], names, extra: dict | None = None) -> None:
    """One JSON object per sample; ``extra`` keys (e.g. a config hash) go into every line."""
    with open(path, "w") as fh:
        for r in records:
            doc = r.to_json(names)
            if extra:
                doc.update(extra)
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


def read_dataset_jsonl(path) -> list[SampleRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            x = flat_to_km(np.asarray(d["x_star"], dtype=float), *d["shape"])
            out.append(SampleRecord(np.asarray(d["lambda"], dtype=float), x, d["infidelity"], d["iters"], d["seed"]))
    return out


def metrics_document(ev: EvalResult, seed: int, cfg) -> dict:
    return {
        "mean_infidelity": ev.mean_infidelity,
        "std_infidelity": ev.std_infidelity,
        "n_test": int(len(ev.infidelities)),
        "seed": int(seed),
        "config_hash": cfg if isinstance(cfg, str) else config_hash(cfg),
    }


def write_metrics(path, ev: EvalResult, seed: int, cfg, extra: dict | None = None) -> dict:
    doc = metrics_document(ev, seed, cfg)
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return doc


def std_bound_holds(doc: dict) -> bool:
    """``sigma^2 <= 1 - Fbar^2`` for a metrics document (``Fbar = 1 - mean infidelity``)."""
    fbar = 1.0 - doc["mean_infidelity"]
    return doc["std_infidelity"] ** 2 <= 1.0 - fbar**2 + 1e-15
