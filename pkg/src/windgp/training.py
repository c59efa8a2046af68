"""Multi-start Adam training, the modified BIC and model (de)serialization.

Gradient descent on warp weights cannot cross ``w = 0`` (the warp vanishes
and the likelihood is flat there), so every sign pattern of the initial
weights gets its own run and the run with the highest final likelihood wins.
"""

import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .data_panel import InputGrid
from .errors import AllStartsFailed, NotPositiveDefinite, WindGPError
from .inference import (
    _training_arrays,
    log_likelihood,
    value_and_gradient_dense,
    value_and_gradient_kron,
)
from .kernels import KernelSpec
from .params import (
    ModelConfig,
    ParameterVector,
    from_unconstrained,
    initial_theta,
    to_unconstrained,
)
from .warping import RbfLayer, WarpStack

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.05
    max_iters: int = 2000
    convergence_tol: float = 1e-7
    convergence_window: int = 20
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    restart_cap: int = 16
    gradient_mode: str = "hybrid"
    likelihood_path: str = "kron"
    threads: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.gradient_mode not in ("hybrid", "full_fd"):
            raise ValueError(f"unknown gradient mode {self.gradient_mode!r}")
        if self.likelihood_path not in ("kron", "dense"):
            raise ValueError(f"unknown likelihood path {self.likelihood_path!r}")
        if self.restart_cap < 1:
            raise ValueError("restart_cap must be at least 1")


@dataclass
class RestartResult:
    signs: tuple
    status: str
    loss: float
    iters: int
    u: Optional[np.ndarray] = None
    trace: List[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "signs": list(self.signs),
            "status": self.status,
            "loss": _fmt(self.loss),
            "iters": self.iters,
        }


@dataclass
class FittedModel:
    config: ModelConfig
    theta: ParameterVector
    grid: InputGrid
    training_loss: float
    bic: float
    n_days: int
    loss_trace: List[float] = field(default_factory=list)
    restarts: List[dict] = field(default_factory=list)
    seed: int = 0
    iters: int = 0
    site_ids: List[str] = field(default_factory=list)

    @property
    def log_likelihood(self) -> float:
        return -self.training_loss

    @property
    def spec(self) -> KernelSpec:
        return self.theta.spec

    @property
    def sigma2(self) -> float:
        return self.theta.sigma2


# ---------------------------------------------------------------------------
# BIC
# ---------------------------------------------------------------------------


def bic_value(loglik: float, n_kernel: int, n_spatial_warp: int, n_temporal_warp: int, M: int, T: int) -> float:
    """``-l + |wS| log(M)/2 + |wT| log(T)/2 + |k| log(MT)/2`` (natural logs)."""
    return (
        -loglik
        + n_spatial_warp * math.log(M) / 2.0
        + n_temporal_warp * math.log(T) / 2.0
        + n_kernel * math.log(M * T) / 2.0
    )


def modified_bic(model: FittedModel, M: int, T: int) -> float:
    """Modified BIC of a fitted model; the nugget counts as a kernel parameter."""
    sizes = model.config.group_sizes()
    return bic_value(model.log_likelihood, sizes["k"], sizes["wS"], sizes["wT"], M, T)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def sign_patterns(n_weights: int, cap: int, rng: np.random.Generator) -> List[tuple]:
    """All +/-1 patterns, or a seeded subset of ``cap`` of them when there are more."""
    patterns = list(itertools.product((-1, 1), repeat=n_weights))
    if len(patterns) > cap:
        keep = np.sort(rng.choice(len(patterns), size=cap, replace=False))
        patterns = [patterns[i] for i in keep]
    return patterns


def adam(value_and_grad, u0, opt: OptimizerConfig):
    """Maximize a log-likelihood with Adam.

    Returns ``(best_u, best_loss, iters, status, trace)`` where losses are
    negative log-likelihoods and ``trace`` holds one loss per iteration.
    """
    u = np.array(u0, dtype=float)
    m = np.zeros_like(u)
    v = np.zeros_like(u)
    b1, b2 = opt.adam_beta1, opt.adam_beta2
    trace: List[float] = []
    best_u, best_loss = u.copy(), math.inf
    status = "max_iters"
    for k in range(1, opt.max_iters + 1):
        try:
            ll, g = value_and_grad(u)
        except NotPositiveDefinite:
            if k == 1:
                raise
            status = "factorization_failed"
            break
        loss = -ll
        if not (np.isfinite(loss) and np.all(np.isfinite(g))):
            if k == 1:
                raise NotPositiveDefinite("non-finite likelihood at the starting point")
            status = "non_finite"
            break
        trace.append(loss)
        if loss < best_loss:
            best_loss, best_u = loss, u.copy()
        w = opt.convergence_window
        if len(trace) > w and abs(trace[-1 - w] - loss) <= opt.convergence_tol * max(abs(loss), 1.0):
            status = "converged"
            break
        grad = -g
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1**k)
        v_hat = v / (1.0 - b2**k)
        u = u - opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.adam_eps)
    burn = 10
    if len(trace) > 2 * burn and trace[-1] > trace[burn] + 1e-6 * max(abs(trace[burn]), 1.0):
        log.warning("Adam ended above its post-burn-in loss (%.6g > %.6g)", trace[-1], trace[burn])
    return best_u, best_loss, len(trace), status, trace


def _objective(config, grid, Y, opt: OptimizerConfig):
    if opt.gradient_mode == "hybrid":
        fn = value_and_gradient_kron if opt.likelihood_path == "kron" else value_and_gradient_dense

        def value_and_grad(u):
            return fn(u, config, grid, Y)

        return value_and_grad

    from .inference import loglik_dense, loglik_kron

    loglik = loglik_kron if opt.likelihood_path == "kron" else loglik_dense

    def value_and_grad_fd(u, h=1e-5):
        ll = loglik(from_unconstrained(u, config), grid, Y)
        g = np.empty_like(u)
        for j in range(u.size):
            up, dn = u.copy(), u.copy()
            up[j] += h
            dn[j] -= h
            g[j] = (loglik(from_unconstrained(up, config), grid, Y) - loglik(from_unconstrained(dn, config), grid, Y)) / (2 * h)
        return ll, g

    return value_and_grad_fd


def _run_start(signs, config, grid, Y, opt, variance):
    u0 = to_unconstrained(initial_theta(config, variance, signs), config)
    try:
        u, loss, iters, status, trace = adam(_objective(config, grid, Y, opt), u0, opt)
    except (NotPositiveDefinite, WindGPError) as exc:
        log.warning("start %s failed: %s", signs, exc)
        return RestartResult(tuple(signs), "failed", math.inf, 0)
    return RestartResult(tuple(signs), status, loss, iters, u, trace)


def fit(panel, config: ModelConfig, opt: OptimizerConfig = OptimizerConfig(), seed: int = 0) -> FittedModel:
    """Maximum-likelihood fit of ``config`` to the training days of ``panel``.

    ``panel`` is an ErrorPanel or a ``(grid, Y)`` tuple with ``Y`` shaped
    ``[N, M, T]``.
    """
    grid, Y = _training_arrays(panel)
    if Y.shape[0] == 0:
        raise ValueError("no training days")
    rng = np.random.default_rng(seed)
    patterns = sign_patterns(config.n_weights, opt.restart_cap, rng)
    variance = float(np.var(Y))
    if not variance > 0.0:
        raise ValueError("training errors have zero variance")

    def run(signs):
        return _run_start(signs, config, grid, Y, opt, variance)

    if opt.threads > 1 and len(patterns) > 1:
        with ThreadPoolExecutor(max_workers=opt.threads) as pool:
            results = list(pool.map(run, patterns))
    else:
        results = [run(p) for p in patterns]

    ok = [r for r in results if r.u is not None]
    if not ok:
        raise AllStartsFailed(f"all {len(results)} starts failed to factorize")
    best = min(ok, key=lambda r: r.loss)
    theta = from_unconstrained(best.u, config)
    # canonical value: recompute on the dense route from the stored parameters
    loglik = log_likelihood(theta, (grid, Y), path="dense")
    sizes = config.group_sizes()
    N, M, T = Y.shape
    site_ids = list(getattr(panel, "site_ids", []))
    return FittedModel(
        config=config,
        theta=theta,
        grid=grid,
        training_loss=-loglik,
        bic=bic_value(loglik, sizes["k"], sizes["wS"], sizes["wT"], M, T),
        n_days=N,
        loss_trace=best.trace,
        restarts=[r.summary() for r in results],
        seed=seed,
        iters=best.iters,
        site_ids=site_ids,
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _layers_out(stack: WarpStack):
    return [
        {"w": [_fmt(v) for v in layer.w], "gamma": [_fmt(v) for v in layer.gamma], "a": _fmt(layer.a)}
        for layer in stack.layers
    ]


def _layers_in(items, dim):
    return WarpStack(
        dim,
        [RbfLayer([float(v) for v in it["w"]], [float(v) for v in it["gamma"]], float(it["a"])) for it in items],
    )


def model_to_dict(model: FittedModel) -> dict:
    s = model.theta.spec
    g = model.grid
    return {
        "schema_version": SCHEMA_VERSION,
        "model_name": model.config.name,
        "kernel_families": {"spatial": s.spatial_family.value, "temporal": s.temporal_family.value},
        "architecture": {
            "n_spatial_layers": model.config.n_spatial_layers,
            "n_temporal_layers": model.config.n_temporal_layers,
            "periodic": model.config.periodic,
        },
        "theta_k": {
            "eta": _fmt(s.eta),
            "rho_s": _fmt(s.rho_s),
            "rho_t": _fmt(s.rho_t),
            "eta_p": _fmt(s.eta_p),
            "rho_p": _fmt(s.rho_p),
            "period": _fmt(s.period),
        },
        "sigma2": _fmt(model.theta.sigma2),
        "sigma": _fmt(math.sqrt(model.theta.sigma2)),
        "spatial_warp": _layers_out(s.spatial_warp),
        "temporal_warp": _layers_out(s.temporal_warp),
        "input_grid": {
            "spatial_coords": [[_fmt(a), _fmt(b)] for a, b in g.spatial_coords],
            "temporal_coords": [_fmt(t) for t in g.temporal_coords],
            "shift": [_fmt(v) for v in g.shift],
            "scale": _fmt(g.scale),
            "eps": _fmt(g.eps),
        },
        "site_ids": list(model.site_ids),
        "training": {
            "loss": _fmt(model.training_loss),
            "log_likelihood": _fmt(model.log_likelihood),
            "loss_per_day": _fmt(model.training_loss / model.n_days),
            "bic": _fmt(model.bic),
            "n_days": model.n_days,
            "iters": model.iters,
            "restarts": model.restarts,
            "seed": model.seed,
        },
    }


def model_from_dict(d: dict) -> FittedModel:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise WindGPError(f"unsupported model schema version {d.get('schema_version')!r}")
    arch = d["architecture"]
    config = ModelConfig(
        d["kernel_families"]["spatial"],
        int(arch["n_spatial_layers"]),
        int(arch["n_temporal_layers"]),
        d["kernel_families"]["temporal"],
        bool(arch["periodic"]),
    )
    tk = {k: float(v) for k, v in d["theta_k"].items()}
    spec = KernelSpec(
        tk["eta"],
        config.spatial_family,
        tk["rho_s"],
        config.temporal_family,
        tk["rho_t"],
        tk["eta_p"],
        tk["rho_p"],
        tk["period"],
        _layers_in(d["spatial_warp"], 2),
        _layers_in(d["temporal_warp"], 1),
    )
    theta = ParameterVector(spec, float(d["sigma2"]))
    gi = d["input_grid"]
    grid = InputGrid(
        np.array([[float(a), float(b)] for a, b in gi["spatial_coords"]]).reshape(-1, 2),
        np.array([float(t) for t in gi["temporal_coords"]]),
        np.array([float(v) for v in gi["shift"]]),
        float(gi["scale"]),
        float(gi["eps"]),
    )
    tr = d["training"]
    return FittedModel(
        config=config,
        theta=theta,
        grid=grid,
        training_loss=float(tr["loss"]),
        bic=float(tr["bic"]),
        n_days=int(tr["n_days"]),
        restarts=tr.get("restarts", []),
        seed=int(tr.get("seed", 0)),
        iters=int(tr.get("iters", 0)),
        site_ids=list(d.get("site_ids", [])),
    )


def save_model(model: FittedModel, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> FittedModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
