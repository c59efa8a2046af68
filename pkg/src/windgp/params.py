"""Model architecture, the trainable parameter vector and its reparameterization.

Unconstrained coordinates: positives go through ``log``; warp weights through
a logistic squashed onto ``(-1, e^1.5 / 2)``; warp centers through a logistic
onto ``(0, 1)``.

Packing order: ``eta, rho_s, rho_t, [eta_p, rho_p, period]``, then five
entries ``w1, w2, g1, g2, a`` per spatial layer, three entries ``w, g, a``
per temporal layer, and ``sigma2`` last.
"""

import re
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.special import expit, logit

from .errors import ConstraintViolation
from .kernels import KernelFamily, KernelSpec
from .warping import WEIGHT_HIGH, WEIGHT_LOW, RbfLayer, WarpStack

MAX_SPATIAL_LAYERS = 3
MAX_TEMPORAL_LAYERS = 1

# initial weights sit at the midpoint of each half-domain
WEIGHT_INIT_NEG = WEIGHT_LOW / 2.0
WEIGHT_INIT_POS = WEIGHT_HIGH / 2.0


@dataclass(frozen=True)
class ModelConfig:
    spatial_family: KernelFamily = KernelFamily.SE
    n_spatial_layers: int = 0
    n_temporal_layers: int = 0
    temporal_family: KernelFamily = KernelFamily.M32
    periodic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "spatial_family", KernelFamily(self.spatial_family))
        object.__setattr__(self, "temporal_family", KernelFamily(self.temporal_family))
        if not 0 <= self.n_spatial_layers <= MAX_SPATIAL_LAYERS:
            raise ValueError(f"spatial layers must be in 0..{MAX_SPATIAL_LAYERS}")
        if not 0 <= self.n_temporal_layers <= MAX_TEMPORAL_LAYERS:
            raise ValueError(f"temporal layers must be in 0..{MAX_TEMPORAL_LAYERS}")

    @property
    def name(self) -> str:
        return f"{self.spatial_family.value}-{self.n_spatial_layers}-{self.n_temporal_layers}"

    @classmethod
    def from_name(cls, name: str, periodic: bool = True, temporal_family="M32") -> "ModelConfig":
        """Parse ``FAMILY-lS-lT`` names such as ``M12-2-1``."""
        m = re.fullmatch(r"(M12|M32|M52|SE)-(\d)-(\d)", name.strip().upper())
        if m is None:
            raise ValueError(f"model name {name!r} is not of the form FAM-lS-lT")
        return cls(m.group(1), int(m.group(2)), int(m.group(3)), temporal_family, periodic)

    @property
    def n_weights(self) -> int:
        return 2 * self.n_spatial_layers + self.n_temporal_layers

    def layout(self) -> List[Tuple[str, str, str]]:
        """``(name, transform, group)`` per trainable entry; groups are ``k``, ``wS``, ``wT``."""
        out = [("eta", "pos", "k"), ("rho_s", "pos", "k"), ("rho_t", "pos", "k")]
        if self.periodic:
            out += [("eta_p", "pos", "k"), ("rho_p", "pos", "k"), ("period", "pos", "k")]
        for i in range(self.n_spatial_layers):
            out += [
                (f"s{i}.w1", "weight", "wS"),
                (f"s{i}.w2", "weight", "wS"),
                (f"s{i}.g1", "center", "wS"),
                (f"s{i}.g2", "center", "wS"),
                (f"s{i}.a", "pos", "wS"),
            ]
        for i in range(self.n_temporal_layers):
            out += [(f"t{i}.w", "weight", "wT"), (f"t{i}.g", "center", "wT"), (f"t{i}.a", "pos", "wT")]
        out.append(("sigma2", "pos", "k"))
        return out

    @property
    def n_params(self) -> int:
        return len(self.layout())

    def group_sizes(self) -> dict:
        sizes = {"k": 0, "wS": 0, "wT": 0}
        for _, _, g in self.layout():
            sizes[g] += 1
        return sizes

    def param_kind(self) -> List[str]:
        """Which covariance factor each entry perturbs: eta, spatial, temporal or noise."""
        kinds = []
        for name, _, _ in self.layout():
            if name == "eta":
                kinds.append("eta")
            elif name == "sigma2":
                kinds.append("noise")
            elif name == "rho_s" or name.startswith("s"):
                kinds.append("spatial")
            else:
                kinds.append("temporal")
        return kinds


@dataclass
class ParameterVector:
    """Kernel hyperparameters (including warps) plus the nugget variance."""

    spec: KernelSpec
    sigma2: float

    def validate(self):
        self.spec.validate()
        if not (self.sigma2 > 0.0 and np.isfinite(self.sigma2)):
            raise ConstraintViolation(f"sigma2={self.sigma2} must be positive")


def pack(theta: ParameterVector, config: ModelConfig) -> np.ndarray:
    """Constrained values in layout order."""
    s = theta.spec
    vals = [s.eta, s.rho_s, s.rho_t]
    if config.periodic:
        vals += [s.eta_p, s.rho_p, s.period]
    if len(s.spatial_warp) != config.n_spatial_layers or len(s.temporal_warp) != config.n_temporal_layers:
        raise ConstraintViolation("warp stacks do not match the model architecture")
    for layer in s.spatial_warp.layers:
        vals += [layer.w[0], layer.w[1], layer.gamma[0], layer.gamma[1], layer.a]
    for layer in s.temporal_warp.layers:
        vals += [layer.w[0], layer.gamma[0], layer.a]
    vals.append(theta.sigma2)
    return np.array(vals, dtype=float)


def unpack(values: np.ndarray, config: ModelConfig) -> ParameterVector:
    v = list(map(float, values))
    eta, rho_s, rho_t = v[:3]
    i = 3
    eta_p, rho_p, period = 0.0, 1.0, 0.5
    if config.periodic:
        eta_p, rho_p, period = v[3:6]
        i = 6
    s_layers = []
    for _ in range(config.n_spatial_layers):
        w1, w2, g1, g2, a = v[i : i + 5]
        s_layers.append(RbfLayer([w1, w2], [g1, g2], a))
        i += 5
    t_layers = []
    for _ in range(config.n_temporal_layers):
        w, g, a = v[i : i + 3]
        t_layers.append(RbfLayer([w], [g], a))
        i += 3
    spec = KernelSpec(
        eta,
        config.spatial_family,
        rho_s,
        config.temporal_family,
        rho_t,
        eta_p,
        rho_p,
        period,
        WarpStack(2, s_layers),
        WarpStack(1, t_layers),
    )
    return ParameterVector(spec, v[i])


def _forward(x: float, kind: str) -> float:
    if kind == "pos":
        if not x > 0.0:
            raise ConstraintViolation(f"value {x} must be positive")
        return float(np.log(x))
    if kind == "weight":
        if not WEIGHT_LOW < x < WEIGHT_HIGH:
            raise ConstraintViolation(f"weight {x} outside the open injectivity interval")
        return float(logit((x - WEIGHT_LOW) / (WEIGHT_HIGH - WEIGHT_LOW)))
    if not 0.0 < x < 1.0:
        raise ConstraintViolation(f"center {x} must lie strictly inside (0, 1) to reparameterize")
    return float(logit(x))


def _backward(u: np.ndarray, kinds: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    pos = kinds == "pos"
    wt = kinds == "weight"
    ce = kinds == "center"
    out[pos] = np.exp(u[pos])
    out[wt] = WEIGHT_LOW + (WEIGHT_HIGH - WEIGHT_LOW) * expit(u[wt])
    out[ce] = expit(u[ce])
    return out


def to_unconstrained(theta: ParameterVector, config: ModelConfig) -> np.ndarray:
    values = pack(theta, config)
    return np.array([_forward(x, kind) for x, (_, kind, _) in zip(values, config.layout())])


def from_unconstrained(u, config: ModelConfig) -> ParameterVector:
    kinds = np.array([kind for _, kind, _ in config.layout()])
    u = np.asarray(u, dtype=float)
    if u.shape != kinds.shape:
        raise ValueError(f"expected {kinds.size} unconstrained values, got {u.shape}")
    return unpack(_backward(u, kinds), config)


def initial_theta(config: ModelConfig, sample_variance: float, signs=()) -> ParameterVector:
    """Starting point for one restart.

    ``signs`` holds one +1/-1 per warp weight (spatial layers first); each
    weight starts at the midpoint of the matching half of its domain.
    """
    signs = list(signs)
    if len(signs) != config.n_weights:
        raise ValueError(f"need {config.n_weights} weight signs, got {len(signs)}")
    w0 = [WEIGHT_INIT_POS if s > 0 else WEIGHT_INIT_NEG for s in signs]
    s_layers = [
        RbfLayer(w0[2 * i : 2 * i + 2], [0.5, 0.5], 0.25) for i in range(config.n_spatial_layers)
    ]
    off = 2 * config.n_spatial_layers
    t_layers = [RbfLayer([w0[off + i]], [0.5], 0.25) for i in range(config.n_temporal_layers)]
    spec = KernelSpec(
        eta=sample_variance,
        spatial_family=config.spatial_family,
        rho_s=0.2,
        temporal_family=config.temporal_family,
        rho_t=0.2,
        eta_p=0.1 if config.periodic else 0.0,
        rho_p=1.0,
        period=0.5,
        spatial_warp=WarpStack(2, s_layers),
        temporal_warp=WarpStack(1, t_layers),
    )
    return ParameterVector(spec, 0.1 * sample_variance)
