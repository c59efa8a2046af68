"""Compositional radial-basis-function input warping.

A single RBF unit moves a point ``x`` radially with respect to a center
``gamma``::

    x_d <- x_d + w_d * (x_d - gamma_d) * exp(-||x - gamma||^2 / (2 a^2))

Positive weights push points away from the center along dimension ``d``,
negative weights pull them in. A :class:`WarpStack` applies its layers in
order, so ``layers[0]`` acts on the raw input.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import _accel
from .errors import ConstraintViolation

WEIGHT_LOW = -1.0
WEIGHT_HIGH = float(np.exp(1.5) / 2.0)


@dataclass
class RbfLayer:
    w: np.ndarray
    gamma: np.ndarray
    a: float

    def __post_init__(self):
        self.w = np.atleast_1d(np.asarray(self.w, dtype=float))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        self.a = float(self.a)

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    def validate(self):
        if self.gamma.shape != self.w.shape:
            raise ConstraintViolation("weights and center differ in dimension")
        if not np.all((self.w > WEIGHT_LOW) & (self.w < WEIGHT_HIGH)):
            raise ConstraintViolation(
                f"weights {self.w.tolist()} outside ({WEIGHT_LOW}, {WEIGHT_HIGH:.6f})"
            )
        if not np.all((self.gamma >= 0.0) & (self.gamma <= 1.0)):
            raise ConstraintViolation(f"center {self.gamma.tolist()} outside [0, 1]")
        if not (self.a > 0.0 and np.isfinite(self.a)):
            raise ConstraintViolation(f"scale a={self.a} must be positive")

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "gamma": self.gamma.tolist(), "a": self.a}


@dataclass
class WarpStack:
    dim: int
    layers: List[RbfLayer] = field(default_factory=list)

    def validate(self):
        if self.dim not in (1, 2):
            raise ConstraintViolation(f"warp dimension must be 1 or 2, got {self.dim}")
        for layer in self.layers:
            if layer.dim != self.dim:
                raise ConstraintViolation(
                    f"layer of dimension {layer.dim} in a {self.dim}-d stack"
                )
            layer.validate()

    @property
    def is_identity(self) -> bool:
        return not self.layers

    def __len__(self):
        return len(self.layers)


def _apply(stack: WarpStack, X: np.ndarray, check: bool) -> np.ndarray:
    if check:
        stack.validate()
    out = X
    for layer in stack.layers:
        out = _accel.rbf_layer(out, layer.w, layer.gamma, layer.a)
    return out


def warp_point(stack: WarpStack, x) -> np.ndarray:
    """Warp one ``D``-vector through every layer of ``stack``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("input point must be finite")
    return _apply(stack, x[None, :], check=True)[0]


def warp_batch(stack: WarpStack, X, check: bool = True) -> np.ndarray:
    """Warp each row of ``X`` (shape ``[n, D]``); a 1-D array is read as ``D=1``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        return X.copy()
    return _apply(stack, X, check)


def probe_injectivity(stack: WarpStack, grid_resolution: int = 100, step: float = 1e-6):
    """Scan the Jacobian determinant of the warp over ``[0, 1]^D``.

    The Jacobian is estimated by central differences at every node of a
    uniform grid with ``grid_resolution`` points per axis. Layer constraints
    are not enforced here, so deliberately invalid stacks can be probed.

    Returns
    -------
    ok : bool
        True when every determinant is strictly positive.
    min_det : float
        Smallest determinant found.
    """
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be at least 2")
    if stack.is_identity:
        return True, 1.0
    axis = np.linspace(0.0, 1.0, grid_resolution)
    D = stack.dim
    if D == 1:
        pts = axis[:, None]
    else:
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
    jac = np.empty((pts.shape[0], D, D))
    for k in range(D):
        e = np.zeros(D)
        e[k] = step
        fwd = warp_batch(stack, pts + e, check=False)
        bwd = warp_batch(stack, pts - e, check=False)
        jac[:, :, k] = (fwd - bwd) / (2.0 * step)
    dets = np.linalg.det(jac)
    min_det = float(dets.min())
    return bool(min_det > 0.0), min_det
