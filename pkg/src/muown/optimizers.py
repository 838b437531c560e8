"""Single-layer optimizer state machines and the multi-layer driver.

Six step kinds are provided:

* ``muown``        - direction momentum orthogonalized on the spectral ball
                     (simplified Nesterov mixing) plus a bias-corrected Adam
                     update on the row-magnitude vector; the effective weight
                     is recomposed every step.
* ``muown_fixed``  - same direction update, row magnitudes frozen at their
                     initial values (no magnitude states at all).
* ``muown_signum`` - the analysis-friendly variant: no Nesterov mixing, no
                     RMS-matching step scale, sign descent on the magnitudes
                     with its own stepsize ``gamma``, momenta initialized to
                     the first gradient.
* ``muon``         - spectral steepest descent on the raw weight with
                     simplified Nesterov momentum and decoupled weight decay.
* ``adamw``        - textbook bias-corrected AdamW (used for 1-D parameters).
* ``signum``       - EMA momentum buffer + sign step + decoupled decay
                     (equals SignSGD at beta1 = 0).

Every step function is pure: it returns a fresh state and never mutates its
inputs, which is what makes per-layer execution order irrelevant and the
sharded/replicated equivalence exact.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .errors import NonFiniteError, StepAllError, ZeroRowError
from .linalg import as_matrix, row_norms
from .orthogonalize import DEFAULT_NS, NSConfig, descent_direction
from .reparam import EPS_ROW, grad_R, grad_g
from .serialize import read_record, write_record


@dataclass(frozen=True)
class HyperParams:
    """Per-step hyperparameters; ``eta`` is the (possibly schedule-driven) rate."""

    eta: float
    weight_decay: float = 0.0
    beta1: float = 0.95
    adam_beta1: float = 0.9
    adam_beta2: float = 0.95
    adam_eps: float = 1e-8
    ns: NSConfig = field(default_factory=lambda: DEFAULT_NS)
    rms_scale_on: bool = True
    backend: str = "ns"
    gamma: Optional[float] = None  # magnitude stepsize for muown_signum; eta if None

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive and finite, got {self.eta}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not 0.0 <= self.adam_beta1 < 1.0:
            raise ValueError(f"adam_beta1 must be in [0, 1), got {self.adam_beta1}")
        if not self.adam_beta1 < self.adam_beta2 < 1.0:
            raise ValueError(
                f"adam_beta2 must lie in (adam_beta1, 1), got {self.adam_beta2}"
            )
        if self.adam_eps <= 0:
            raise ValueError(f"adam_eps must be positive, got {self.adam_eps}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive when given, got {self.gamma}")
        if self.backend not in ("polar", "ns"):
            raise ValueError(f"backend must be 'polar' or 'ns', got {self.backend!r}")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["ns"] = {"steps": self.ns.steps, "coeffs": list(self.ns.coeffs)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        d = dict(d)
        ns = d.get("ns")
        if isinstance(ns, dict):
            d["ns"] = NSConfig(steps=int(ns["steps"]), coeffs=tuple(ns["coeffs"]))
        return cls(**d)


def rms_match_scale(shape) -> float:
    """The 0.2 * sqrt(max(m, n)) factor matching a typical Adam update's RMS norm."""
    m, n = shape
    return 0.2 * math.sqrt(max(m, n))


# --------------------------------------------------------------------------
# layer states


@dataclass(frozen=True)
class MuownState:
    param: np.ndarray  # effective weight W, the only model-visible tensor
    g: np.ndarray      # signed row magnitudes, |g| = ||W||_row
    r: np.ndarray      # cached row norms of the direction carrier R
    M: np.ndarray      # direction momentum
    m_g: np.ndarray    # Adam first moment of g
    v_g: np.ndarray    # Adam second moment of g
    t: int = 0


@dataclass(frozen=True)
class MuownFixedState:
    param: np.ndarray
    g: np.ndarray
    r: np.ndarray
    M: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class MuownSignumState:
    param: np.ndarray
    g: np.ndarray
    r: np.ndarray
    M: Optional[np.ndarray] = None  # None until the first step (init to first grad)
    m: Optional[np.ndarray] = None
    t: int = 0


@dataclass(frozen=True)
class MuonState:
    param: np.ndarray
    M: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class AdamWState:
    param: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class SignumState:
    param: np.ndarray
    m: np.ndarray
    t: int = 0


def _check_rows(v: np.ndarray) -> np.ndarray:
    bad = np.abs(v) <= EPS_ROW
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ZeroRowError(i, float(v[i]))
    return v


def _checked(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains NaN/Inf")
    return arr


def _init_magnitudes(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = as_matrix(w)
    r = _check_rows(row_norms(w))
    return r.copy(), r


def init_muown(w) -> MuownState:
    g, r = _init_magnitudes(w)
    m = np.asarray(w, dtype=np.float64)
    zeros_v = np.zeros_like(g)
    return MuownState(param=m.copy(), g=g, r=r, M=np.zeros_like(m),
                      m_g=zeros_v, v_g=zeros_v.copy(), t=0)


def init_muown_fixed(w) -> MuownFixedState:
    g, r = _init_magnitudes(w)
    m = np.asarray(w, dtype=np.float64)
    return MuownFixedState(param=m.copy(), g=g, r=r, M=np.zeros_like(m), t=0)


def init_muown_signum(w) -> MuownSignumState:
    g, r = _init_magnitudes(w)
    return MuownSignumState(param=np.asarray(w, dtype=np.float64).copy(), g=g, r=r)


def init_muon(w) -> MuonState:
    m = as_matrix(w)
    return MuonState(param=m.copy(), M=np.zeros_like(m), t=0)


def init_adamw(p) -> AdamWState:
    p = np.asarray(p, dtype=np.float64)
    return AdamWState(param=p.copy(), m=np.zeros_like(p), v=np.zeros_like(p), t=0)


def init_signum(p) -> SignumState:
    p = np.asarray(p, dtype=np.float64)
    return SignumState(param=p.copy(), m=np.zeros_like(p), t=0)


# --------------------------------------------------------------------------
# single-layer steps


def _reparam_grads(state, grad_w):
    """Reconstruct (R, D) from stored (W, g, r) and split the raw gradient."""
    _check_rows(state.g)
    _check_rows(state.r)
    R = (state.r / state.g)[:, None] * state.param
    D = R / state.r[:, None]
    gg = grad_g(grad_w, D)
    gR = grad_R(grad_w, state.g, state.r, D)
    return R, D, gg, gR


def muown_step(state: MuownState, grad_w, hp: HyperParams) -> MuownState:
    """One step: orthogonalized momentum on the direction, Adam on the magnitudes.

    Order of operations: reconstruct the carrier, split the gradient, update
    the direction momentum and take the spectral-ball step (optionally scaled
    by 0.2*sqrt(max(m, n))), run bias-corrected Adam on g, recompute the
    carrier row norms, and recompose the effective weight. With decoupled
    weight decay the recomposition subtracts eta*lambda*W_old and g is
    refreshed to the new row norms so the |g| = ||W||_row invariant survives.
    """
    grad_w = _checked(as_matrix(grad_w), "gradient")
    if grad_w.shape != state.param.shape:
        raise ValueError(f"gradient shape {grad_w.shape} != weight shape {state.param.shape}")
    R, D, gg, gR = _reparam_grads(state, grad_w)

    M = hp.beta1 * state.M + gR
    O = descent_direction(hp.beta1 * M + gR, hp.backend, hp.ns)
    scale = rms_match_scale(state.param.shape) if hp.rms_scale_on else 1.0
    R = R + (scale * hp.eta) * O

    t = state.t + 1
    m_g = hp.adam_beta1 * state.m_g + (1.0 - hp.adam_beta1) * gg
    v_g = hp.adam_beta2 * state.v_g + (1.0 - hp.adam_beta2) * (gg * gg)
    mhat = m_g / (1.0 - hp.adam_beta1 ** t)
    vhat = v_g / (1.0 - hp.adam_beta2 ** t)
    g = state.g - hp.eta * mhat / (np.sqrt(vhat) + hp.adam_eps)

    r = _check_rows(row_norms(R))
    if hp.weight_decay == 0.0:
        w_new = (g / r)[:, None] * R
    else:
        w_new = (g / r)[:, None] * R - (hp.eta * hp.weight_decay) * state.param
        g = _check_rows(row_norms(w_new))
    _checked(w_new, "updated weight")
    return MuownState(param=w_new, g=g, r=r, M=M, m_g=m_g, v_g=v_g, t=t)


def muown_fixed_step(state: MuownFixedState, grad_w, hp: HyperParams) -> MuownFixedState:
    """Muown with row magnitudes frozen at initialization (g never changes)."""
    if hp.weight_decay != 0.0:
        raise ValueError("weight decay would unfreeze the row magnitudes; "
                         "muown_fixed requires weight_decay == 0")
    grad_w = _checked(as_matrix(grad_w), "gradient")
    if grad_w.shape != state.param.shape:
        raise ValueError(f"gradient shape {grad_w.shape} != weight shape {state.param.shape}")
    R, D, gg, gR = _reparam_grads(state, grad_w)

    M = hp.beta1 * state.M + gR
    O = descent_direction(hp.beta1 * M + gR, hp.backend, hp.ns)
    scale = rms_match_scale(state.param.shape) if hp.rms_scale_on else 1.0
    R = R + (scale * hp.eta) * O

    r = _check_rows(row_norms(R))
    w_new = (state.g / r)[:, None] * R
    _checked(w_new, "updated weight")
    return MuownFixedState(param=w_new, g=state.g, r=r, M=M, t=state.t + 1)


def muown_signum_step(state: MuownSignumState, grad_w, hp: HyperParams) -> MuownSignumState:
    """The sign-descent variant used by the convergence analysis.

    Momentum buffers start at the first gradient rather than zero; the
    direction step has no Nesterov mixing and no RMS-matching factor; the
    magnitude step is g <- g - gamma * sgn(m) with sgn(0) = 0.
    """
    grad_w = _checked(as_matrix(grad_w), "gradient")
    if grad_w.shape != state.param.shape:
        raise ValueError(f"gradient shape {grad_w.shape} != weight shape {state.param.shape}")
    R, D, gg, gR = _reparam_grads(state, grad_w)

    M_prev = gR if state.M is None else state.M
    m_prev = gg if state.m is None else state.m
    M = hp.beta1 * M_prev + gR
    O = descent_direction(M, hp.backend, hp.ns)
    R = R + hp.eta * O

    m = hp.beta1 * m_prev + gg
    gamma = hp.eta if hp.gamma is None else hp.gamma
    g = state.g - gamma * np.sign(m)

    r = _check_rows(row_norms(R))
    if hp.weight_decay == 0.0:
        w_new = (g / r)[:, None] * R
    else:
        w_new = (g / r)[:, None] * R - (hp.eta * hp.weight_decay) * state.param
        g = _check_rows(row_norms(w_new))
    _checked(w_new, "updated weight")
    return MuownSignumState(param=w_new, g=g, r=r, M=M, m=m, t=state.t + 1)


def muon_step(state: MuonState, grad_w, hp: HyperParams) -> MuonState:
    """Spectral steepest descent with simplified Nesterov momentum."""
    grad_w = _checked(as_matrix(grad_w), "gradient")
    if grad_w.shape != state.param.shape:
        raise ValueError(f"gradient shape {grad_w.shape} != weight shape {state.param.shape}")
    M = hp.beta1 * state.M + grad_w
    O = descent_direction(hp.beta1 * M + grad_w, hp.backend, hp.ns)
    scale = rms_match_scale(state.param.shape) if hp.rms_scale_on else 1.0
    w_new = state.param + (scale * hp.eta) * O - (hp.eta * hp.weight_decay) * state.param
    _checked(w_new, "updated weight")
    return MuonState(param=w_new, M=M, t=state.t + 1)


def adamw_step(state: AdamWState, grad, hp: HyperParams) -> AdamWState:
    """Bias-corrected AdamW with decoupled weight decay; any parameter shape."""
    grad = _checked(np.asarray(grad, dtype=np.float64), "gradient")
    if grad.shape != state.param.shape:
        raise ValueError(f"gradient shape {grad.shape} != param shape {state.param.shape}")
    t = state.t + 1
    m = hp.adam_beta1 * state.m + (1.0 - hp.adam_beta1) * grad
    v = hp.adam_beta2 * state.v + (1.0 - hp.adam_beta2) * (grad * grad)
    mhat = m / (1.0 - hp.adam_beta1 ** t)
    vhat = v / (1.0 - hp.adam_beta2 ** t)
    p = state.param - hp.eta * mhat / (np.sqrt(vhat) + hp.adam_eps) \
        - (hp.eta * hp.weight_decay) * state.param
    _checked(p, "updated param")
    return AdamWState(param=p, m=m, v=v, t=t)


def signum_step(state: SignumState, grad, hp: HyperParams) -> SignumState:
    """EMA momentum + sign step (SignSGD when beta1 = 0) + decoupled decay."""
    grad = _checked(np.asarray(grad, dtype=np.float64), "gradient")
    if grad.shape != state.param.shape:
        raise ValueError(f"gradient shape {grad.shape} != param shape {state.param.shape}")
    m = hp.beta1 * state.m + (1.0 - hp.beta1) * grad
    p = state.param - hp.eta * np.sign(m) - (hp.eta * hp.weight_decay) * state.param
    _checked(p, "updated param")
    return SignumState(param=p, m=m, t=state.t + 1)


# --------------------------------------------------------------------------
# multi-layer driver

INIT_FNS = {
    "muown": init_muown,
    "muown_fixed": init_muown_fixed,
    "muown_signum": init_muown_signum,
    "muon": init_muon,
    "adamw": init_adamw,
    "signum": init_signum,
}

STEP_FNS = {
    "muown": muown_step,
    "muown_fixed": muown_fixed_step,
    "muown_signum": muown_signum_step,
    "muon": muon_step,
    "adamw": adamw_step,
    "signum": signum_step,
}

MATRIX_KINDS = ("muown", "muown_fixed", "muown_signum", "muon")


@dataclass(frozen=True)
class Layer:
    name: str
    kind: str
    state: object


def init_layers(named_params, matrix_kind: str = "muown",
                vector_kind: str = "adamw") -> list[Layer]:
    """Route (name, array) pairs: 2-D params to ``matrix_kind``, 1-D to ``vector_kind``."""
    if matrix_kind not in INIT_FNS:
        raise ValueError(f"unknown optimizer kind {matrix_kind!r}")
    layers = []
    for name, arr in named_params:
        arr = np.asarray(arr, dtype=np.float64)
        kind = matrix_kind if arr.ndim == 2 else vector_kind
        layers.append(Layer(name=name, kind=kind, state=INIT_FNS[kind](arr)))
    return layers


def step_layer(layer: Layer, grad, hp: HyperParams) -> Layer:
    return replace(layer, state=STEP_FNS[layer.kind](layer.state, grad, hp))


def step_all(layers, grads, hp: HyperParams) -> list[Layer]:
    """Step every layer in declaration order; failures are aggregated by index."""
    if len(grads) != len(layers):
        raise ValueError(f"{len(grads)} gradients for {len(layers)} layers")
    out: list[Layer | None] = [None] * len(layers)
    failures = []
    for i, (layer, grad) in enumerate(zip(layers, grads)):
        try:
            out[i] = step_layer(layer, grad, hp)
        except Exception as exc:  # noqa: BLE001 - aggregated and re-raised
            failures.append((i, exc))
    if failures:
        raise StepAllError(failures)
    return out  # type: ignore[return-value]


def params_of(layers) -> list[np.ndarray]:
    return [layer.state.param for layer in layers]


# --------------------------------------------------------------------------
# checkpointing: one .mwn1 file of records per layer plus a JSON sidecar


def _state_tensors(state) -> list[tuple[str, Optional[np.ndarray]]]:
    out = []
    for f in fields(state):
        val = getattr(state, f.name)
        if f.name == "t":
            continue
        out.append((f.name, val))
    return out


def save_checkpoint(dirpath, layers, hp: HyperParams) -> None:
    os.makedirs(dirpath, exist_ok=True)
    for i, layer in enumerate(layers):
        stem = f"layer{i:03d}_{layer.name}"
        tensors = _state_tensors(layer.state)
        with open(os.path.join(dirpath, stem + ".mwn1"), "wb") as fh:
            for _, val in tensors:
                if val is not None:
                    write_record(fh, val)
        sidecar = {
            "kind": layer.kind,
            "name": layer.name,
            "t": layer.state.t,
            "hyperparams": hp.to_dict(),
            "tensors": [
                {"name": nm, "ndim": (None if v is None else int(v.ndim))}
                for nm, v in tensors
            ],
        }
        with open(os.path.join(dirpath, stem + ".json"), "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)


_STATE_TYPES = {
    "muown": MuownState,
    "muown_fixed": MuownFixedState,
    "muown_signum": MuownSignumState,
    "muon": MuonState,
    "adamw": AdamWState,
    "signum": SignumState,
}


def load_checkpoint(dirpath) -> tuple[list[Layer], dict]:
    stems = sorted(
        f[:-5] for f in os.listdir(dirpath)
        if f.endswith(".json") and f.startswith("layer")
    )
    layers = []
    hp_dict: dict = {}
    for stem in stems:
        with open(os.path.join(dirpath, stem + ".json")) as fh:
            meta = json.load(fh)
        hp_dict = meta["hyperparams"]
        values = {}
        with open(os.path.join(dirpath, stem + ".mwn1"), "rb") as fh:
            for spec in meta["tensors"]:
                if spec["ndim"] is None:
                    values[spec["name"]] = None
                    continue
                rec = read_record(fh)
                values[spec["name"]] = rec.ravel() if spec["ndim"] == 1 else rec
        state = _STATE_TYPES[meta["kind"]](t=meta["t"], **values)
        layers.append(Layer(name=meta["name"], kind=meta["kind"], state=state))
    return layers, hp_dict
