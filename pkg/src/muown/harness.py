"""Experiment runner: presets, CSV/JSON logging, and claim checkers.

Every run is a pure function of (config, seed): model init, data, batch
order, and optimizer arithmetic all come from the deterministic streams in
:mod:`muown.rng`, so rerunning a preset reproduces its ``log.csv`` byte for
byte. Presets write three artifacts into the output directory: ``log.csv``
(per-step series, schema-versioned), ``summary.json``, and ``verdict.json``
(machine-readable pass/fail per assertion).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import models
from .diagnostics import dual_norm, noise_coefficients, spectral_decomposition
from .errors import ConfigError, NonFiniteError, StepAllError, ZeroRowError
from .linalg import row_norms, singular_values, vec_l1, nuclear_norm
from .models import Batch, ModelSpec, ParamSet, loss_and_grad
from .optimizers import (
    HyperParams,
    Layer,
    MATRIX_KINDS,
    init_layers,
    save_checkpoint,
    step_all,
)
from .orthogonalize import NSConfig
from .reparam import init_view, view_from_state, grad_g, grad_R
from .schedule import ScheduleSpec, eta_at

CSV_SCHEMA_LINE = "#schema=1"
DIVERGENCE_LOSS = 1e12

PRESETS = ("single", "drift", "rate-check", "noise-compare", "lr-sweep")

_DEFAULT_DIMS = {"d_in": 6, "hidden": 8, "d_out": 4}


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "single"
    seed: int = 0
    steps: int = 200
    log_every: int = 1
    checkpoint_every: int = 0
    model_kind: str = "mlp2"
    model_dims: dict = field(default_factory=lambda: dict(_DEFAULT_DIMS))
    num_batches: int = 8
    batch_size: int = 16
    optimizer_kind: str = "muown"
    hp: HyperParams = field(default_factory=lambda: HyperParams(eta=0.02))
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    rate_horizons: tuple[int, ...] = (100, 400, 1600)
    sweep_log2_min: int = -16
    sweep_log2_max: int = -5
    sweep_optimizers: tuple[str, ...] = ("muown", "muon", "adamw")
    noise_checkpoints: int = 4

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {self.preset!r}; choose from {PRESETS}")
        if self.steps < 1:
            raise ConfigError(f"steps: must be >= 1, got {self.steps}")
        if self.log_every < 1:
            raise ConfigError(f"log_every: must be >= 1, got {self.log_every}")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every: must be >= 0")
        if self.model_kind not in models.MODEL_KINDS:
            raise ConfigError(f"model.kind: unknown kind {self.model_kind!r}")
        if self.optimizer_kind not in MATRIX_KINDS and self.optimizer_kind != "adamw" \
                and self.optimizer_kind != "signum":
            raise ConfigError(f"optimizer.kind: unknown kind {self.optimizer_kind!r}")
        if self.num_batches < 1 or self.batch_size < 1:
            raise ConfigError("model.num_batches and model.batch_size must be >= 1")
        if self.sweep_log2_max < self.sweep_log2_min:
            raise ConfigError("lr_sweep: log2_max must be >= log2_min")
        if self.noise_checkpoints < 1:
            raise ConfigError("noise.checkpoints: must be >= 1")
        for kind in self.sweep_optimizers:
            if kind not in MATRIX_KINDS + ("adamw", "signum"):
                raise ConfigError(f"lr_sweep.optimizers: unknown kind {kind!r}")
        required_dims = {"quadratic": ("m", "n"), "logistic": ("features",),
                         "mlp2": ("d_in", "hidden", "d_out")}[self.model_kind]
        missing = [k for k in required_dims if k not in self.model_dims]
        if missing:
            raise ConfigError(
                f"model.dims: missing {missing} for kind {self.model_kind!r}")


def config_from_dict(raw: dict, preset: Optional[str] = None) -> ExperimentConfig:
    """Validate a nested config dict (the JSON file schema) into a config."""
    known_top = {"preset", "seed", "steps", "log_every", "checkpoint_every",
                 "model", "optimizer", "schedule", "rate_check", "lr_sweep", "noise"}
    for key in raw:
        if key not in known_top:
            raise ConfigError(f"{key}: unknown config field")
    kw: dict = {}
    if preset is not None:
        kw["preset"] = preset
    elif "preset" in raw:
        kw["preset"] = raw["preset"]
    for key in ("seed", "steps", "log_every", "checkpoint_every"):
        if key in raw:
            kw[key] = _expect_int(raw[key], key)

    model = dict(raw.get("model", {}))
    if model:
        for key in model:
            if key not in {"kind", "dims", "num_batches", "batch_size"}:
                raise ConfigError(f"model.{key}: unknown config field")
        if "kind" in model:
            kw["model_kind"] = model["kind"]
        if "dims" in model:
            if not isinstance(model["dims"], dict):
                raise ConfigError("model.dims: must be an object of integer dimensions")
            kw["model_dims"] = {k: _expect_int(v, f"model.dims.{k}") for k, v in model["dims"].items()}
        if "num_batches" in model:
            kw["num_batches"] = _expect_int(model["num_batches"], "model.num_batches")
        if "batch_size" in model:
            kw["batch_size"] = _expect_int(model["batch_size"], "model.batch_size")

    opt = dict(raw.get("optimizer", {}))
    if opt:
        kind = opt.pop("kind", "muown")
        kw["optimizer_kind"] = kind
        ns_steps = opt.pop("ns_steps", None)
        ns_coeffs = opt.pop("ns_coeffs", None)
        hp_kwargs = {}
        for key in ("eta", "weight_decay", "beta1", "adam_beta1", "adam_beta2",
                    "adam_eps", "gamma"):
            if key in opt:
                hp_kwargs[key] = opt.pop(key)
        if "backend" in opt:
            hp_kwargs["backend"] = opt.pop("backend")
        if "rms_scale_on" in opt:
            hp_kwargs["rms_scale_on"] = bool(opt.pop("rms_scale_on"))
        if opt:
            raise ConfigError(f"optimizer.{next(iter(opt))}: unknown config field")
        if ns_steps is not None or ns_coeffs is not None:
            base = NSConfig()
            hp_kwargs["ns"] = NSConfig(
                steps=_expect_int(ns_steps, "optimizer.ns_steps") if ns_steps is not None else base.steps,
                coeffs=tuple(ns_coeffs) if ns_coeffs is not None else base.coeffs,
            )
        hp_kwargs.setdefault("eta", 0.02)
        try:
            kw["hp"] = HyperParams(**hp_kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"optimizer: {exc}") from exc

    sched = dict(raw.get("schedule", {}))
    if sched:
        for key in sched:
            if key not in {"kind", "warmup_frac", "decay_frac", "floor"}:
                raise ConfigError(f"schedule.{key}: unknown config field")
        try:
            kw["schedule"] = ScheduleSpec(**sched)
        except TypeError as exc:
            raise ConfigError(f"schedule: {exc}") from exc

    rate = dict(raw.get("rate_check", {}))
    if rate:
        horizons = rate.pop("horizons", None)
        if rate:
            raise ConfigError(f"rate_check.{next(iter(rate))}: unknown config field")
        if horizons is not None:
            kw["rate_horizons"] = tuple(_expect_int(t, "rate_check.horizons[]") for t in horizons)

    sweep = dict(raw.get("lr_sweep", {}))
    if sweep:
        for key in sweep:
            if key not in {"log2_min", "log2_max", "optimizers"}:
                raise ConfigError(f"lr_sweep.{key}: unknown config field")
        if "log2_min" in sweep:
            kw["sweep_log2_min"] = _expect_int(sweep["log2_min"], "lr_sweep.log2_min")
        if "log2_max" in sweep:
            kw["sweep_log2_max"] = _expect_int(sweep["log2_max"], "lr_sweep.log2_max")
        if "optimizers" in sweep:
            kw["sweep_optimizers"] = tuple(sweep["optimizers"])

    noise = dict(raw.get("noise", {}))
    if noise:
        for key in noise:
            if key != "checkpoints":
                raise ConfigError(f"noise.{key}: unknown config field")
        kw["noise_checkpoints"] = _expect_int(noise["checkpoints"], "noise.checkpoints")

    return ExperimentConfig(**kw)


def _expect_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``--set dotted.key=json_value`` pairs onto the raw config dict."""
    out = json.loads(json.dumps(raw))  # deep copy, JSON types only
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, _, text = item.partition("=")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {part} is not an object")
        node[parts[-1]] = value
    return out


# --------------------------------------------------------------------------
# single-run driver


@dataclass
class RunLog:
    columns: list[str]
    rows: list[list]
    summary: dict
    csv_path: Optional[str] = None
    final_layers: Optional[list] = None


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, columns: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_SCHEMA_LINE + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _layer_metrics(layer: Layer, grad: np.ndarray, prev_param: np.ndarray) -> dict:
    w = layer.state.param
    state = layer.state
    if hasattr(state, "g") and hasattr(state, "r"):
        view = view_from_state(w, state.g, state.r)
        g_inf = float(np.max(np.abs(state.g)))
    else:
        view = init_view(w)
        g_inf = float(np.max(row_norms(w)))
    gg = grad_g(grad, view.D)
    gr = grad_R(grad, view.g, view.r, view.D)
    report = spectral_decomposition(w, g=getattr(state, "g", None))
    return {
        "spec_norm": float(singular_values(w)[0]),
        "g_inf": g_inf,
        "coherence": report.coherence,
        "grad_dual": dual_norm(gg, gr),
        "upd_norm": float(singular_values(w - prev_param)[0]),
    }


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None,
                   probe: Optional[Callable] = None) -> RunLog:
    """Train per the config; returns the log and optionally writes artifacts.

    ``probe(t, layers_before, layers_after, loss, grads)`` runs after every
    step when given; it must not mutate its arguments.
    """
    spec, params, batches = models.make_model(
        cfg.model_kind, cfg.model_dims, cfg.seed,
        num_batches=cfg.num_batches, batch_size=cfg.batch_size,
    )
    layers = init_layers(params.named_values(), matrix_kind=cfg.optimizer_kind,
                         vector_kind="adamw" if cfg.optimizer_kind != "signum" else "signum")
    return _run_loop(cfg, spec, layers, batches, out_dir, probe)


def _run_loop(cfg: ExperimentConfig, spec: ModelSpec, layers: list[Layer],
              batches: list[Batch], out_dir: Optional[str],
              probe: Optional[Callable]) -> RunLog:
    matrix_layers = [l.name for l in layers if l.kind in MATRIX_KINDS
                     or l.state.param.ndim == 2]
    columns = ["step", "eta", "loss"]
    for name in matrix_layers:
        columns += [f"{name}.spec_norm", f"{name}.g_inf", f"{name}.coherence",
                    f"{name}.grad_dual", f"{name}.upd_norm"]
    rows: list[list] = []
    num_batches = len(batches)
    t = 0
    try:
        for t in range(cfg.steps):
            epoch, slot = divmod(t, num_batches)
            order = models.epoch_order(num_batches, cfg.seed, epoch)
            batch = batches[order[slot]]
            eta_t = eta_at(cfg.schedule, t, cfg.steps, cfg.hp.eta)
            hp_t = replace(cfg.hp, eta=eta_t)
            loss, grads = loss_and_grad(spec, _params_as_set(spec, layers), batch)
            before = layers
            layers = step_all(layers, grads, hp_t)
            if probe is not None:
                probe(t, before, layers, loss, grads)
            if (t + 1) % cfg.log_every == 0 or t == cfg.steps - 1:
                row = [t + 1, float(eta_t), float(loss)]
                for layer, prev, grad in zip(layers, before, grads):
                    if layer.name in matrix_layers:
                        met = _layer_metrics(layer, grad, prev.state.param)
                        row += [met["spec_norm"], met["g_inf"], met["coherence"],
                                met["grad_dual"], met["upd_norm"]]
                rows.append(row)
            if out_dir and cfg.checkpoint_every and (t + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(os.path.join(out_dir, f"ckpt_{t + 1:06d}"), layers, cfg.hp)
    except (NonFiniteError, ZeroRowError, StepAllError) as exc:
        raise RuntimeError(f"optimizer failed at step {t + 1}: {exc}") from exc

    final_loss, _ = loss_and_grad(
        spec, _params_as_set(spec, layers),
        batches[models.epoch_order(num_batches, cfg.seed, 0)[0]],
    )
    summary = {
        "preset": cfg.preset,
        "seed": cfg.seed,
        "steps": cfg.steps,
        "model_kind": cfg.model_kind,
        "optimizer_kind": cfg.optimizer_kind,
        "final_loss": float(final_loss),
        "layers": {
            layer.name: {
                "kind": layer.kind,
                "spec_norm": float(singular_values(layer.state.param)[0])
                if layer.state.param.ndim == 2 else None,
            }
            for layer in layers
        },
    }
    log = RunLog(columns=columns, rows=rows, summary=summary, final_layers=layers)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        log.csv_path = os.path.join(out_dir, "log.csv")
        _write_csv(log.csv_path, columns, rows)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return log


def _params_as_set(spec: ModelSpec, layers: list[Layer]) -> ParamSet:
    names = {
        "quadratic": ["W"],
        "logistic": ["w"],
        "mlp2": ["W1", "b1", "W2", "b2"],
    }[spec.kind]
    by_name = {l.name: l.state.param for l in layers}
    return ParamSet(
        models.Param(n, by_name[n], "matrix" if by_name[n].ndim == 2 else "elementwise")
        for n in names
    )


def _write_verdict(out_dir: Optional[str], preset: str, assertions: list[dict]) -> dict:
    verdict = {
        "preset": preset,
        "assertions": assertions,
        "pass": all(a["pass"] for a in assertions),
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "verdict.json"), "w") as fh:
            json.dump(verdict, fh, indent=2, sort_keys=True)
    return verdict


# --------------------------------------------------------------------------
# presets


def preset_drift(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> dict:
    """Row-norm drift comparison: muon (no decay) vs fixed vs adaptive magnitudes.

    Hard assertions: the fixed-magnitude run keeps every row norm of every
    matrix weight at its initial value to 1e-10 relative; all three runs emit
    coherence >= 1 - 1e-9 at every logged step; all three start from the
    bitwise-identical initial weights. Drift magnitudes for the other two
    runs are logged, not asserted.
    """
    variants = [("muon", "muon"), ("muown_fixed", "muown_fixed"), ("muown", "muown")]
    assertions = []
    inits: dict[str, list[np.ndarray]] = {}
    coherence_ok = True
    fixed_dev = 0.0

    for label, kind in variants:
        sub = os.path.join(out_dir, label) if out_dir else None
        run_cfg = replace(cfg, optimizer_kind=kind,
                          hp=replace(cfg.hp, weight_decay=0.0))
        g_ref: dict[int, np.ndarray] = {}

        def probe(t, before, after, loss, grads, _g_ref=g_ref, _kind=kind):
            nonlocal fixed_dev
            if t == 0:
                inits[_kind] = [b.state.param.copy() for b in before]
            if _kind != "muown_fixed":
                return
            for i, layer in enumerate(after):
                if layer.state.param.ndim != 2:
                    continue
                if i not in _g_ref:
                    _g_ref[i] = layer.state.g.copy()
                dev = np.max(np.abs(row_norms(layer.state.param) - _g_ref[i])
                             / _g_ref[i])
                fixed_dev = max(fixed_dev, float(dev))

        log = run_experiment(run_cfg, sub, probe=probe)
        for row in log.rows:
            for ci, col in enumerate(log.columns):
                if col.endswith(".coherence") and row[ci] < 1.0 - 1e-9:
                    coherence_ok = False

    same_start = all(
        all(np.array_equal(a, b) for a, b in zip(inits["muon"], inits[k]))
        for k in ("muown_fixed", "muown")
    )
    assertions.append({
        "name": "fixed_row_norms_constant_1e-10",
        "pass": fixed_dev <= 1e-10,
        "detail": f"max relative deviation {fixed_dev:.3e}",
    })
    assertions.append({
        "name": "coherence_lower_bound",
        "pass": coherence_ok,
        "detail": "coherence >= 1 - 1e-9 at every logged step for all variants",
    })
    assertions.append({
        "name": "shared_bitwise_start",
        "pass": bool(same_start),
        "detail": "all variants start from identical initial weights",
    })
    return _write_verdict(out_dir, "drift", assertions)


def preset_rate_check(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> dict:
    """Deterministic sign-descent rate bound on the 2x2 identity quadratic.

    For each horizon T, runs the sign-descent variant with beta1 = 0, exact
    polar, and eta = gamma = sqrt(Delta1/(L T)), then asserts the averaged
    dual gradient norm is within the proven 4*sqrt(L*Delta1/T) bound and that
    the per-step split descent inequality holds with at most 1e-9 slack.
    """
    from .optimizers import init_muown_signum, muown_signum_step

    target = np.zeros((2, 2))
    spec = models.quadratic_spec(target)
    w0 = np.eye(2)
    big_l = spec.smoothness
    assertions = []
    all_rows = []

    for horizon in cfg.rate_horizons:
        init_loss, _ = loss_and_grad(
            spec, ParamSet([models.Param("W", w0, "matrix")]), None)
        delta1 = init_loss - spec.optimum
        step_size = math.sqrt(delta1 / (big_l * horizon))
        hp = HyperParams(eta=step_size, gamma=step_size, beta1=0.0,
                         backend="polar", rms_scale_on=False)
        state = init_muown_signum(w0)
        dual_sum = 0.0
        worst_slack = -math.inf
        for t in range(horizon):
            pset = ParamSet([models.Param("W", state.param, "matrix")])
            loss, grads = loss_and_grad(spec, pset, None)
            view = view_from_state(state.param, state.g, state.r)
            gg = grad_g(grads[0], view.D)
            gr = grad_R(grads[0], view.g, view.r, view.D)
            dual = dual_norm(gg, gr)
            dual_sum += dual
            state = muown_signum_step(state, grads[0], hp)
            loss_after, _ = loss_and_grad(
                spec, ParamSet([models.Param("W", state.param, "matrix")]), None)
            descent_rhs = (-step_size * vec_l1(gg) - step_size * nuclear_norm(gr)
                           + 0.5 * big_l * (step_size ** 2 + step_size ** 2))
            slack = (loss_after - loss) - descent_rhs
            worst_slack = max(worst_slack, slack)
            all_rows.append([horizon, t + 1, float(loss), float(dual), float(slack)])
        avg_dual = dual_sum / horizon
        bound = 4.0 * math.sqrt(big_l * delta1 / horizon)
        assertions.append({
            "name": f"rate_bound_T{horizon}",
            "pass": bool(avg_dual <= bound * (1.0 + 1e-9)),
            "detail": f"avg dual {avg_dual:.6g} vs bound {bound:.6g}",
        })
        assertions.append({
            "name": f"split_descent_T{horizon}",
            "pass": bool(worst_slack <= 1e-9),
            "detail": f"worst per-step slack {worst_slack:.3e}",
        })

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, "log.csv"),
                   ["T", "step", "loss", "grad_dual", "descent_slack"], all_rows)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump({"preset": "rate-check",
                       "horizons": list(cfg.rate_horizons)}, fh, indent=2,
                      sort_keys=True)
    return _write_verdict(out_dir, "rate-check", assertions)


def preset_noise_compare(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> dict:
    """Gradient-noise coefficients for the two geometries along one training run.

    At evenly spaced checkpoints of a matrix-geometry training run, computes
    the full-dataset gradient, then per-minibatch deviations, and emits one
    noise report per matrix layer per checkpoint. The comparison itself is
    empirical, so nothing is asserted about which coefficient is smaller.
    """
    spec, params, batches = models.make_model(
        cfg.model_kind, cfg.model_dims, cfg.seed,
        num_batches=cfg.num_batches, batch_size=cfg.batch_size,
    )
    layers = init_layers(params.named_values(), matrix_kind=cfg.optimizer_kind)
    k = min(cfg.noise_checkpoints, cfg.steps)
    checkpoint_steps = sorted({round((i + 1) * cfg.steps / k) for i in range(k)})
    rows = []
    num_batches = len(batches)
    for t in range(cfg.steps):
        epoch, slot = divmod(t, num_batches)
        batch = batches[models.epoch_order(num_batches, cfg.seed, epoch)[slot]]
        eta_t = eta_at(cfg.schedule, t, cfg.steps, cfg.hp.eta)
        loss, grads = loss_and_grad(spec, _params_as_set(spec, layers), batch)
        layers = step_all(layers, grads, replace(cfg.hp, eta=eta_t))
        if (t + 1) in checkpoint_steps:
            pset = _params_as_set(spec, layers)
            _, true_grads = models.full_dataset_gradient(spec, pset, batches)
            sample_grads = [loss_and_grad(spec, pset, b)[1] for b in batches]
            for i, layer in enumerate(layers):
                if layer.state.param.ndim != 2:
                    continue
                state = layer.state
                if hasattr(state, "g"):
                    view = view_from_state(state.param, state.g, state.r)
                else:
                    view = init_view(state.param)
                report = noise_coefficients(
                    true_grads[i], [s[i] for s in sample_grads], view)
                rows.append([t + 1, layer.name, report.sigma_W, report.sigma_g,
                             report.sigma_R, report.zeta_W, report.zeta_g,
                             report.zeta_R, report.muon_coeff, report.muown_coeff])
    ok = len(rows) > 0 and all(
        all(math.isfinite(v) and v >= 0.0 for v in r[2:]) for r in rows)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, "log.csv"),
                   ["step", "layer", "sigma_W", "sigma_g", "sigma_R",
                    "zeta_W", "zeta_g", "zeta_R", "muon_coeff", "muown_coeff"],
                   rows)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump({"preset": "noise-compare", "reports": len(rows)}, fh,
                      indent=2, sort_keys=True)
    assertions = [{
        "name": "noise_reports_computed",
        "pass": bool(ok),
        "detail": f"{len(rows)} finite nonnegative reports",
    }]
    return _write_verdict(out_dir, "noise-compare", assertions)


def preset_lr_sweep(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> dict:
    """Final loss across a log2-spaced learning-rate grid, one row per cell.

    Divergent cells (loss above 1e12 or a non-finite/degenerate step) record
    an inf sentinel and stop early without aborting the sweep.
    """
    etas = [2.0 ** k for k in range(cfg.sweep_log2_min, cfg.sweep_log2_max + 1)]
    rows = []
    for opt_kind in cfg.sweep_optimizers:
        for eta in etas:
            spec, params, batches = models.make_model(
                cfg.model_kind, cfg.model_dims, cfg.seed,
                num_batches=cfg.num_batches, batch_size=cfg.batch_size,
            )
            layers = init_layers(params.named_values(), matrix_kind=opt_kind)
            hp = replace(cfg.hp, eta=eta)
            final_loss = math.inf
            diverged = False
            steps_done = 0
            num_batches = len(batches)
            for t in range(cfg.steps):
                epoch, slot = divmod(t, num_batches)
                batch = batches[models.epoch_order(num_batches, cfg.seed, epoch)[slot]]
                try:
                    loss, grads = loss_and_grad(spec, _params_as_set(spec, layers), batch)
                    if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
                        diverged = True
                        break
                    eta_t = eta_at(cfg.schedule, t, cfg.steps, eta)
                    layers = step_all(layers, grads, replace(hp, eta=eta_t))
                    steps_done = t + 1
                    final_loss = loss
                except (NonFiniteError, ZeroRowError, StepAllError):
                    diverged = True
                    break
            if not diverged:
                try:
                    final_loss, _ = loss_and_grad(
                        spec, _params_as_set(spec, layers),
                        batches[models.epoch_order(num_batches, cfg.seed, 0)[0]])
                    if not math.isfinite(final_loss) or final_loss > DIVERGENCE_LOSS:
                        diverged = True
                except (NonFiniteError, ZeroRowError):
                    diverged = True
            if diverged:
                final_loss = math.inf
            rows.append([opt_kind, float(eta), float(final_loss), steps_done,
                         int(diverged)])
    expected = len(etas) * len(cfg.sweep_optimizers)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, "log.csv"),
                   ["optimizer", "eta", "final_loss", "steps_done", "diverged"],
                   rows)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump({"preset": "lr-sweep", "cells": len(rows)}, fh, indent=2,
                      sort_keys=True)
    assertions = [{
        "name": "sweep_complete",
        "pass": len(rows) == expected,
        "detail": f"{len(rows)} cells of {expected}",
    }]
    return _write_verdict(out_dir, "lr-sweep", assertions)


def run_preset(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> dict:
    if cfg.preset == "single":
        log = run_experiment(cfg, out_dir)
        assertions = [{
            "name": "run_completed",
            "pass": math.isfinite(log.summary["final_loss"]),
            "detail": f"final loss {log.summary['final_loss']!r}",
        }]
        return _write_verdict(out_dir, "single", assertions)
    if cfg.preset == "drift":
        return preset_drift(cfg, out_dir)
    if cfg.preset == "rate-check":
        return preset_rate_check(cfg, out_dir)
    if cfg.preset == "noise-compare":
        return preset_noise_compare(cfg, out_dir)
    if cfg.preset == "lr-sweep":
        return preset_lr_sweep(cfg, out_dir)
    raise ConfigError(f"preset: unknown preset {cfg.preset!r}")
