"""Training loop: MSE objective, Adadelta updates, seed ensembles, error CIs.

Adadelta keeps running averages of squared gradients and squared updates and
derives a per-parameter step size from their ratio, so no global learning
rate is ever chosen.  Ensembles train one network per seed on identical data
and keep the one with the lowest validation error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import stats

from .dataset import Sample
from .network import Model, build_model, ModelSpec, save_checkpoint


class NonFiniteGradientError(RuntimeError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.parameter = name


class TrainingError(RuntimeError):
    pass


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over every entry of the squared difference."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


@dataclass
class AdadeltaState:
    rho: float = 0.95
    epsilon: float = 1e-6
    accum_grad_sq: dict = field(default_factory=dict)
    accum_update_sq: dict = field(default_factory=dict)


def _all_finite(x) -> bool:
    if isinstance(x, torch.Tensor):
        return bool(torch.isfinite(x).all())
    return bool(np.isfinite(x).all())


def adadelta_step(
    state: AdadeltaState, params: dict, grads: dict
) -> tuple[AdadeltaState, dict]:
    """One Adadelta update over a dict of parameter arrays.

    Per parameter g:  Eg <- rho Eg + (1-rho) g^2,
    delta = -sqrt(Eu + eps) / sqrt(Eg + eps) * g,
    Eu <- rho Eu + (1-rho) delta^2,  theta' = theta + delta.

    Inputs are not mutated; works on numpy arrays and torch tensors alike.
    """
    rho, eps = state.rho, state.epsilon
    new_state = AdadeltaState(rho=rho, epsilon=eps)
    new_params = {}
    for name, theta in params.items():
        g = grads[name]
        if not _all_finite(g):
            raise NonFiniteGradientError(name)
        eg = state.accum_grad_sq.get(name, theta * 0)
        eu = state.accum_update_sq.get(name, theta * 0)
        eg = rho * eg + (1.0 - rho) * g * g
        delta = -((eu + eps) ** 0.5) / ((eg + eps) ** 0.5) * g
        eu = rho * eu + (1.0 - rho) * delta * delta
        new_state.accum_grad_sq[name] = eg
        new_state.accum_update_sq[name] = eu
        new_params[name] = theta + delta
    return new_state, new_params


@dataclass
class TrainRun:
    run_id: str
    init_seed: int
    epochs: int
    train_curve: list[float]
    val_curve: list[float]
    final_val_error: float | None
    checkpoint_path: str | None = None

    def to_json(self) -> str:
        return json.dumps(vars(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainRun":
        return cls(**json.loads(text))


def _to_batch(samples: list[Sample], dtype) -> tuple[torch.Tensor, torch.Tensor]:
    xs = np.stack(
        [
            np.dstack(
                [
                    s.input_image,
                    s.retain_mask.astype(np.float64),
                    s.restore_mask.astype(np.float64),
                ]
            ).transpose(2, 0, 1)
            for s in samples
        ]
    )
    ys = np.stack([s.target_image.transpose(2, 0, 1) for s in samples])
    return torch.from_numpy(xs).to(dtype), torch.from_numpy(ys).to(dtype)


def _validation_error(model: Model, x: torch.Tensor, y: torch.Tensor) -> float:
    model.eval()
    with torch.no_grad():
        out = model(x)
        return float(torch.mean((out - y) ** 2))


def train(
    model: Model,
    train_set: list[Sample],
    val_set: list[Sample],
    epochs: int,
    batch_size: int = 8,
    seed: int = 0,
    run_id: str = "R0",
    checkpoint_dir=None,
    keep_best: bool = False,
) -> TrainRun:
    """Run seeded mini-batch training and record per-epoch loss curves.

    Every epoch shuffles the training tuples, steps Adadelta once per batch,
    and evaluates the validation error with running batch-norm statistics.
    By default the run keeps the last epoch's weights and reports the last
    validation error; ``keep_best`` switches both to the best epoch instead.
    """
    if epochs > 0 and (not train_set or not val_set):
        raise ValueError("training needs non-empty train and validation sets")

    dtype = next(model.parameters()).dtype
    x_train, y_train = _to_batch(train_set, dtype) if train_set else (None, None)
    x_val, y_val = _to_batch(val_set, dtype) if val_set else (None, None)

    rng = np.random.default_rng(seed)
    state = AdadeltaState()
    train_curve: list[float] = []
    val_curve: list[float] = []
    best_state = None

    n = len(train_set)
    for epoch in range(epochs):
        perm = rng.permutation(n)
        model.train()
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            xb, yb = x_train[idx], y_train[idx]
            model.zero_grad()
            loss = torch.mean((model(xb) - yb) ** 2)
            loss.backward()
            loss_val = float(loss.detach())
            if not np.isfinite(loss_val):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // batch_size}"
                )
            params = {name: p.detach() for name, p in model.named_parameters()}
            grads = {
                name: (p.grad if p.grad is not None else torch.zeros_like(p))
                for name, p in model.named_parameters()
            }
            try:
                state, new_params = adadelta_step(state, params, grads)
            except NonFiniteGradientError as err:
                raise TrainingError(
                    f"{err} at epoch {epoch}, batch {start // batch_size}"
                ) from err
            with torch.no_grad():
                for name, p in model.named_parameters():
                    p.copy_(new_params[name])
            epoch_loss += loss_val * len(idx)
        train_curve.append(epoch_loss / n)
        val_curve.append(_validation_error(model, x_val, y_val))
        if keep_best and val_curve[-1] == min(val_curve):
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    if keep_best and best_state is not None:
        model.load_state_dict(best_state)
    final = None
    if val_curve:
        final = min(val_curve) if keep_best else val_curve[-1]
    run = TrainRun(
        run_id=run_id,
        init_seed=seed,
        epochs=epochs,
        train_curve=train_curve,
        val_curve=val_curve,
        final_val_error=final,
    )
    if checkpoint_dir is not None:
        ckpt = Path(checkpoint_dir) / run_id
        save_checkpoint(model, ckpt)
        run.checkpoint_path = str(ckpt)
        (ckpt / "run.json").write_text(run.to_json())
    return run


@dataclass
class EnsembleResult:
    runs: list[TrainRun]  # ascending by final validation error
    selected: str
    failures: list[tuple[str, str]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "selected": self.selected,
                "runs": [
                    {"id": r.run_id, "validation_error": r.final_val_error}
                    for r in self.runs
                ],
                "failures": [{"id": rid, "error": msg} for rid, msg in self.failures],
            },
            indent=2,
        )


def rank_runs(runs: list[TrainRun]) -> list[TrainRun]:
    """Ascending by validation error; ties keep the original (run id) order."""
    inf = float("inf")
    order = sorted(
        enumerate(runs),
        key=lambda item: (
            inf if item[1].final_val_error is None else item[1].final_val_error,
            item[0],
        ),
    )
    return [run for _, run in order]


def train_ensemble(
    spec: ModelSpec,
    train_set: list[Sample],
    val_set: list[Sample],
    seeds: list[int],
    epochs: int,
    batch_size: int = 8,
    out_dir=None,
) -> EnsembleResult:
    """Train one network per seed and select the lowest validation error.

    A failing run is recorded and skipped; the remaining seeds still train.
    Ties on validation error resolve to the earlier run id.
    """
    if not seeds:
        raise ValueError("at least one seed is required")
    runs: list[TrainRun] = []
    failures: list[tuple[str, str]] = []
    for i, seed in enumerate(seeds):
        run_id = f"R{i}"
        try:
            model = build_model(spec, init_seed=seed)
            run = train(
                model,
                train_set,
                val_set,
                epochs=epochs,
                batch_size=batch_size,
                seed=seed,
                run_id=run_id,
                checkpoint_dir=out_dir,
            )
            runs.append(run)
        except Exception as err:  # keep going; report partial results
            failures.append((run_id, str(err)))
    if not runs:
        raise TrainingError("every ensemble run failed: " + json.dumps(failures))

    ordered = rank_runs(runs)
    result = EnsembleResult(runs=ordered, selected=ordered[0].run_id, failures=failures)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ensemble.json").write_text(result.to_json())
    return result


def test_error_ci(per_image_errors: list[float], level: float = 0.95) -> tuple[float, float]:
    """Mean and t-distribution confidence half-width of per-image errors."""
    errors = np.asarray(per_image_errors, dtype=np.float64)
    n = errors.size
    if n < 2:
        raise ValueError("confidence interval needs at least two values")
    mean = float(errors.mean())
    s = float(errors.std(ddof=1))
    t = float(stats.t.ppf((1.0 + level) / 2.0, df=n - 1))
    return mean, t * s / np.sqrt(n)


def significant_difference(ci_a: tuple[float, float], ci_b: tuple[float, float]) -> bool:
    """True when two confidence intervals (lo, hi) do not overlap."""
    (a_lo, a_hi), (b_lo, b_hi) = ci_a, ci_b
    if a_lo > a_hi or b_lo > b_hi:
        raise ValueError("confidence intervals must satisfy lo <= hi")
    return a_hi < b_lo or b_hi < a_lo
