"""One-dimensional optimization study: Cartesian vs. homogeneous position.

Both representations minimize the absolute distance to a target with the
same optimizer and learning rate. The Cartesian run optimizes x directly;
the homogeneous run optimizes the numerator x_tilde and the log-weight rho
(w = exp(rho), decoded position x_tilde / w), mirroring the exponential
weight activation used by the full pipeline.

Two optimizers are available. "adam" (the default) takes the usual
bias-corrected moment-normalized steps and is stable for both
representations. "gd" takes plain subgradient steps on (x_tilde, w)
directly; it reproduces the textbook update rule but is numerically
treacherous for the homogeneous run, since the raw weight gradient
x_tilde / w^2 grows without bound as w shrinks. The weight is floored at
1e-12 and every clamp is recorded as a degenerate event.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

W_FLOOR = 1e-12
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class Sim1DConfig:
    x0: float = 5.0
    w0: float = 1.0
    targets: tuple = (10.0, 50.0, 250.0)
    lr: float = 0.1
    max_iters: int = 10_000
    tol: float = 0.5
    optimizer: str = "adam"  # "adam" or "gd"
    optimize_w: bool = True  # homogeneous: also descend on the weight

    def __post_init__(self):
        if self.lr <= 0 or self.tol <= 0:
            raise DataError("lr and tol must be positive")
        if not self.targets:
            raise DataError("at least one target is required")
        if self.optimizer not in ("adam", "gd"):
            raise DataError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class SimTrace:
    representation: str
    target: float
    positions: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    raw: list = field(default_factory=list)
    iterations_to_tol: int | None = None
    degenerate_events: int = 0

    @property
    def converged(self) -> bool:
        return self.iterations_to_tol is not None


def _sign(v: float) -> float:
    # Subgradient of |r| with 0 at the kink: descent stops at the optimum.
    return 0.0 if v == 0.0 else (1.0 if v > 0.0 else -1.0)


class _Adam:
    def __init__(self, n: int, lr: float):
        self.lr = lr
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, g: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = ADAM_BETA1 * self.m + (1 - ADAM_BETA1) * g
        self.v = ADAM_BETA2 * self.v + (1 - ADAM_BETA2) * g * g
        m_hat = self.m / (1 - ADAM_BETA1**self.t)
        v_hat = self.v / (1 - ADAM_BETA2**self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def simulate_1d_single(cfg: Sim1DConfig, representation: str, target: float) -> SimTrace:
    if representation not in ("cartesian", "homogeneous"):
        raise DataError(f"unknown representation {representation!r}")
    trace = SimTrace(representation=representation, target=target)
    x = cfg.x0
    x_tilde, w = cfg.x0 * cfg.w0, cfg.w0
    rho = float(np.log(cfg.w0))
    opt = _Adam(1 if representation == "cartesian" else 2, cfg.lr)

    for it in range(cfg.max_iters + 1):
        decoded = x if representation == "cartesian" else x_tilde / w
        loss = abs(target - decoded)
        trace.positions.append(decoded)
        trace.losses.append(loss)
        trace.raw.append((x,) if representation == "cartesian" else (x_tilde, w))
        if loss <= cfg.tol and trace.iterations_to_tol is None:
            trace.iterations_to_tol = it
            break
        if it == cfg.max_iters:
            break
        if representation == "cartesian":
            # dL/dx = -sign(target - x)
            g = -_sign(target - x)
            if cfg.optimizer == "adam":
                x -= opt.step(np.array([g]))[0]
            else:
                x -= cfg.lr * g
        else:
            r = target - x_tilde / w
            g_xt = -_sign(r) / w
            if cfg.optimizer == "adam":
                # Weight gradient chained through w = exp(rho).
                g_rho = _sign(r) * x_tilde / w if cfg.optimize_w else 0.0
                step = opt.step(np.array([g_xt, g_rho]))
                x_tilde -= step[0]
                if cfg.optimize_w:
                    rho -= step[1]
                    if rho < np.log(W_FLOOR):
                        rho = float(np.log(W_FLOOR))
                        trace.degenerate_events += 1
                    w = float(np.exp(rho))
            else:
                g_w = _sign(r) * x_tilde / (w * w)
                x_tilde -= cfg.lr * g_xt
                if cfg.optimize_w:
                    w -= cfg.lr * g_w
                    if w <= W_FLOOR:
                        w = W_FLOOR
                        trace.degenerate_events += 1
    return trace


def simulate_1d(cfg: Sim1DConfig, representation: str) -> list[SimTrace]:
    """One trace per configured target."""
    return [simulate_1d_single(cfg, representation, t) for t in cfg.targets]


def emit_convergence_csv(traces: list[SimTrace], path=None) -> str:
    """Lossless per-iteration dump; returns the CSV text (and writes `path`)."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["iter", "representation", "target", "decoded_x", "loss"])
    for tr in traces:
        for i, (p, l) in enumerate(zip(tr.positions, tr.losses)):
            writer.writerow([i, tr.representation, tr.target, repr(p), repr(l)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(text)
    return text
