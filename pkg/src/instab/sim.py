"""Euler-Maruyama Monte Carlo for the controlled linear SDE.

Noise comes from counter-based Philox streams, one per block of
``BLOCK`` paths, keyed by (seed, block index). A block always draws a full
``BLOCK`` lanes of increments, so any given path sees the same noise no
matter how many paths are requested or how blocks are spread over threads.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivisionError, MismatchError
from .model import SystemModel

BLOCK = 1024
CHUNK = 128  # steps of increments drawn per generator call
FREEZE_NORM = 1e15

ZERO, LINEAR, SATURATED = "zero", "linear", "saturated"


@dataclass(frozen=True, eq=False)
class Controller:
    kind: str = ZERO
    K: np.ndarray | None = None
    power_cap: float | None = None

    @classmethod
    def zero(cls) -> "Controller":
        return cls(ZERO)

    @classmethod
    def linear(cls, K) -> "Controller":
        return cls(LINEAR, np.atleast_2d(np.asarray(K, dtype=float)))

    @classmethod
    def saturated(cls, K, power_cap: float) -> "Controller":
        if not power_cap > 0:
            raise ConfigError("power_cap must be positive")
        return cls(SATURATED, np.atleast_2d(np.asarray(K, dtype=float)), float(power_cap))

    def check(self, model: SystemModel) -> None:
        if self.kind not in (ZERO, LINEAR, SATURATED):
            raise ConfigError(f"unknown controller kind {self.kind!r}")
        if self.kind != ZERO and self.K.shape != (model.m, model.n):
            raise ConfigError(f"gain must be {model.m}x{model.n}, got {self.K.shape}")

    def __call__(self, x: np.ndarray) -> np.ndarray | None:
        """Inputs for a batch of states (paths x n); None for the zero policy."""
        if self.kind == ZERO:
            return None
        u = x @ self.K.T
        if self.kind == SATURATED:
            norm = np.sqrt(np.einsum("pi,pi->p", u, u))
            cap = math.sqrt(self.power_cap)
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(norm > cap, cap / norm, 1.0)
            u = u * scale[:, None]
        return u


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    n_paths: int = 1000
    seed: int = 0
    x0: tuple | None = None
    record_every: int | None = None  # steps between recorded samples

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0):
            raise ConfigError("dt and t_end must be positive")
        if self.dt > self.t_end:
            raise ConfigError("dt must not exceed t_end")
        if int(self.n_paths) < 1:
            raise ConfigError("n_paths must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        if self.record_every is not None and int(self.record_every) < 1:
            raise ConfigError("record_every must be at least 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def stride(self) -> int:
        if self.record_every is not None:
            return int(self.record_every)
        return max(1, self.n_steps // 200)

    @property
    def dt_out(self) -> float:
        return self.stride * self.dt


@dataclass
class SimReport:
    times: np.ndarray
    mean_x2: np.ndarray
    stderr_x2: np.ndarray
    u_power_avg: np.ndarray
    stderr_u_power: np.ndarray
    frac_frozen: np.ndarray
    diverged: bool
    n_paths: int
    controller: str
    mean_V: np.ndarray | None = None
    stderr_V: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def to_csv(self, dest) -> None:
        """Write to a path or an open text stream."""
        if hasattr(dest, "write"):
            self._write_csv(dest)
            return
        with open(Path(dest), "w", newline="", encoding="utf-8") as fh:
            self._write_csv(fh)

    def _write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mean_x2", "stderr_x2", "mean_V", "u_power_avg", "frac_frozen"])
        for k, t in enumerate(self.times):
            mv = "" if self.mean_V is None else repr(float(self.mean_V[k]))
            w.writerow([repr(float(t)), repr(float(self.mean_x2[k])), repr(float(self.stderr_x2[k])),
                        mv, repr(float(self.u_power_avg[k])), repr(float(self.frac_frozen[k]))])

    def summary(self) -> dict:
        out = {
            "n_paths": self.n_paths,
            "controller": self.controller,
            "t_end": float(self.times[-1]),
            "final_mean_x2": float(self.mean_x2[-1]),
            "final_stderr_x2": float(self.stderr_x2[-1]),
            "max_u_power_avg": float(np.max(self.u_power_avg)),
            "diverged": bool(self.diverged),
            "note": "Monte Carlo evidence is illustrative; the certificate is the proof object.",
        }
        if self.mean_V is not None:
            out["final_mean_V"] = float(self.mean_V[-1])
        out.update(self.meta)
        return out

    def save_summary(self, path, extra: dict | None = None) -> None:
        doc = self.summary()
        if extra:
            doc.update(extra)
        Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(block) << 64) | int(seed)))


class _Moments:
    """Running per-sample mean and M2 for one block (Chan et al. merge)."""

    def __init__(self, n_rec):
        self.n = 0
        self.mean = np.zeros(n_rec)
        self.m2 = np.zeros(n_rec)

    @classmethod
    def of(cls, samples):  # samples: (n_rec, paths)
        obj = cls(samples.shape[0])
        obj.n = samples.shape[1]
        obj.mean = samples.mean(axis=1)
        obj.m2 = ((samples - obj.mean[:, None]) ** 2).sum(axis=1)
        return obj

    def merge(self, other):
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        out = _Moments(len(self.mean))
        out.n = n
        out.mean = self.mean + delta * other.n / n
        out.m2 = self.m2 + other.m2 + delta ** 2 * self.n * other.n / n
        return out

    def stderr(self):
        if self.n < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


def _run_blocks(model, controller, cfg, blocks, R):
    """Simulate a contiguous group of blocks side by side; stats stay per block."""
    n, ell1 = model.n, model.ell1
    ell = ell1 + model.ell2
    nb = len(blocks)
    P = nb * BLOCK
    steps, stride = cfg.n_steps, cfg.stride
    n_rec = steps // stride + 1
    gens = [_stream(cfg.seed, b) for b in blocks]
    sq = math.sqrt(cfg.dt)
    A_T, B_T, D_T = model.A.T, model.B.T, model.D.T
    Cs = np.stack(model.C) if ell1 else None

    x0 = np.zeros(n) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float).reshape(n)
    x = np.tile(x0, (P, 1))
    active = np.ones(P, dtype=bool)
    lanes = [min(BLOCK, cfg.n_paths - b * BLOCK) for b in blocks]
    live = np.zeros(P, dtype=bool)
    for i, ln in enumerate(lanes):
        live[i * BLOCK:i * BLOCK + ln] = True
    frozen_any = False

    rec_x2 = np.empty((n_rec, P))
    rec_V = np.empty((n_rec, P)) if R is not None else None
    rec_int = np.empty((n_rec, P))
    rec_active = np.empty((n_rec, P), dtype=bool)

    def power(xs):
        u = controller(xs)
        return (u, np.zeros(P)) if u is None else (u, np.einsum("pi,pi->p", u, u))

    u, p_prev = power(x)
    p0 = p_prev.copy()
    integral = np.zeros(P)

    def record(k):
        rec_x2[k] = np.einsum("pi,pi->p", x, x)
        if rec_V is not None:
            rec_V[k] = np.einsum("pi,ij,pj->p", x, R, x)
        rec_int[k] = integral
        rec_active[k] = active

    record(0)
    k = 1
    dW = None
    for step in range(steps):
        j = step % CHUNK
        if j == 0:
            c = min(CHUNK, steps - step)
            dW = np.concatenate([g.standard_normal((c, BLOCK, ell)) for g in gens], axis=1) * sq
        w = dW[j]
        drift = x @ A_T
        if u is not None:
            drift = drift + u @ B_T
        x_new = x + drift * cfg.dt + w[:, ell1:] @ D_T
        if ell1:
            x_new = x_new + np.einsum("pi,kji,pk->pj", x, Cs, w[:, :ell1])
        blown = ~(np.einsum("pi,pi->p", x_new, x_new) <= FREEZE_NORM ** 2)
        if blown.any() or not active.all():
            if (blown & active & live).any():
                frozen_any = True
            active &= ~blown
            x_new = np.where(active[:, None], x_new, x)
        x = x_new
        u, p_now = power(x)
        integral += 0.5 * (p_prev + p_now) * cfg.dt
        p_prev = p_now
        if (step + 1) % stride == 0:
            record(k)
            k += 1

    times = cfg.dt * stride * np.arange(n_rec)
    safe_t = np.where(times > 0, times, 1.0)[:, None]
    avg = np.where(times[:, None] > 0, rec_int / safe_t, p0[None, :])
    out = []
    for i, ln in enumerate(lanes):
        sl = slice(i * BLOCK, i * BLOCK + ln)
        out.append({
            "x2": _Moments.of(rec_x2[:, sl]),
            "V": None if rec_V is None else _Moments.of(rec_V[:, sl]),
            "pow": _Moments.of(avg[:, sl]),
            "frozen": (~rec_active[:, sl]).sum(axis=1).astype(float),
        })
    return out, frozen_any


def _threads() -> int:
    return max(1, int(os.environ.get("INSTAB_THREADS", "1") or 1))


def simulate(model: SystemModel, controller: Controller, cfg: SimConfig, R=None,
             threads: int | None = None) -> SimReport:
    """Ensemble statistics of n_paths independent Euler-Maruyama paths.

    Paths whose state norm exceeds 1e15 are frozen at their last value and
    stay in the ensemble; dropping them would bias moments downward.
    """
    controller.check(model)
    if cfg.x0 is not None and np.asarray(cfg.x0).size != model.n:
        raise ConfigError(f"x0 must have {model.n} entries")
    if R is not None:
        R = np.asarray(R, dtype=float)
        if R.shape != (model.n, model.n):
            raise ConfigError("R must be n x n")
    n_blocks = -(-cfg.n_paths // BLOCK)
    threads = _threads() if threads is None else max(1, threads)
    groups = [list(g) for g in np.array_split(np.arange(n_blocks), min(threads, n_blocks))]
    groups = [g for g in groups if g]
    run = lambda g: _run_blocks(model, controller, cfg, g, R)  # noqa: E731
    if len(groups) > 1:
        with ThreadPoolExecutor(max_workers=len(groups)) as pool:
            results = list(pool.map(run, groups))
    else:
        results = [run(groups[0])]
    parts = [p for blocks, _ in results for p in blocks]
    diverged = any(flag for _, flag in results)

    x2, V, pw = parts[0]["x2"], parts[0]["V"], parts[0]["pow"]
    frozen = parts[0]["frozen"].copy()
    for p in parts[1:]:
        x2 = x2.merge(p["x2"])
        pw = pw.merge(p["pow"])
        if V is not None:
            V = V.merge(p["V"])
        frozen += p["frozen"]
    times = cfg.dt * cfg.stride * np.arange(len(x2.mean))
    return SimReport(
        times=times,
        mean_x2=x2.mean, stderr_x2=x2.stderr(),
        u_power_avg=pw.mean, stderr_u_power=pw.stderr(),
        frac_frozen=frozen / cfg.n_paths,
        diverged=diverged,
        n_paths=cfg.n_paths,
        controller=controller.kind,
        mean_V=None if V is None else V.mean,
        stderr_V=None if V is None else V.stderr(),
        meta={"dt": cfg.dt, "seed": cfg.seed},
    )


def audit_constraint(report: SimReport, u_hat: float) -> tuple[bool, float]:
    """Check the time-averaged power bound; returns (satisfied, worst_ratio)."""
    pw = report.u_power_avg
    if u_hat == 0:
        if np.any(pw > 0):
            raise DivisionError("u_hat = 0 with nonzero input power")
        return True, 0.0
    ratio = pw / u_hat
    k = int(np.argmax(ratio))
    worst = float(ratio[k])
    rel_se = float(report.stderr_u_power[k]) / u_hat
    return worst <= 1.0 + 3.0 * rel_se, worst


def compare_to_oracle(report: SimReport, traj) -> float:
    """Largest |MC mean_x2 - tr P| over sample times, in standard-error units."""
    if report.controller not in (ZERO, LINEAR):
        raise MismatchError("the moment oracle is exact only for zero or linear feedback")
    if len(report.times) != len(traj.times) or not np.allclose(report.times, traj.times,
                                                                rtol=1e-9, atol=1e-12):
        raise MismatchError("report and trajectory sample grids differ")
    exact = traj.mean_x2
    diff = np.abs(report.mean_x2 - exact)
    se = report.stderr_x2
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0),
                     np.where(diff <= 1e-12 * (1.0 + np.abs(exact)), 0.0, np.inf))
    return float(np.max(z))
