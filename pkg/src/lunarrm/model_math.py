"""Staged training objectives and v-parameterized diffusion algebra.

Pure functions over plain arrays: no network, no autograd. An external
training harness can call them directly or use them as a conformance
reference (see :func:`build_vectors`).
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_same_shape


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal retention ``alpha_bar[t]`` for ``t = 0 .. T-1``."""

    alpha_bar: tuple

    def __post_init__(self):
        a = np.asarray(self.alpha_bar, dtype=np.float64)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("alpha_bar must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(a)) or np.any(a <= 0) or np.any(a > 1):
            raise ValueError("alpha_bar values must lie in (0, 1]")
        if np.any(np.diff(a) > 0):
            raise ValueError("alpha_bar must be non-increasing")
        object.__setattr__(self, "alpha_bar", tuple(float(v) for v in a))

    @property
    def T(self):
        return len(self.alpha_bar)

    def __getitem__(self, t):
        if not 0 <= t < self.T:
            raise IndexError(f"timestep {t} outside [0, {self.T})")
        return self.alpha_bar[t]

    @classmethod
    def linear(cls, T=1000, beta_start=1e-4, beta_end=0.02):
        betas = np.linspace(beta_start, beta_end, T)
        return cls(tuple(np.cumprod(1.0 - betas)))

    @classmethod
    def cosine(cls, T=1000, s=0.008, max_beta=0.999):
        def f(t):
            return math.cos((t / T + s) / (1 + s) * math.pi / 2) ** 2

        betas = np.array([min(1 - f(i + 1) / f(i), max_beta) for i in range(T)])
        return cls(tuple(np.cumprod(1.0 - betas)))


@dataclass(frozen=True)
class LossConfig:
    lambda_recon: float = 1.0
    epsilon_bce: float = 1e-7

    def __post_init__(self):
        if not math.isfinite(self.lambda_recon) or self.lambda_recon < 0:
            raise ValueError("lambda_recon must be finite and >= 0")
        if not 0 < self.epsilon_bce <= 1e-3:
            raise ValueError("epsilon_bce must lie in (0, 1e-3]")


def _pair(a, b, names):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b, names=names)
    return a, b


def bce_loss(target, predicted_prob, epsilon_bce=1e-7):
    """Mean binary cross-entropy with probabilities clamped to ``[eps, 1-eps]``."""
    y, p = _pair(target, predicted_prob, ("target", "predicted_prob"))
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("targets must be binary")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("predicted probabilities must lie in [0, 1]")
    p = np.clip(p, epsilon_bce, 1.0 - epsilon_bce)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def mse_loss(target, predicted):
    t, p = _pair(target, predicted, ("target", "predicted"))
    return float(np.mean((t - p) ** 2))


def _coeffs(t, schedule):
    a = schedule[t]
    return math.sqrt(a), math.sqrt(1.0 - a)


def forward_noise(r, noise, t, schedule):
    """``r_t = sqrt(a) r + sqrt(1-a) eps``."""
    r, noise = _pair(r, noise, ("r", "noise"))
    sa, sb = _coeffs(t, schedule)
    return sa * r + sb * noise


def velocity_target(r, noise, t, schedule):
    """``v = sqrt(a) eps - sqrt(1-a) r``."""
    r, noise = _pair(r, noise, ("r", "noise"))
    sa, sb = _coeffs(t, schedule)
    return sa * noise - sb * r


def residual_from_velocity(r_t, v_pred, t, schedule):
    """``r_hat = sqrt(a) r_t - sqrt(1-a) v_pred``."""
    r_t, v_pred = _pair(r_t, v_pred, ("r_t", "v_pred"))
    sa, sb = _coeffs(t, schedule)
    return sa * r_t - sb * v_pred


def hybrid_loss(v_true, v_pred, r_true, r_hat, config=None):
    """Return ``(L3, Lv, Lrecon)`` with ``L3 = Lv + lambda * Lrecon``."""
    config = config or LossConfig()
    lv = mse_loss(v_true, v_pred)
    lrec = mse_loss(r_true, r_hat)
    return lv + config.lambda_recon * lrec, lv, lrec


def total_loss(l1, l2, l3):
    vals = (float(l1), float(l2), float(l3))
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"non-finite loss component in {vals}")
    return vals[0] + vals[1] + vals[2]


def reconstruct_final(rm_stage2, residual):
    a, b = _pair(rm_stage2, residual, ("rm_stage2", "residual"))
    return a + b


# -- conformance vectors ---------------------------------------------------

VECTOR_TOLERANCE = 1e-9


def _grid(rng, shape=(4, 4)):
    return rng.standard_normal(shape)


def build_vectors(seed=0, n_cases=4):
    """Deterministic input/output pairs for every kernel in this module."""
    rng = np.random.default_rng(seed)
    sched = NoiseSchedule.linear(100)
    cases = []

    def add(op, inputs, output):
        cases.append({"op": op, "inputs": inputs, "output": output})

    def tolist(a):
        return np.asarray(a).tolist()

    for _ in range(n_cases):
        y = (rng.random((4, 4)) < 0.5).astype(float)
        p = rng.random((4, 4))
        add("bce_loss", {"target": tolist(y), "predicted_prob": tolist(p), "epsilon_bce": 1e-7},
            bce_loss(y, p))
        a, b = _grid(rng), _grid(rng)
        add("mse_loss", {"target": tolist(a), "predicted": tolist(b)}, mse_loss(a, b))
        r, eps = _grid(rng), _grid(rng)
        t = int(rng.integers(0, sched.T))
        add("forward_noise", {"r": tolist(r), "noise": tolist(eps), "t": t},
            tolist(forward_noise(r, eps, t, sched)))
        add("velocity_target", {"r": tolist(r), "noise": tolist(eps), "t": t},
            tolist(velocity_target(r, eps, t, sched)))
        rt, vp = _grid(rng), _grid(rng)
        add("residual_from_velocity", {"r_t": tolist(rt), "v_pred": tolist(vp), "t": t},
            tolist(residual_from_velocity(rt, vp, t, sched)))
        g = [_grid(rng) for _ in range(4)]
        lam = float(rng.random())
        add("hybrid_loss", {"v_true": tolist(g[0]), "v_pred": tolist(g[1]), "r_true": tolist(g[2]),
                            "r_hat": tolist(g[3]), "lambda_recon": lam},
            list(hybrid_loss(*g, LossConfig(lambda_recon=lam))))
        ls = rng.random(3).tolist()
        add("total_loss", {"l1": ls[0], "l2": ls[1], "l3": ls[2]}, total_loss(*ls))
        add("reconstruct_final", {"rm_stage2": tolist(a), "residual": tolist(b)},
            tolist(reconstruct_final(a, b)))
    return {
        "format": "lunarrm-model-math-vectors",
        "version": 1,
        "seed": seed,
        "tolerance": VECTOR_TOLERANCE,
        "schedule": {"kind": "linear", "T": sched.T, "beta_start": 1e-4, "beta_end": 0.02},
        "cases": cases,
    }


def _evaluate(case, sched):
    op, x = case["op"], case["inputs"]
    arr = np.asarray
    if op == "bce_loss":
        return bce_loss(arr(x["target"]), arr(x["predicted_prob"]), x["epsilon_bce"])
    if op == "mse_loss":
        return mse_loss(arr(x["target"]), arr(x["predicted"]))
    if op == "forward_noise":
        return forward_noise(arr(x["r"]), arr(x["noise"]), x["t"], sched)
    if op == "velocity_target":
        return velocity_target(arr(x["r"]), arr(x["noise"]), x["t"], sched)
    if op == "residual_from_velocity":
        return residual_from_velocity(arr(x["r_t"]), arr(x["v_pred"]), x["t"], sched)
    if op == "hybrid_loss":
        return hybrid_loss(arr(x["v_true"]), arr(x["v_pred"]), arr(x["r_true"]), arr(x["r_hat"]),
                           LossConfig(lambda_recon=x["lambda_recon"]))
    if op == "total_loss":
        return total_loss(x["l1"], x["l2"], x["l3"])
    if op == "reconstruct_final":
        return reconstruct_final(arr(x["rm_stage2"]), arr(x["residual"]))
    raise ValueError(f"unknown op {op!r}")


def check_vectors(doc, tol=None):
    """Re-evaluate every case; return a list of human-readable failures."""
    tol = doc.get("tolerance", VECTOR_TOLERANCE) if tol is None else tol
    sc = doc["schedule"]
    if sc.get("kind") != "linear":
        return [f"unsupported schedule kind {sc.get('kind')!r}"]
    sched = NoiseSchedule.linear(sc["T"], sc["beta_start"], sc["beta_end"])
    failures = []
    for k, case in enumerate(doc["cases"]):
        try:
            got = np.asarray(_evaluate(case, sched), dtype=np.float64)
            want = np.asarray(case["output"], dtype=np.float64)
        except (KeyError, ValueError, IndexError, TypeError) as exc:
            failures.append(f"case {k} ({case.get('op')}): {exc}")
            continue
        if got.shape != want.shape or not np.allclose(got, want, rtol=0, atol=tol):
            failures.append(f"case {k} ({case['op']}): output differs beyond {tol}")
    return failures


def dumps_vectors(doc):
    return json.dumps(doc, indent=1, sort_keys=True)
