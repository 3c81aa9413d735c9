"""Tiny tanh MLP with a stochastic action head and two scalar value heads.

Parameters live in one flat float64 vector addressed through named segments,
which keeps snapshots, text checkpoints and finite-difference checks trivial.
Gradients are computed analytically (reverse mode) for the fixed set of
training losses used by the artifact; there is no general autodiff here, and
none is needed. Every loss below is validated against central finite
differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaussianDist",
    "CategoricalDist",
    "log_prob",
    "entropy",
    "kl_divergence",
    "sample",
    "PolicyNetwork",
    "Adam",
    "save_checkpoint",
    "load_checkpoint",
]

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

CHECKPOINT_TAG = "policy-checkpoint"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Action distributions


@dataclass
class GaussianDist:
    """Diagonal Gaussian with state-independent log-std (already clamped)."""

    mean: np.ndarray  # (B, dim)
    log_std: np.ndarray  # (dim,)

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


@dataclass
class CategoricalDist:
    logits: np.ndarray  # (B, n)

    @property
    def log_probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    @property
    def probs(self) -> np.ndarray:
        p = np.exp(self.log_probs)
        return p / p.sum(axis=1, keepdims=True)


def log_prob(dist, actions) -> np.ndarray:
    """Exact log-density (Gaussian) or log-mass (categorical), shape (B,)."""
    if isinstance(dist, GaussianDist):
        a = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        z = (a - dist.mean) / dist.std
        return -0.5 * (z**2).sum(axis=1) - dist.log_std.sum() - a.shape[1] * _HALF_LOG_2PI
    if isinstance(dist, CategoricalDist):
        idx = np.asarray(actions, dtype=np.int64).reshape(-1)
        return dist.log_probs[np.arange(idx.size), idx]
    raise TypeError(f"unsupported distribution {type(dist)!r}")


def entropy(dist) -> np.ndarray:
    if isinstance(dist, GaussianDist):
        h = float(dist.log_std.sum() + dist.log_std.size * (0.5 + _HALF_LOG_2PI))
        return np.full(dist.mean.shape[0], h)
    if isinstance(dist, CategoricalDist):
        lp = dist.log_probs
        return -(np.exp(lp) * lp).sum(axis=1)
    raise TypeError(f"unsupported distribution {type(dist)!r}")


def kl_divergence(p, q) -> np.ndarray:
    """Closed-form KL(p || q) per batch row; heads must match."""
    if isinstance(p, GaussianDist) and isinstance(q, GaussianDist):
        if p.mean.shape != q.mean.shape:
            raise ValueError("Gaussian KL needs matching dimensions")
        var_p = np.exp(2.0 * p.log_std)
        var_q = np.exp(2.0 * q.log_std)
        per_dim = (q.log_std - p.log_std) + (var_p + (p.mean - q.mean) ** 2) / (2.0 * var_q) - 0.5
        return per_dim.sum(axis=1)
    if isinstance(p, CategoricalDist) and isinstance(q, CategoricalDist):
        if p.logits.shape != q.logits.shape:
            raise ValueError("categorical KL needs matching dimensions")
        lp, lq = p.log_probs, q.log_probs
        pp = np.exp(lp)
        with np.errstate(invalid="ignore"):
            terms = np.where(pp > 0.0, pp * (lp - lq), 0.0)
        return terms.sum(axis=1)
    raise TypeError(f"head mismatch: {type(p).__name__} vs {type(q).__name__}")


def sample(dist, rng: np.random.Generator) -> np.ndarray:
    if isinstance(dist, GaussianDist):
        return dist.mean + dist.std * rng.standard_normal(dist.mean.shape)
    if isinstance(dist, CategoricalDist):
        u = rng.random((dist.logits.shape[0], 1))
        cum = np.cumsum(dist.probs, axis=1)
        return np.minimum((cum < u).sum(axis=1), dist.logits.shape[1] - 1)
    raise TypeError(f"unsupported distribution {type(dist)!r}")


# ---------------------------------------------------------------------------
# Network


@dataclass
class ForwardCache:
    x: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    head: np.ndarray  # mean or logits, (B, out)
    v_ext: np.ndarray  # (B,)
    v_int: np.ndarray  # (B,)


class PolicyNetwork:
    """Two hidden tanh layers (64 units each), one action head, two value heads.

    All computation methods are pure with respect to the parameter vector they
    are handed; the class itself only carries architecture metadata.
    """

    def __init__(self, input_dim: int, action_dim: int, head_kind: str, hidden: tuple[int, int] = (64, 64)):
        if head_kind not in ("gaussian", "categorical"):
            raise ValueError(f"head_kind must be 'gaussian' or 'categorical', got {head_kind!r}")
        if input_dim <= 0 or action_dim <= 0:
            raise ValueError("dimensions must be positive")
        self.input_dim = int(input_dim)
        self.action_dim = int(action_dim)
        self.head_kind = head_kind
        self.hidden = (int(hidden[0]), int(hidden[1]))
        h1, h2 = self.hidden
        segments = [
            ("trunk1.w", (self.input_dim, h1)),
            ("trunk1.b", (h1,)),
            ("trunk2.w", (h1, h2)),
            ("trunk2.b", (h2,)),
            ("head.w", (h2, self.action_dim)),
            ("head.b", (self.action_dim,)),
        ]
        if head_kind == "gaussian":
            segments.append(("log_std", (self.action_dim,)))
        segments += [
            ("v_ext.w", (h2,)),
            ("v_ext.b", (1,)),
            ("v_int.w", (h2,)),
            ("v_int.b", (1,)),
        ]
        self.segments: list[tuple[str, tuple[int, ...]]] = segments
        self._offsets: dict[str, tuple[int, tuple[int, ...]]] = {}
        off = 0
        for name, shape in segments:
            size = int(np.prod(shape))
            self._offsets[name] = (off, shape)
            off += size
        self.n_params = off

    def view(self, params: np.ndarray, name: str) -> np.ndarray:
        off, shape = self._offsets[name]
        return params[off : off + int(np.prod(shape))].reshape(shape)

    def init_params(self, rng: np.random.Generator, head_scale: float = 0.01, log_std_init: float = 0.0) -> np.ndarray:
        params = np.zeros(self.n_params)
        self.view(params, "trunk1.w")[:] = _orthogonal(rng, self.view(params, "trunk1.w").shape, math.sqrt(2.0))
        self.view(params, "trunk2.w")[:] = _orthogonal(rng, self.view(params, "trunk2.w").shape, math.sqrt(2.0))
        self.view(params, "head.w")[:] = _orthogonal(rng, self.view(params, "head.w").shape, head_scale)
        self.view(params, "v_ext.w")[:] = _orthogonal(rng, (self.hidden[1], 1), 1.0)[:, 0]
        self.view(params, "v_int.w")[:] = _orthogonal(rng, (self.hidden[1], 1), 1.0)[:, 0]
        if self.head_kind == "gaussian":
            self.view(params, "log_std")[:] = log_std_init
        return params

    # -- forward ----------------------------------------------------------

    def forward(self, params: np.ndarray, states: np.ndarray):
        """Batched forward pass: returns (distribution, v_ext, v_int, cache)."""
        x = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"state dim {x.shape[1]} != input_dim {self.input_dim}")
        h1 = np.tanh(x @ self.view(params, "trunk1.w") + self.view(params, "trunk1.b"))
        h2 = np.tanh(h1 @ self.view(params, "trunk2.w") + self.view(params, "trunk2.b"))
        head = h2 @ self.view(params, "head.w") + self.view(params, "head.b")
        v_ext = h2 @ self.view(params, "v_ext.w") + self.view(params, "v_ext.b")[0]
        v_int = h2 @ self.view(params, "v_int.w") + self.view(params, "v_int.b")[0]
        cache = ForwardCache(x, h1, h2, head, v_ext, v_int)
        return self.distribution(params, head), v_ext, v_int, cache

    def distribution(self, params: np.ndarray, head: np.ndarray):
        if self.head_kind == "gaussian":
            log_std = np.clip(self.view(params, "log_std"), LOG_STD_MIN, LOG_STD_MAX)
            return GaussianDist(head, log_std)
        return CategoricalDist(head)

    def _head_single(self, params: np.ndarray, state: np.ndarray) -> np.ndarray:
        # Fast path for per-step action selection: skips the value heads.
        x = np.asarray(state, dtype=np.float64).reshape(self.input_dim)
        h1 = np.tanh(x @ self.view(params, "trunk1.w") + self.view(params, "trunk1.b"))
        h2 = np.tanh(h1 @ self.view(params, "trunk2.w") + self.view(params, "trunk2.b"))
        return h2 @ self.view(params, "head.w") + self.view(params, "head.b")

    def sample_action(self, params: np.ndarray, state: np.ndarray, rng: np.random.Generator):
        """Draw one action and its log-probability for a single state."""
        head = self._head_single(params, state)
        if self.head_kind == "gaussian":
            log_std = np.clip(self.view(params, "log_std"), LOG_STD_MIN, LOG_STD_MAX)
            std = np.exp(log_std)
            action = head + std * rng.standard_normal(self.action_dim)
            z = (action - head) / std
            lp = float(-0.5 * (z**2).sum() - log_std.sum() - self.action_dim * _HALF_LOG_2PI)
            return action, lp
        zmax = head - head.max()
        lps = zmax - math.log(np.exp(zmax).sum())
        probs = np.exp(lps)
        probs /= probs.sum()
        u = rng.random()
        a = int(min((np.cumsum(probs) < u).sum(), self.action_dim - 1))
        return a, float(lps[a])

    def mean_action(self, params: np.ndarray, state: np.ndarray):
        """Deterministic action: Gaussian mean, or the categorical mode."""
        head = self._head_single(params, state)
        if self.head_kind == "gaussian":
            return head
        return int(np.argmax(head))

    def values(self, params: np.ndarray, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        _, v_ext, v_int, _ = self.forward(params, states)
        return v_ext, v_int

    # -- backward ---------------------------------------------------------

    def _backward(self, params, cache: ForwardCache, d_head, d_v_ext, d_v_int, d_log_std=None) -> np.ndarray:
        grad = np.zeros(self.n_params)
        w_head = self.view(params, "head.w")
        w_ve = self.view(params, "v_ext.w")
        w_vi = self.view(params, "v_int.w")

        self.view(grad, "head.w")[:] = cache.h2.T @ d_head
        self.view(grad, "head.b")[:] = d_head.sum(axis=0)
        self.view(grad, "v_ext.w")[:] = cache.h2.T @ d_v_ext
        self.view(grad, "v_ext.b")[:] = d_v_ext.sum()
        self.view(grad, "v_int.w")[:] = cache.h2.T @ d_v_int
        self.view(grad, "v_int.b")[:] = d_v_int.sum()

        d_h2 = d_head @ w_head.T + d_v_ext[:, None] * w_ve[None, :] + d_v_int[:, None] * w_vi[None, :]
        d_z2 = d_h2 * (1.0 - cache.h2**2)
        self.view(grad, "trunk2.w")[:] = cache.h1.T @ d_z2
        self.view(grad, "trunk2.b")[:] = d_z2.sum(axis=0)
        d_h1 = d_z2 @ self.view(params, "trunk2.w").T
        d_z1 = d_h1 * (1.0 - cache.h1**2)
        self.view(grad, "trunk1.w")[:] = cache.x.T @ d_z1
        self.view(grad, "trunk1.b")[:] = d_z1.sum(axis=0)

        if self.head_kind == "gaussian" and d_log_std is not None:
            raw = self.view(params, "log_std")
            mask = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
            self.view(grad, "log_std")[:] = np.where(mask, d_log_std, 0.0)
        return grad

    def _dist_backward(self, params, cache: ForwardCache, dist, actions, d_lp):
        """Map per-sample log-prob cotangents onto head and log-std cotangents."""
        if self.head_kind == "gaussian":
            a = np.atleast_2d(np.asarray(actions, dtype=np.float64))
            var = dist.std**2
            d_head = d_lp[:, None] * (a - dist.mean) / var
            d_log_std = (d_lp[:, None] * ((a - dist.mean) ** 2 / var - 1.0)).sum(axis=0)
            return d_head, d_log_std
        idx = np.asarray(actions, dtype=np.int64).reshape(-1)
        p = dist.probs
        onehot = np.zeros_like(p)
        onehot[np.arange(idx.size), idx] = 1.0
        return d_lp[:, None] * (onehot - p), None

    # -- losses -----------------------------------------------------------

    def surrogate_loss_and_grad(self, params, states, actions, old_log_probs, advantages, clip_ratio):
        """Negated clipped-importance surrogate (minimisation form).

        Per sample the objective is ``min(r A, clip(r) A)`` with
        ``r = pi(a|s)/pi_old(a|s)``; samples whose ratio left the clip band on
        the unfavourable side contribute exactly zero gradient.
        """
        dist, _, _, cache = self.forward(params, states)
        lp = log_prob(dist, actions)
        ratio = np.exp(lp - old_log_probs)
        f_raw = ratio * advantages
        f_clip = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * advantages
        surr = np.minimum(f_raw, f_clip)
        loss = -float(surr.mean())

        active = f_raw <= f_clip
        d_lp = np.where(active, ratio * advantages, 0.0) * (-1.0 / lp.size)
        d_head, d_log_std = self._dist_backward(params, cache, dist, actions, d_lp)
        zeros = np.zeros_like(cache.v_ext)
        grad = self._backward(params, cache, d_head, zeros, zeros, d_log_std)
        stats = {
            "clip_fraction": float(np.mean(f_clip < f_raw)),
            "approx_kl": float(np.mean(old_log_probs - lp)),
            "surrogate": float(surr.mean()),
        }
        return loss, grad, stats

    def value_loss_and_grad(self, params, states, ext_targets, int_targets=None):
        """Mean squared regression error of the value heads against returns."""
        _, v_ext, v_int, cache = self.forward(params, states)
        n = v_ext.size
        err_e = v_ext - ext_targets
        loss = float((err_e**2).mean())
        d_ve = 2.0 * err_e / n
        if int_targets is not None:
            err_i = v_int - int_targets
            loss += float((err_i**2).mean())
            d_vi = 2.0 * err_i / n
        else:
            d_vi = np.zeros_like(v_int)
        d_head = np.zeros_like(cache.head)
        grad = self._backward(params, cache, d_head, d_ve, d_vi, None)
        return loss, grad

    def entropy_loss_and_grad(self, params, states):
        """Negated mean action entropy (so it composes as a bonus when weighted)."""
        dist, _, _, cache = self.forward(params, states)
        ent = entropy(dist)
        loss = -float(ent.mean())
        n = ent.size
        zeros = np.zeros_like(cache.v_ext)
        if self.head_kind == "gaussian":
            d_head = np.zeros_like(cache.head)
            d_log_std = np.full(self.action_dim, -1.0)
            grad = self._backward(params, cache, d_head, zeros, zeros, d_log_std)
        else:
            lp = dist.log_probs
            h = ent
            d_head = (np.exp(lp) * (lp + h[:, None])) / n
            grad = self._backward(params, cache, d_head, zeros, zeros, None)
        return loss, grad

    def ppo_loss_and_grad(
        self,
        params,
        states,
        actions,
        old_log_probs,
        advantages,
        ext_targets,
        int_targets,
        clip_ratio,
        value_coef,
        entropy_coef,
    ):
        """Full training loss: surrogate + value regression + entropy bonus.

        ``int_targets=None`` drops the intrinsic head from the loss entirely,
        which keeps the pure-extrinsic path bit-identical to plain PPO.
        """
        s_loss, s_grad, stats = self.surrogate_loss_and_grad(
            params, states, actions, old_log_probs, advantages, clip_ratio
        )
        v_loss, v_grad = self.value_loss_and_grad(params, states, ext_targets, int_targets)
        loss = s_loss + value_coef * v_loss
        grad = s_grad + value_coef * v_grad
        if entropy_coef != 0.0:
            e_loss, e_grad = self.entropy_loss_and_grad(params, states)
            loss += entropy_coef * e_loss
            grad += entropy_coef * e_grad
        stats["value_loss"] = v_loss
        return loss, grad, stats

    def mimic_kl_loss_and_grad(self, params, states, targets):
        """Mean over states and target policies of KL(self || target).

        ``targets`` is a list of distributions evaluated on the same states;
        only this network's parameters receive gradient.
        """
        if not targets:
            raise ValueError("mimic loss needs at least one target distribution")
        dist, _, _, cache = self.forward(params, states)
        n = cache.x.shape[0] * len(targets)
        loss = 0.0
        zeros = np.zeros_like(cache.v_ext)
        if self.head_kind == "gaussian":
            d_head = np.zeros_like(cache.head)
            d_log_std = np.zeros(self.action_dim)
            var = dist.std**2
            for t in targets:
                loss += float(kl_divergence(dist, t).sum())
                var_t = t.std**2
                d_head += (dist.mean - t.mean) / var_t / n
                d_log_std += cache.x.shape[0] * (var / var_t - 1.0) / n
            grad = self._backward(params, cache, d_head, zeros, zeros, d_log_std)
        else:
            d_head = np.zeros_like(cache.head)
            lp = dist.log_probs
            pp = np.exp(lp)
            for t in targets:
                kl = kl_divergence(dist, t)
                loss += float(kl.sum())
                d_head += pp * (lp - t.log_probs - kl[:, None]) / n
            grad = self._backward(params, cache, d_head, zeros, zeros, None)
        return loss / n, grad


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Adam:
    """Standard Adam on the flat parameter vector; state is owned here."""

    def __init__(self, n_params: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# Checkpoints: line-oriented text, full float64 round-trip via repr()


def save_checkpoint(path, net: PolicyNetwork, params: np.ndarray) -> None:
    import os

    lines = [
        f"{CHECKPOINT_TAG} v{CHECKPOINT_VERSION}",
        f"head {net.head_kind}",
        f"input_dim {net.input_dim}",
        f"action_dim {net.action_dim}",
        f"hidden {net.hidden[0]} {net.hidden[1]}",
    ]
    for name, shape in net.segments:
        lines.append("segment " + name + " " + " ".join(str(s) for s in shape))
        seg = net.view(params, name)
        block = seg.reshape(1, -1) if len(shape) == 1 else seg.reshape(shape[0], -1)
        for row in block:
            lines.append(" ".join(repr(float(v)) for v in row))
    text = "\n".join(lines) + "\n"
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[PolicyNetwork, np.ndarray]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith(CHECKPOINT_TAG):
        raise ValueError(f"{path}: not a policy checkpoint")
    version = lines[0].split()[-1]
    if version != f"v{CHECKPOINT_VERSION}":
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("segment "):
        key, _, value = lines[i].partition(" ")
        header[key] = value
        i += 1
    net = PolicyNetwork(
        input_dim=int(header["input_dim"]),
        action_dim=int(header["action_dim"]),
        head_kind=header["head"],
        hidden=tuple(int(v) for v in header["hidden"].split()),  # type: ignore[arg-type]
    )
    params = np.zeros(net.n_params)
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] != "segment":
            raise ValueError(f"{path}: expected segment header at line {i + 1}")
        name = parts[1]
        shape = tuple(int(v) for v in parts[2:])
        rows = 1 if len(shape) == 1 else shape[0]
        values = []
        for r in range(rows):
            values.extend(float(v) for v in lines[i + 1 + r].split())
        seg = np.array(values).reshape(shape)
        net.view(params, name)[:] = seg
        i += 1 + rows
    return net, params
