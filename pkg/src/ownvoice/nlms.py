"""Sample-wise NLMS identification coupled with simulation on a second input.

The coefficient vector adapted on ``(y_o_a, y_i_a)`` is applied to ``y_o_b``
at every sample, before the update for that sample. With ``y_o_b = y_o_a``
the simulated signal is therefore identical to the adaptive filter output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


@dataclass(frozen=True)
class NlmsConfig:
    filter_length: int = 128
    step_size: float = 0.5
    regularization: float = 1e-6

    kind = "adaptive"

    def __post_init__(self):
        if int(self.filter_length) != self.filter_length or self.filter_length < 1:
            raise ValueError(f"filter length must be a positive integer, got {self.filter_length}")
        # mu = 0 is admitted as a degenerate no-adaptation setting
        if not 0.0 <= self.step_size < 2.0:
            raise ValueError(f"step size must lie in [0, 2), got {self.step_size}")
        if not self.regularization > 0:
            raise ValueError(f"regularization must be positive, got {self.regularization}")


@dataclass
class NlmsRunResult:
    simulated: np.ndarray
    adaptation_output: np.ndarray
    error: np.ndarray
    final_coefficients: np.ndarray


@numba.njit(cache=True)
def _nlms_kernel(x_a, d_a, x_b, h, mu, eps, sim, out, err):
    N = h.size
    for n in range(x_a.size):
        m = min(N, n + 1)  # taps with non-zero (non-pre-history) regressor samples
        acc_a = 0.0
        acc_b = 0.0
        norm = 0.0
        for j in range(m):
            xa = x_a[n - j]
            acc_a += h[j] * xa
            acc_b += h[j] * x_b[n - j]
            norm += xa * xa
        out[n] = acc_a
        sim[n] = acc_b
        e = d_a[n] - acc_a
        err[n] = e
        g = mu * e / (eps + norm)
        for j in range(m):
            h[j] += g * x_a[n - j]


def _as_input(x, name):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite samples")
    return x


def nlms_identify_and_simulate(y_o_a, y_i_a, y_o_b=None, config: NlmsConfig = NlmsConfig()) -> NlmsRunResult:
    """Adapt an FIR filter from ``y_o_a`` to ``y_i_a`` and replay it on ``y_o_b``.

    Per sample ``n`` with regressor ``y[n] = [y_o_a[n], ..., y_o_a[n-N+1]]``
    (zeros before the signal start)::

        out[n] = h[n] . y[n]
        sim[n] = h[n] . y_b[n]
        e[n]   = y_i_a[n] - out[n]
        h[n+1] = h[n] + mu / (eps + |y[n]|^2) * y[n] * e[n]

    ``y_o_b`` defaults to ``y_o_a`` (matched replay).
    """
    x_a = _as_input(y_o_a, "y_o_a")
    d_a = _as_input(y_i_a, "y_i_a")
    x_b = x_a if y_o_b is None else _as_input(y_o_b, "y_o_b")
    if d_a.size != x_a.size or x_b.size != x_a.size:
        raise ValueError(
            f"signal lengths differ: y_o_a={x_a.size}, y_i_a={d_a.size}, y_o_b={x_b.size}"
        )
    h = np.zeros(config.filter_length)
    sim, out, err = np.empty(x_a.size), np.empty(x_a.size), np.empty(x_a.size)
    _nlms_kernel(x_a, d_a, x_b, h, float(config.step_size), float(config.regularization), sim, out, err)
    return NlmsRunResult(sim, out, err, h)


def match_length(signal, target_len: int, pool=()) -> np.ndarray:
    """Cut ``signal`` to ``target_len`` or extend it with material from ``pool``.

    Pool signals are appended in order, cycling through the pool again if
    it is exhausted before ``target_len`` is reached.
    """
    x = np.asarray(signal, dtype=float)
    if target_len <= 0:
        raise ValueError(f"target length must be positive, got {target_len}")
    if x.size >= target_len:
        return x[:target_len].copy()
    pool = [np.asarray(p, dtype=float) for p in pool]
    if not any(p.size for p in pool):
        raise ValueError("cannot extend signal: filler pool is empty")
    parts, have = [x], x.size
    while have < target_len:
        for p in pool:
            take = p[: target_len - have]
            parts.append(take)
            have += take.size
            if have >= target_len:
                break
    return np.concatenate(parts)
