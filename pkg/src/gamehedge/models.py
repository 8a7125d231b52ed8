"""Stochastic-volatility market simulators and the volatility-steering experiment.

Every model drives the price by one Brownian motion ``W``:

    dS_t = S_t (r_t dt + nu_t dW_t),   B_t = exp(int_0^t r_u du).

The volatility factor is driven by ``W^U = rho W + sqrt(1 - rho^2) W_hat`` with an
independent ``W_hat``.  Prices use the log-Euler step with volatility frozen over
each step, so ``S`` stays positive and ``S / B`` is a martingale up to the
volatility discretization.
"""

from __future__ import annotations

import io
import math
import struct
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, BinaryIO, Callable, Sequence

import numpy as np
from scipy.linalg import cholesky

from .rng import STREAM_FBM, STREAM_PATHS, STREAM_STEER, normals

__all__ = [
    "Heston",
    "HullWhite",
    "Scott",
    "RoughFOU",
    "PathBatch",
    "simulate",
    "feller_check",
    "fbm_covariance",
    "fbm_sample",
    "fou_from_fbm",
    "heston_coefficients",
    "ExpClipTarget",
    "SteeringResult",
    "steer_volatility",
    "steering_threshold",
    "write_pathbatch_binary",
    "read_pathbatch_binary",
    "write_pathbatch_csv",
    "model_from_dict",
]


def _check_rho(rho: float):
    if not -1.0 < rho < 1.0:
        raise ValueError(f"correlation must lie in (-1, 1), got {rho}")


def _check_common(s0: float, T: float, r: Any):
    if not s0 > 0:
        raise ValueError("initial price must be positive")
    if not T > 0:
        raise ValueError("horizon must be positive")
    if np.any(np.asarray(r, dtype=float) < 0):
        raise ValueError("interest rate must be non-negative")


class _Model:
    s0: float
    T: float
    r: Any

    def rates(self, n_steps: int) -> np.ndarray:
        """Per-step short rate (a scalar is broadcast; a sequence must have one entry per step)."""
        r = np.asarray(self.r, dtype=float)
        if r.ndim == 0:
            return np.full(n_steps, float(r))
        if r.shape != (n_steps,):
            raise ValueError(f"rate schedule has {r.size} entries, expected {n_steps}")
        return r

    def with_s0(self, s0: float):
        return type(self)(**{**self.__dict__, "s0": float(s0)})

    def with_rate(self, r):
        return type(self)(**{**self.__dict__, "r": r})

    def to_dict(self) -> dict:
        d = {"model": self.name}
        for k, v in self.__dict__.items():
            d[k] = list(v) if isinstance(v, tuple) else v
        return d


@dataclass(frozen=True)
class Heston(_Model):
    """Variance ``dU = kappa (theta - U) dt + xi sqrt(U) dW^U``, ``nu = sqrt(U)``."""

    s0: float = 80.0
    T: float = 1.0
    kappa: float = 2.0
    theta: float = 0.09
    xi: float = 0.3
    rho: float = -0.5
    v0: float = 0.09
    r: Any = 0.0
    name = "heston"

    def __post_init__(self):
        _check_common(self.s0, self.T, self.r)
        _check_rho(self.rho)
        if not (self.kappa > 0 and self.theta > 0 and self.v0 > 0 and self.xi >= 0):
            raise ValueError("Heston needs kappa, theta, v0 > 0 and xi >= 0")
        if not feller_check(self):
            raise ValueError(
                f"Feller condition 2*kappa*theta > xi^2 fails: {2 * self.kappa * self.theta} <= {self.xi**2}"
            )


@dataclass(frozen=True)
class HullWhite(_Model):
    """Variance ``dU = U (kappa dt + theta dW^U)`` (exact lognormal update), ``nu = sqrt(U)``."""

    s0: float = 80.0
    T: float = 1.0
    kappa: float = 0.0
    theta: float = 0.3
    rho: float = -0.5
    u0: float = 0.09
    r: Any = 0.0
    name = "hullwhite"

    def __post_init__(self):
        _check_common(self.s0, self.T, self.r)
        _check_rho(self.rho)
        if not self.u0 > 0:
            raise ValueError("initial variance must be positive")


@dataclass(frozen=True)
class Scott(_Model):
    """``dU = -kappa U dt + theta dW^U`` (exact OU update), ``nu = lam * exp(U)``."""

    s0: float = 80.0
    T: float = 1.0
    lam: float = 0.3
    kappa: float = 1.0
    theta: float = 0.3
    rho: float = -0.5
    u0: float = 0.0
    r: Any = 0.0
    name = "scott"

    def __post_init__(self):
        _check_common(self.s0, self.T, self.r)
        _check_rho(self.rho)
        if not (self.lam > 0 and self.kappa > 0 and self.theta > 0):
            raise ValueError("Scott needs lam, kappa, theta > 0")


@dataclass(frozen=True)
class RoughFOU(_Model):
    """``nu = nu0 * exp(kappa U)`` with ``U`` a fractional OU process of Hurst index ``H``.

    ``U_t = B_t - lam e^{-lam t} int_0^t e^{lam u} B_u du`` where
    ``B = rho B1 + sqrt(1 - rho^2) B2`` and ``B1`` is built causally from the
    price driver ``W``.
    """

    s0: float = 80.0
    T: float = 1.0
    H: float = 0.1
    lam: float = 1.0
    kappa: float = 1.0
    rho: float = -0.5
    nu0: float = 0.3
    r: Any = 0.0
    name = "roughfou"

    def __post_init__(self):
        _check_common(self.s0, self.T, self.r)
        _check_rho(self.rho)
        if not 0 < self.H < 1:
            raise ValueError("Hurst index must lie in (0, 1)")
        if not (self.lam > 0 and self.kappa > 0 and self.nu0 > 0):
            raise ValueError("RoughFOU needs lam, kappa, nu0 > 0")


_MODELS = {"heston": Heston, "hullwhite": HullWhite, "scott": Scott, "roughfou": RoughFOU}


def model_from_dict(d: dict) -> _Model:
    d = dict(d)
    name = str(d.pop("model", "")).lower().replace("-", "").replace("_", "")
    if name not in _MODELS:
        raise ValueError(f"unknown model {name!r}; expected one of {sorted(_MODELS)}")
    if isinstance(d.get("r"), list):
        d["r"] = tuple(float(v) for v in d["r"])
    return _MODELS[name](**d)


def feller_check(spec: Heston) -> bool:
    """``2 kappa theta > xi^2``; a zero ``xi`` is deterministic and always passes."""
    return spec.xi == 0 or 2.0 * spec.kappa * spec.theta > spec.xi**2


@dataclass(frozen=True)
class PathBatch:
    """Simulated paths on a shared grid; every array is ``(n_paths, n_steps + 1)``."""

    times: np.ndarray
    S: np.ndarray
    nu: np.ndarray
    B: np.ndarray
    W: np.ndarray
    seed: int
    scheme: str
    spec: Any = field(default=None, compare=False)

    FIELDS = ("S", "nu", "B", "W")

    @property
    def n_paths(self) -> int:
        return int(self.S.shape[0])

    @property
    def n_steps(self) -> int:
        return int(self.times.size - 1)

    def scaled(self, s0: float) -> "PathBatch":
        """Same paths started from ``s0`` (every model here is scale-free in ``S``)."""
        k = s0 / float(self.S[0, 0])
        spec = self.spec.with_s0(s0) if self.spec is not None else None
        return PathBatch(self.times, self.S * k, self.nu, self.B, self.W, self.seed, self.scheme, spec)


def _uniform_step(times: np.ndarray) -> float:
    dt = np.diff(times)
    if dt.size == 0 or np.any(dt <= 0):
        raise ValueError("time grid must be strictly increasing")
    if not np.allclose(dt, dt[0], rtol=1e-10, atol=0.0):
        raise ValueError("time grid must be uniform")
    return float(dt[0])


def fbm_covariance(H: float, s, t):
    """``0.5 (s^2H + t^2H - |t - s|^2H)``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(t - s) ** (2 * H))


@lru_cache(maxsize=16)
def _cholesky_factor(H: float, grid: tuple[float, ...]) -> np.ndarray:
    t = np.asarray(grid)
    cov = fbm_covariance(H, t[:, None], t[None, :])
    return cholesky(cov, lower=True)


@lru_cache(maxsize=16)
def _circulant_sqrt_eigs(H: float, n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    gam = 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * np.abs(k) ** (2 * H) + np.abs(k - 1) ** (2 * H))
    row = np.concatenate((gam, gam[-2:0:-1]))
    lam = np.fft.fft(row).real
    if np.min(lam) < -1e-10 * np.max(lam):
        raise ValueError("circulant embedding is not non-negative definite")
    return np.sqrt(np.maximum(lam, 0.0) / row.size)


def _fbm_from_normals(H: float, times: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Causal fBM from standard normals ``z`` of shape ``(n_paths, M)`` (Cholesky)."""
    L = _cholesky_factor(float(H), tuple(times[1:].tolist()))
    out = np.zeros((z.shape[0], times.size))
    out[:, 1:] = z @ L.T
    return out


def fbm_sample(H: float, times, n_paths: int, seed: int, method: str = "auto", threads: int | None = 1) -> np.ndarray:
    """Fractional Brownian paths on ``times`` (``times[0] == 0``), shape ``(n_paths, len(times))``.

    ``method`` is ``"cholesky"``, ``"circulant"`` (uniform grids only) or
    ``"auto"``: Cholesky up to 2048 points, circulant embedding beyond.
    """
    t = np.asarray(times, dtype=float)
    if not 0 < H < 1:
        raise ValueError("Hurst index must lie in (0, 1)")
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
        raise ValueError("times must be a 1-d grid starting at 0")
    M = t.size - 1
    if method == "auto":
        method = "cholesky" if M <= 2048 else "circulant"
    if method == "cholesky":
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        z = normals(n_paths, (M,), seed, STREAM_FBM, threads)
        return _fbm_from_normals(H, t, z)
    if method == "circulant":
        dt = _uniform_step(t)
        sq = _circulant_sqrt_eigs(float(H), M)
        z = normals(n_paths, (2, 2 * M), seed, STREAM_FBM, threads)
        y = np.fft.fft(sq * (z[:, 0] + 1j * z[:, 1]), axis=1)
        out = np.zeros((n_paths, M + 1))
        out[:, 1:] = np.cumsum(y.real[:, :M], axis=1) * dt**H
        return out
    raise ValueError(f"unknown fBM method {method!r}")


def fou_from_fbm(BH: np.ndarray, times: np.ndarray, lam: float) -> np.ndarray:
    """Fractional OU by integration by parts, trapezoidal rule for the Riemann term."""
    t = np.asarray(times, dtype=float)
    e = np.exp(lam * t)
    integrand = BH * e
    incr = 0.5 * (integrand[..., 1:] + integrand[..., :-1]) * np.diff(t)
    integral = np.concatenate((np.zeros(BH.shape[:-1] + (1,)), np.cumsum(incr, axis=-1)), axis=-1)
    return BH - lam * integral / e


def simulate(spec: _Model, n_steps: int, n_paths: int, seed: int, threads: int | None = 1) -> PathBatch:
    """Simulate ``n_paths`` paths of ``spec`` on a uniform grid of ``n_steps`` steps.

    Path ``i`` uses its own counter-based stream, so the batch is identical for
    every thread count.
    """
    if n_steps < 1 or n_paths < 1:
        raise ValueError("need at least one step and one path")
    T = float(spec.T)
    times = np.linspace(0.0, T, n_steps + 1)
    dt = T / n_steps
    r = spec.rates(n_steps)
    z = normals(n_paths, (2, n_steps), seed, STREAM_PATHS, threads)
    dW = z[:, 0] * math.sqrt(dt)
    dW_hat = z[:, 1] * math.sqrt(dt)
    W = np.zeros((n_paths, n_steps + 1))
    np.cumsum(dW, axis=1, out=W[:, 1:])
    rho = spec.rho
    dWU = rho * dW + math.sqrt(1.0 - rho * rho) * dW_hat
    nu = np.empty((n_paths, n_steps + 1))

    if isinstance(spec, Heston):
        U = np.full(n_paths, float(spec.v0))
        nu[:, 0] = math.sqrt(spec.v0)
        for k in range(n_steps):
            Up = np.maximum(U, 0.0)
            U = U + spec.kappa * (spec.theta - Up) * dt + spec.xi * np.sqrt(Up) * dWU[:, k]
            nu[:, k + 1] = np.sqrt(np.maximum(U, 0.0))
        scheme = "heston-full-truncation-euler"
    elif isinstance(spec, HullWhite):
        logU = np.log(spec.u0) + np.concatenate(
            (np.zeros((n_paths, 1)), np.cumsum((spec.kappa - 0.5 * spec.theta**2) * dt + spec.theta * dWU, axis=1)),
            axis=1,
        )
        nu[:] = np.exp(0.5 * logU)
        scheme = "hullwhite-exact-lognormal"
    elif isinstance(spec, Scott):
        decay = math.exp(-spec.kappa * dt)
        scale = spec.theta * math.sqrt((1.0 - decay * decay) / (2.0 * spec.kappa * dt))
        U = np.full(n_paths, float(spec.u0))
        nu[:, 0] = spec.lam * math.exp(spec.u0)
        for k in range(n_steps):
            U = U * decay + scale * dWU[:, k]
            nu[:, k + 1] = spec.lam * np.exp(U)
        scheme = "scott-exact-ou"
    elif isinstance(spec, RoughFOU):
        B1 = _fbm_from_normals(spec.H, times, z[:, 0])
        B2 = _fbm_from_normals(spec.H, times, z[:, 1])
        BH = rho * B1 + math.sqrt(1.0 - rho * rho) * B2
        U = fou_from_fbm(BH, times, spec.lam)
        nu[:] = spec.nu0 * np.exp(spec.kappa * U)
        scheme = "roughfou-cholesky-trapezoid"
    else:
        raise TypeError(f"unsupported model {type(spec).__name__}")

    incr = (r[None, :] - 0.5 * nu[:, :-1] ** 2) * dt + nu[:, :-1] * dW
    S = np.empty((n_paths, n_steps + 1))
    S[:, 0] = spec.s0
    S[:, 1:] = spec.s0 * np.exp(np.cumsum(incr, axis=1))
    b = np.exp(np.concatenate(([0.0], np.cumsum(r * dt))))
    B = np.broadcast_to(b, S.shape)
    return PathBatch(times, S, nu, B, W, int(seed), scheme, spec)


# --- binary and CSV layouts -------------------------------------------------

_MAGIC = b"FIMPB1"


def write_pathbatch_binary(batch: PathBatch, fh: BinaryIO) -> None:
    """Little-endian layout: magic, ``uint64 M``, ``uint64 n_paths``, ``uint32 n_fields``,
    ``uint32 len`` + comma-joined field names, then ``times`` (``M + 1`` doubles) and
    one ``n_paths x (M + 1)`` row-major double block per field."""
    names = ",".join(batch.FIELDS).encode()
    fh.write(_MAGIC)
    fh.write(struct.pack("<QQI", batch.n_steps, batch.n_paths, len(batch.FIELDS)))
    fh.write(struct.pack("<I", len(names)))
    fh.write(names)
    fh.write(np.ascontiguousarray(batch.times, dtype="<f8").tobytes())
    for name in batch.FIELDS:
        fh.write(np.ascontiguousarray(getattr(batch, name), dtype="<f8").tobytes())


def read_pathbatch_binary(fh: BinaryIO) -> dict[str, np.ndarray]:
    if fh.read(len(_MAGIC)) != _MAGIC:
        raise ValueError("not a path-batch file (bad magic)")
    M, n_paths, n_fields = struct.unpack("<QQI", fh.read(20))
    (n_names,) = struct.unpack("<I", fh.read(4))
    names = fh.read(n_names).decode().split(",")
    if len(names) != n_fields:
        raise ValueError("field count does not match field list")
    out = {"times": np.frombuffer(fh.read(8 * (M + 1)), dtype="<f8").copy()}
    for name in names:
        buf = fh.read(8 * n_paths * (M + 1))
        out[name] = np.frombuffer(buf, dtype="<f8").reshape(n_paths, M + 1).copy()
    return out


def write_pathbatch_csv(batch: PathBatch, fh: io.TextIOBase) -> None:
    """One row per ``(path, time)``: ``path,t,S,nu,B,W`` with 17 significant digits."""
    n, m = batch.S.shape
    cols = [np.repeat(np.arange(n), m), np.tile(batch.times, n)]
    cols += [np.asarray(getattr(batch, f)).reshape(-1) for f in batch.FIELDS]
    fh.write("path,t,S,nu,B,W\n")
    data = np.column_stack(cols)
    np.savetxt(fh, data, delimiter=",", fmt=["%d"] + ["%.17g"] * 5)


# --- volatility steering ----------------------------------------------------


def heston_coefficients(spec: Heston):
    """Coefficients ``(a, b, c)`` of ``d nu = a dt + b dW_hat + c dW`` for ``nu = sqrt(U)``."""
    k, th, xi, rho = spec.kappa, spec.theta, spec.xi, spec.rho

    def a(x):
        return 0.5 * k * (th / x - x) - xi * xi / (8.0 * x)

    b = 0.5 * xi * math.sqrt(1.0 - rho * rho)
    c = 0.5 * xi * rho
    return a, b, c


@dataclass(frozen=True)
class ExpClipTarget:
    """Target volatility ``nu0 * exp(clip(a W_t + b t, -c, c))``; constant when ``a = b = 0``."""

    nu0: float
    a: float = 0.0
    b: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if not (self.nu0 > 0 and self.c >= 0):
            raise ValueError("target needs nu0 > 0 and c >= 0")

    def __call__(self, times: np.ndarray, W: np.ndarray) -> np.ndarray:
        return self.nu0 * np.exp(np.clip(self.a * W + self.b * times, -self.c, self.c))

    def bound(self) -> float:
        """``C`` with ``1/C <= target <= C``."""
        return max(self.nu0 * math.exp(self.c), 1.0 / (self.nu0 * math.exp(-self.c)))


def steering_threshold(spec: Heston, C: float, eps: float, n_grid: int = 2001) -> float:
    """``2 C~ / T`` where ``C~`` bounds ``|a| + |b| + |c| + 1/|b|`` for volatility in ``[1/(2C), C + 1/(2C)]``."""
    a, b, c = heston_coefficients(spec)
    x = np.linspace(1.0 / (2 * C), C + 1.0 / (2 * C), n_grid)
    ct = float(np.max(np.abs(a(x)) + abs(b) + abs(c) + (1.0 / abs(b) if b != 0 else math.inf)))
    return 2.0 * ct / spec.T


@dataclass(frozen=True)
class SteeringResult:
    prob_exceed: float
    mc_stderr: float
    n_blocks: int
    eps: float
    n_paths: int
    n_fine: int
    threshold: float
    below_threshold: bool
    clamp_hits: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _steer_chunk(spec, target, n_blocks, eps, z, times):
    a_fn, b, c = heston_coefficients(spec)
    n_paths, _, n_fine = z.shape
    dt = spec.T / n_fine
    m = n_fine // n_blocks
    sq = math.sqrt(dt)
    dW = z[:, 0] * sq
    dWt = z[:, 1] * sq
    W = np.zeros((n_paths, n_fine + 1))
    np.cumsum(dW, axis=1, out=W[:, 1:])
    alpha = target(times[None, :], W)
    nu = np.full(n_paths, math.sqrt(spec.v0))
    alive = np.abs(alpha[:, 0] - nu) < eps
    I = np.zeros(n_paths)
    L = np.zeros(n_paths)
    gamma = np.zeros(n_paths)
    clamp = float(n_blocks) ** 2
    clamp_hits = 0
    for j in range(n_fine):
        if j % m == 0:
            k = j // m
            if k >= 1:
                J = alpha[:, j] - alpha[:, j - m]
                raw = n_blocks / (b * spec.T) * (J - I - L)
                gamma = np.clip(raw, -clamp, clamp)
                clamp_hits += int(np.count_nonzero(np.abs(raw) > clamp))
            I[:] = 0.0
            L[:] = 0.0
        drift = a_fn(nu) * dt
        step = drift + b * dWt[:, j] + b * gamma * dt + c * dW[:, j]
        nu = np.where(alive, nu + step, nu)
        I += np.where(alive, drift + c * dW[:, j], 0.0)
        L += np.where(alive, b * dWt[:, j], 0.0)
        alive &= np.abs(alpha[:, j + 1] - nu) < eps
    return np.count_nonzero(~alive), clamp_hits


def steer_volatility(
    spec: Heston,
    target: Callable[[np.ndarray, np.ndarray], np.ndarray],
    n_blocks: int,
    eps: float,
    n_paths: int,
    seed: int,
    n_fine: int = 1024,
    threads: int | None = 1,
    chunk: int = 2048,
) -> SteeringResult:
    """Steer Heston volatility towards ``target`` by the blockwise drift construction.

    Simulates directly under the changed measure: ``W`` and ``W~`` are independent
    Brownian motions and ``W_hat = W~ + int gamma``.  On block ``k + 1`` the drift
    ``gamma`` offsets the previous block's miss ``J_k - I_k - L_k``, clamped at
    ``+-n^2``.  A path counts as exceeding once ``|target - nu| >= eps``, after
    which it is frozen.
    """
    if n_blocks < 1 or n_paths < 1:
        raise ValueError("need at least one block and one path")
    if not eps > 0:
        raise ValueError("eps must be positive")
    _, b, _ = heston_coefficients(spec)
    if b <= 0:
        raise ValueError("steering needs xi > 0 and |rho| < 1")
    m = max(1, -(-n_fine // n_blocks))
    n_fine = m * n_blocks
    times = np.linspace(0.0, spec.T, n_fine + 1)
    if not math.isclose(float(target(np.zeros(1), np.zeros(1))[0]), math.sqrt(spec.v0), rel_tol=1e-12):
        raise ValueError("target must start at the model's initial volatility")
    C = target.bound() if hasattr(target, "bound") else None
    if C is None or not math.isfinite(C):
        raise ValueError("target must be bounded with bounded reciprocal")
    thr = steering_threshold(spec, C, eps)
    below = n_blocks <= thr
    if below:
        warnings.warn(f"n_blocks={n_blocks} does not exceed 2*C~/T = {thr:.3g}", RuntimeWarning, stacklevel=2)

    exceed = 0
    hits = 0
    for lo in range(0, n_paths, chunk):
        hi = min(n_paths, lo + chunk)
        z = normals(hi - lo, (2, n_fine), seed, STREAM_STEER, threads, offset=lo)
        e, h = _steer_chunk(spec, target, n_blocks, eps, z, times)
        exceed += e
        hits += h
    p = exceed / n_paths
    return SteeringResult(
        prob_exceed=p,
        mc_stderr=math.sqrt(max(p * (1 - p), 0.0) / n_paths),
        n_blocks=n_blocks,
        eps=eps,
        n_paths=n_paths,
        n_fine=n_fine,
        threshold=thr,
        below_threshold=below,
        clamp_hits=hits / n_paths,
    )
