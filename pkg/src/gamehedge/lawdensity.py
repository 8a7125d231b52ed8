"""Building a prescribed discrete martingale out of a Brownian motion.

Given a finite-support martingale law for ``M_0, ..., M_n``, cut ``[0, T]`` into
``n`` blocks and let ``Z_k`` be the Brownian increment over block ``k``.  The
chain is read off by inverting the conditional step CDF at ``Phi(Z_k)``:

    M_k = sup { y : F_k(y | M_0..M_{k-1}) < Phi(Z_k) },

so ``M_k`` is the smallest support point whose cumulative probability reaches
``Phi(Z_k)``.  Inside a block the path is filled in with the Brownian
martingale ``E[M_{k+1} | W_s, s <= t]``, which for a step function of the last
increment is a finite sum of Gaussian CDFs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.special import ndtr, ndtri

from .rng import STREAM_COUPLING, normals

__all__ = [
    "Conditional",
    "DiscreteMartingaleLaw",
    "CouplingSample",
    "CouplingBatch",
    "LawMatch",
    "GBMTarget",
    "WeakDistanceRow",
    "WeakDistanceTable",
    "law_from_dict",
    "binomial_gbm_law",
    "quantile_coupling_sample",
    "law_match_test",
    "psi",
    "brownian_interpolation",
    "interpolate_paths",
    "weak_distance_diag",
    "FUNCTIONALS",
]

_MEAN_TOL = 1e-12
_PROB_TOL = 1e-12


def _key(x: float) -> float:
    # 12 significant digits absorbs JSON round-off in conditioning values
    return float(f"{float(x):.12g}")


@dataclass(frozen=True)
class Conditional:
    """Law of ``M_{k+1}`` given the past: sorted support and probabilities."""

    given: float | tuple[float, ...]
    support: np.ndarray
    prob: np.ndarray
    cdf: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, given, support, prob) -> "Conditional":
        s = np.asarray(support, dtype=float)
        p = np.asarray(prob, dtype=float)
        if s.ndim != 1 or s.shape != p.shape or s.size == 0:
            raise ValueError("support and prob must be equal-length non-empty lists")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > _PROB_TOL:
            raise ValueError(f"conditional pmf sums to {p.sum():.15g}, not 1")
        if not np.all(s > 0) or not np.all(np.isfinite(s)):
            raise ValueError("support points must be positive and finite")
        keep = p > 0
        s, p = s[keep], p[keep]
        order = np.argsort(s, kind="stable")
        s, p = s[order], p[order]
        if np.any(np.diff(s) <= 0):
            raise ValueError("support points must be distinct")
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        return cls(given, s, p, cdf)

    @property
    def parent(self) -> float:
        return self.given[-1] if isinstance(self.given, tuple) else self.given

    def mean(self) -> float:
        return float(self.support @ self.prob)

    def invert(self, u: np.ndarray) -> np.ndarray:
        """Smallest support point with cumulative probability ``>= u``."""
        j = np.searchsorted(self.cdf, u, side="left")
        return self.support[np.minimum(j, self.support.size - 1)]

    def thresholds(self, block: float) -> np.ndarray:
        """Increment levels ``z_j`` where the inverted value jumps from ``y_j`` to ``y_{j+1}``."""
        return math.sqrt(block) * ndtri(self.cdf[:-1])


@dataclass(frozen=True)
class DiscreteMartingaleLaw:
    """Finite-support martingale ``M_0 = s0, M_1, ..., M_n`` on ``[0, T]``.

    ``steps[k]`` holds the conditionals of ``M_{k+1}``: ``by_value`` is keyed on
    the current value, ``by_history`` on the whole tuple ``(M_0, ..., M_k)`` and
    takes precedence.  Every reachable state needs a conditional.
    """

    n: int
    s0: float
    T: float
    steps: tuple[tuple[dict, dict], ...]
    C: float

    def conditional(self, k: int, history: Sequence[float]) -> Conditional:
        by_value, by_history = self.steps[k]
        h = tuple(_key(x) for x in history)
        c = by_history.get(h)
        if c is None:
            c = by_value.get(h[-1])
        if c is None:
            raise KeyError(f"no conditional for step {k + 1} given history {tuple(history)}")
        return c

    @property
    def block(self) -> float:
        return self.T / self.n

    def history_dependent(self, k: int) -> bool:
        return bool(self.steps[k][1])

    def joint_pmf(self, max_paths: int = 1_000_000) -> tuple[np.ndarray, np.ndarray]:
        """All positive-probability paths ``(M_0..M_n)`` and their probabilities."""
        paths = [((self.s0,), 1.0)]
        for k in range(self.n):
            nxt = []
            for hist, q in paths:
                c = self.conditional(k, hist)
                nxt.extend((hist + (float(y),), q * float(p)) for y, p in zip(c.support, c.prob))
            if len(nxt) > max_paths:
                raise ValueError(f"law has more than {max_paths} paths")
            paths = nxt
        return np.array([h for h, _ in paths]), np.array([q for _, q in paths])

    def value_range(self) -> tuple[float, float]:
        lo, hi = self.s0, self.s0
        for by_value, by_history in self.steps:
            for c in list(by_value.values()) + list(by_history.values()):
                lo = min(lo, float(c.support[0]))
                hi = max(hi, float(c.support[-1]))
        return lo, hi

    def to_dict(self) -> dict:
        out = []
        for by_value, by_history in self.steps:
            conds = []
            for c in list(by_value.values()) + list(by_history.values()):
                g = list(c.given) if isinstance(c.given, tuple) else c.given
                conds.append({"given": g, "support": c.support.tolist(), "prob": c.prob.tolist()})
            out.append({"conditionals": conds})
        return {"n": self.n, "s0": self.s0, "T": self.T, "C": self.C, "steps": out}


def _reachable_check(law: DiscreteMartingaleLaw) -> None:
    # walk reachable states; Markov steps collapse states to the current value
    states: set[tuple[float, ...]] = {(_key(law.s0),)}
    for k in range(law.n):
        nxt: set[tuple[float, ...]] = set()
        keep_history = any(law.history_dependent(j) for j in range(k + 1, law.n))
        for h in states:
            try:
                c = law.conditional(k, h)
            except KeyError as err:
                raise ValueError(err.args[0]) from None
            scale = max(1.0, abs(c.parent))
            if abs(c.mean() - c.parent) > _MEAN_TOL * scale:
                raise ValueError(
                    f"step {k + 1} given {c.given}: conditional mean {c.mean():.15g} differs from {c.parent:.15g}"
                )
            for y in c.support:
                nxt.add(h + (_key(y),) if keep_history else (_key(y),))
        states = nxt


def law_from_dict(d: Mapping[str, Any]) -> DiscreteMartingaleLaw:
    """Parse ``{"n", "s0", "T"?, "C"?, "steps": [{"conditionals": [{"given", "support", "prob"}]}]}``.

    ``given`` is the current value (Markov) or the list ``[M_0, ..., M_k]``.
    ``C`` defaults to the smallest bound with ``1/C <= M <= C`` on all values.
    """
    n = int(d["n"])
    s0 = float(d["s0"])
    T = float(d.get("T", 1.0))
    if n < 1:
        raise ValueError("need at least one step")
    if not s0 > 0 or not T > 0:
        raise ValueError("s0 and T must be positive")
    raw = d["steps"]
    if len(raw) != n:
        raise ValueError(f"expected {n} steps, got {len(raw)}")
    steps = []
    for k, step in enumerate(raw):
        by_value: dict = {}
        by_history: dict = {}
        for item in step["conditionals"]:
            given = item["given"]
            if isinstance(given, (list, tuple)):
                if len(given) != k + 1:
                    raise ValueError(f"step {k + 1}: history must have {k + 1} entries")
                key = tuple(_key(x) for x in given)
                c = Conditional.build(tuple(float(x) for x in given), item["support"], item["prob"])
                target = by_history
            else:
                key = _key(given)
                c = Conditional.build(float(given), item["support"], item["prob"])
                target = by_value
            if key in target:
                raise ValueError(f"step {k + 1}: duplicate conditional for {given}")
            target[key] = c
        steps.append((by_value, by_history))
    law = DiscreteMartingaleLaw(n, s0, T, tuple(steps), 1.0)
    _reachable_check(law)
    lo, hi = law.value_range()
    C_min = max(hi, 1.0 / lo)
    C = float(d.get("C", C_min))
    if C < C_min * (1 - 1e-12):
        raise ValueError(f"values leave [1/C, C] for C = {C}")
    return DiscreteMartingaleLaw(n, s0, T, law.steps, C)


def binomial_gbm_law(n: int, s0: float = 100.0, sigma: float = 0.3, T: float = 1.0) -> DiscreteMartingaleLaw:
    """Recombining binomial martingale approximating driftless geometric Brownian motion.

    Node ``(k, i)`` sits at ``s0 exp(sigma sqrt(T/n) (2i - k))``; the up probability
    is set from the actual node values so each conditional mean is exact.
    ``sigma = 0`` gives the constant law.
    """
    if n < 1:
        raise ValueError("need at least one step")
    h = sigma * math.sqrt(T / n)

    def node(k: int, i: int) -> float:
        return s0 * math.exp(h * (2 * i - k))

    steps = []
    for k in range(n):
        if sigma == 0:
            steps.append({"conditionals": [{"given": s0, "support": [s0], "prob": [1.0]}]})
            continue
        conds = []
        for i in range(k + 1):
            x = node(k, i)
            lo, hi = node(k + 1, i), node(k + 1, i + 1)
            p = (x - lo) / (hi - lo)
            conds.append({"given": x, "support": [lo, hi], "prob": [1.0 - p, p]})
        steps.append({"conditionals": conds})
    return law_from_dict({"n": n, "s0": s0, "T": T, "steps": steps})


@dataclass(frozen=True)
class CouplingSample:
    """One coupled path: increments ``z`` (variance ``T/n``) and chain ``m`` of length ``n + 1``.

    ``w_times``/``w`` carry the driving Brownian path on a fine grid when it was simulated.
    """

    z: np.ndarray
    m: np.ndarray
    w_times: np.ndarray | None = None
    w: np.ndarray | None = None


@dataclass(frozen=True)
class CouplingBatch:
    """``Z[i, k]`` is the increment over block ``k``; ``M[i, :]`` the chain; ``W`` the optional fine path."""

    Z: np.ndarray
    M: np.ndarray
    T: float
    seed: int
    w_times: np.ndarray | None = None
    W: np.ndarray | None = None

    def __len__(self) -> int:
        return self.M.shape[0]

    def __getitem__(self, i: int) -> CouplingSample:
        w = None if self.W is None else self.W[i]
        return CouplingSample(self.Z[i], self.M[i], self.w_times, w)


def _groups(law: DiscreteMartingaleLaw, k: int, M: np.ndarray):
    """Yield ``(conditional, row indices)`` for the states of step ``k``."""
    if law.history_dependent(k):
        keys, inv = np.unique(M[:, : k + 1], axis=0, return_inverse=True)
    else:
        keys, inv = np.unique(M[:, k], return_inverse=True)
        keys = keys[:, None]
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(keys.shape[0] + 1))
    for g in range(keys.shape[0]):
        rows = order[bounds[g] : bounds[g + 1]]
        hist = keys[g] if law.history_dependent(k) else M[rows[0], : k + 1]
        yield law.conditional(k, hist), rows


def _chain_from_increments(law: DiscreteMartingaleLaw, Z: np.ndarray) -> np.ndarray:
    n_samples = Z.shape[0]
    U = ndtr(Z / math.sqrt(law.block))
    M = np.empty((n_samples, law.n + 1))
    M[:, 0] = law.s0
    for k in range(law.n):
        for c, rows in _groups(law, k, M):
            M[rows, k + 1] = c.invert(U[rows, k])
    return M


def quantile_coupling_sample(
    law: DiscreteMartingaleLaw,
    n_samples: int,
    seed: int,
    threads: int | None = 1,
    fine_per_block: int | None = None,
) -> CouplingBatch:
    """Draw ``n_samples`` coupled chains.

    Without ``fine_per_block`` each sample draws its ``n`` block increments
    directly.  With it, each sample draws a Brownian path on a grid of
    ``n * fine_per_block`` steps and the block increments are read off that path,
    which is what :func:`interpolate_paths` needs.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if fine_per_block is None:
        Z = normals(n_samples, (law.n,), seed, STREAM_COUPLING, threads) * math.sqrt(law.block)
        return CouplingBatch(Z, _chain_from_increments(law, Z), law.T, seed)
    m = int(fine_per_block)
    if m < 1:
        raise ValueError("fine_per_block must be positive")
    n_fine = law.n * m
    dW = normals(n_samples, (n_fine,), seed, STREAM_COUPLING, threads) * math.sqrt(law.T / n_fine)
    W = np.zeros((n_samples, n_fine + 1))
    np.cumsum(dW, axis=1, out=W[:, 1:])
    Z = np.diff(W[:, ::m], axis=1)
    times = np.linspace(0.0, law.T, n_fine + 1)
    return CouplingBatch(Z, _chain_from_increments(law, Z), law.T, seed, times, W)


@dataclass(frozen=True)
class LawMatch:
    tv_distance: float
    chi2_stat: float
    dof: int
    p_value: float
    passed: bool
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "tv_distance": self.tv_distance,
            "chi2_stat": self.chi2_stat,
            "dof": self.dof,
            "p_value": self.p_value,
            "pass": self.passed,
            "n_samples": self.n_samples,
        }


def law_match_test(M: np.ndarray, law: DiscreteMartingaleLaw, level: float = 0.01) -> LawMatch:
    """Empirical joint pmf of the sampled chains against the exact one.

    Passes when the chi-square p-value exceeds ``level``.  A sampled path that
    the law does not charge raises ``ValueError``: the inversion is broken.
    """
    M = np.asarray(M, dtype=float)
    paths, probs = law.joint_pmf()
    index = {tuple(_key(x) for x in row): j for j, row in enumerate(paths)}
    counts = np.zeros(len(paths))
    rows, mult = np.unique(M, axis=0, return_counts=True)
    for row, c in zip(rows, mult):
        j = index.get(tuple(_key(x) for x in row))
        if j is None:
            raise ValueError(f"sampled path {tuple(row)} is not in the law's support")
        counts[j] += c
    N = int(M.shape[0])
    tv = 0.5 * float(np.abs(counts / N - probs).sum())
    if len(paths) == 1:
        return LawMatch(tv, 0.0, 0, 1.0, True, N)
    chi2, p = stats.chisquare(counts, probs * N)
    return LawMatch(tv, float(chi2), len(paths) - 1, float(p), bool(p > level), N)


def psi(c: Conditional, block: float, w, tau):
    """``E[M_{k+1} | increment so far = w]`` with ``tau`` left in the block.

    ``M_{k+1}`` jumps from ``y_j`` to ``y_{j+1}`` when the block increment
    crosses ``z_j``, so the Gaussian integral is a sum of normal CDFs.  At
    ``tau = 0`` it is the step function itself.
    """
    w = np.asarray(w, dtype=float)
    tau = np.asarray(tau, dtype=float)
    z = c.thresholds(block)
    jumps = np.diff(c.support)
    out = np.full(np.broadcast(w, tau).shape, c.support[0])
    for zj, dj in zip(z, jumps):
        with np.errstate(divide="ignore", invalid="ignore"):
            smooth = ndtr((w - zj) / np.sqrt(tau))
        out = out + dj * np.where(tau > 0, smooth, (w > zj).astype(float))
    return out


def _psi_hermite(c: Conditional, block: float, w: float, tau: float, order: int) -> float:
    x, wt = np.polynomial.hermite.hermgauss(order)
    z = c.thresholds(block)
    v = w + math.sqrt(2.0 * tau) * x
    j = np.searchsorted(z, v, side="left")
    return float(wt @ c.support[j] / math.sqrt(math.pi))


def _block_of(law: DiscreteMartingaleLaw, t: float) -> int:
    k = int(math.floor(t / law.block + 1e-12))
    return min(k, law.n)


def brownian_interpolation(
    law: DiscreteMartingaleLaw,
    sample: CouplingSample,
    t: float,
    w: float | None = None,
    method: str = "exact",
    quadrature_order: int = 64,
) -> float:
    """Value at time ``t`` of the Brownian martingale through the sampled chain.

    ``w`` is ``W_t - W_{kT/n}`` for the block ``k`` containing ``t``; when omitted
    it is read from the sample's fine Brownian path.  ``method="gauss-hermite"``
    replaces the closed form with Gauss-Hermite quadrature of the same integral.
    """
    if not 0.0 <= t <= law.T * (1 + 1e-12):
        raise ValueError(f"t = {t} outside [0, {law.T}]")
    k = _block_of(law, t)
    if k == law.n:
        return float(sample.m[law.n])
    if w is None:
        if sample.w is None:
            raise ValueError("sample has no Brownian path; pass w")
        i = int(np.argmin(np.abs(sample.w_times - t)))
        j = int(np.argmin(np.abs(sample.w_times - k * law.block)))
        if abs(sample.w_times[i] - t) > 1e-12 * law.T:
            raise ValueError("t is not on the sample's Brownian grid")
        w = float(sample.w[i] - sample.w[j])
    c = law.conditional(k, sample.m[: k + 1])
    tau = max((k + 1) * law.block - t, 0.0)
    if method == "exact":
        return float(psi(c, law.block, w, tau))
    if method == "gauss-hermite":
        if not 2 <= quadrature_order <= 512:
            raise ValueError("quadrature order must lie in [2, 512]")
        if tau == 0.0:
            return float(psi(c, law.block, w, 0.0))
        return _psi_hermite(c, law.block, float(w), tau, quadrature_order)
    raise ValueError(f"unknown method {method!r}")


def interpolate_paths(law: DiscreteMartingaleLaw, batch: CouplingBatch) -> np.ndarray:
    """Interpolated martingale on the batch's fine Brownian grid, shape ``(n_samples, n_fine + 1)``."""
    if batch.W is None:
        raise ValueError("batch has no Brownian path; sample with fine_per_block")
    n_fine = batch.W.shape[1] - 1
    if n_fine % law.n:
        raise ValueError("fine grid does not refine the block grid")
    m = n_fine // law.n
    tau = law.block * (1.0 - np.arange(m) / m)
    out = np.empty_like(batch.W)
    for k in range(law.n):
        w = batch.W[:, k * m : (k + 1) * m] - batch.W[:, [k * m]]
        for c, rows in _groups(law, k, batch.M):
            out[rows, k * m : (k + 1) * m] = psi(c, law.block, w[rows], tau[None, :])
    out[:, -1] = batch.M[:, -1]
    return out


@dataclass(frozen=True)
class GBMTarget:
    """Driftless geometric Brownian motion ``s0 exp(sigma W_t - sigma^2 t / 2)``."""

    s0: float = 100.0
    sigma: float = 0.3
    T: float = 1.0

    def _capped(self, x, c: float, var: float):
        # E[min(X_var, c)] for a lognormal martingale started at x
        x = np.asarray(x, dtype=float)
        if var <= 0:
            return np.minimum(x, c)
        sd = math.sqrt(var)
        d1 = (np.log(x / c) + 0.5 * var) / sd
        put = c * ndtr(-(d1 - sd)) - x * ndtr(-d1)
        return c - put

    def capped_marginal(self, t: float, c: float) -> float:
        return float(self._capped(self.s0, c, self.sigma**2 * t))

    def capped_product(self, t1: float, t2: float, c: float) -> float:
        if self.sigma == 0:
            return min(self.s0, c) ** 2
        v1 = self.sigma**2 * t1
        v12 = self.sigma**2 * (t2 - t1)

        def f(z):
            x = self.s0 * math.exp(math.sqrt(v1) * z - 0.5 * v1)
            return min(x, c) * float(self._capped(x, c, v12)) * math.exp(-0.5 * z * z)

        val, _ = integrate.quad(f, -12.0, 12.0, epsabs=1e-13, epsrel=1e-12, limit=200)
        return val / math.sqrt(2 * math.pi)

    def capped_running_max(self, c: float, n_monitor: int) -> float:
        """``E[min(max_j S_{t_j}, c)]`` over ``n_monitor`` equal steps.

        Uses the continuous-monitoring law of the maximum with the barrier
        shifted by ``exp(0.5826 sigma sqrt(dt))`` for discrete monitoring.
        """
        if self.sigma == 0 or c <= self.s0:
            return min(self.s0, c)
        s = self.sigma * math.sqrt(self.T)
        shift = math.exp(0.5826 * self.sigma * math.sqrt(self.T / n_monitor))

        def tail(x):
            m = math.log(x * shift / self.s0)
            return ndtr((-m - 0.5 * s * s) / s) + math.exp(-m) * ndtr((-m + 0.5 * s * s) / s)

        val, _ = integrate.quad(tail, self.s0, c, epsabs=1e-12, epsrel=1e-12)
        return self.s0 + val


FUNCTIONALS = ("marginal_half", "marginal_end", "product", "running_max")


def _functionals(paths: np.ndarray, c: float, s0: float) -> np.ndarray:
    half = paths.shape[1] // 2
    a = np.minimum(paths[:, half], c) / s0
    b = np.minimum(paths[:, -1], c) / s0
    mx = np.minimum(paths.max(axis=1), c) / s0
    return np.stack([a, b, a * b, mx], axis=1)


def _target_means(target: GBMTarget, c: float, n_fine: int) -> np.ndarray:
    s0, T = target.s0, target.T
    return np.array(
        [
            target.capped_marginal(T / 2, c) / s0,
            target.capped_marginal(T, c) / s0,
            target.capped_product(T / 2, T, c) / s0**2,
            target.capped_running_max(c, n_fine) / s0,
        ]
    )


@dataclass(frozen=True)
class WeakDistanceRow:
    n: int
    proxy: float
    stderr: float
    worst: str
    diffs: tuple[float, ...]
    stderrs: tuple[float, ...]


@dataclass(frozen=True)
class WeakDistanceTable:
    """Distance proxy per refinement level with its Monte Carlo standard error."""

    rows: tuple[WeakDistanceRow, ...]
    targets: tuple[float, ...]
    cap: float
    n_fine: int
    n_samples: int

    def nonincreasing(self, n_se: float = 2.0) -> bool:
        """Each proxy at most the previous one plus ``n_se`` combined standard errors."""
        for a, b in zip(self.rows, self.rows[1:]):
            if b.proxy > a.proxy + n_se * math.hypot(a.stderr, b.stderr):
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "functionals": list(FUNCTIONALS),
            "targets": list(self.targets),
            "cap": self.cap,
            "n_fine": self.n_fine,
            "n_samples": self.n_samples,
            "rows": [
                {
                    "n": r.n,
                    "proxy": r.proxy,
                    "stderr": r.stderr,
                    "worst": r.worst,
                    "diffs": list(r.diffs),
                    "stderrs": list(r.stderrs),
                }
                for r in self.rows
            ],
            "nonincreasing": self.nonincreasing(),
        }


def weak_distance_diag(
    law_builder: Callable[[int], DiscreteMartingaleLaw],
    n_list: Sequence[int],
    n_samples: int,
    seed: int,
    target: GBMTarget,
    n_fine: int = 64,
    cap: float = 1.25,
    threads: int | None = 1,
) -> WeakDistanceTable:
    """Distance proxy between interpolated chains and ``target`` for each ``n``.

    The proxy is the largest gap between sample and target means over four
    bounded Lipschitz functionals of the path on ``n_fine`` equal steps, with
    prices capped at ``cap * s0`` and scaled by ``s0``: the values at ``T/2``
    and ``T``, their product, and the running maximum.  Every ``n`` reuses the
    same Brownian paths.
    """
    c = cap * target.s0
    targets = _target_means(target, c, n_fine)
    rows = []
    for n in n_list:
        law = law_builder(int(n))
        if n_fine % law.n:
            raise ValueError(f"n_fine = {n_fine} is not a multiple of n = {law.n}")
        batch = quantile_coupling_sample(law, n_samples, seed, threads, fine_per_block=n_fine // law.n)
        vals = _functionals(interpolate_paths(law, batch), c, target.s0)
        means = vals.mean(axis=0)
        ses = vals.std(axis=0, ddof=1) / math.sqrt(n_samples) if n_samples > 1 else np.zeros(4)
        diffs = np.abs(means - targets)
        j = int(np.argmax(diffs))
        rows.append(WeakDistanceRow(int(n), float(diffs[j]), float(ses[j]), FUNCTIONALS[j], tuple(diffs), tuple(ses)))
    return WeakDistanceTable(tuple(rows), tuple(float(x) for x in targets), cap, n_fine, n_samples)
