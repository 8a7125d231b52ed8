"""Robust superhedging on a finite tree with dynamic stock trading and static options.

On a tree the robust price of a path payoff ``H`` given statics ``(h_i, P_i)`` is

    sup { E_q[H] : q a martingale measure on the paths, E_q[h_i] = P_i }

(the dual), and equals the cheapest ``c_0 + sum c_i P_i`` such that
``c_0 + sum c_i h_i + sum gamma(node) dS >= H`` on every path (the primal).
Both are dense linear programs over path space, solved with a vertex method.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "TreeNode",
    "TreeMarket",
    "StaticInstrument",
    "LPReport",
    "dual_price",
    "primal_superhedge",
    "feasibility_ball",
    "tree_from_dict",
    "statics_from_dict",
    "payoff_from_spec",
    "random_feasible_instance",
]

_METHOD = "highs-ds"


@dataclass(frozen=True)
class TreeNode:
    price: float
    children: tuple["TreeNode", ...] = ()

    def depth(self) -> int:
        return 0 if not self.children else 1 + max(c.depth() for c in self.children)


class TreeMarket:
    """Finite price tree of uniform depth; every path is a row of ``paths``."""

    def __init__(self, root: TreeNode):
        self.root = root
        self.n_steps = root.depth()
        self._validate(root, 0)
        paths: list[tuple[float, ...]] = []
        # internal node -> (depth, parent price, [(path index, child price)])
        nodes: list[tuple[int, float, list[int]]] = []

        def walk(node: TreeNode, prefix: tuple[float, ...]):
            prefix = prefix + (node.price,)
            if not node.children:
                paths.append(prefix)
                return [len(paths) - 1]
            entry = (len(prefix) - 1, node.price, [])
            nodes.append(entry)
            below = []
            for ch in node.children:
                below.extend(walk(ch, prefix))
            entry[2].extend(below)
            return below

        walk(root, ())
        self.paths = np.array(paths, dtype=float)
        self.nodes = [(d, p, np.array(ix, dtype=int)) for d, p, ix in nodes]

    def _validate(self, node: TreeNode, depth: int):
        if not node.price > 0:
            raise ValueError("tree prices must be strictly positive")
        if not node.children:
            if depth != self.n_steps:
                raise ValueError("all leaves must sit at the same depth")
            return
        for ch in node.children:
            self._validate(ch, depth + 1)

    @property
    def s0(self) -> float:
        return float(self.root.price)

    @property
    def n_paths(self) -> int:
        return int(self.paths.shape[0])

    def martingale_rows(self) -> np.ndarray:
        """One row per internal node: ``row @ q = E_q[(S_{d+1} - S_d) 1{node}]``."""
        A = np.zeros((len(self.nodes), self.n_paths))
        for j, (d, price, ix) in enumerate(self.nodes):
            A[j, ix] = self.paths[ix, d + 1] - price
        return A

    def evaluate(self, H: Callable[[np.ndarray], float] | np.ndarray) -> np.ndarray:
        if callable(H):
            return np.array([float(H(p)) for p in self.paths])
        v = np.asarray(H, dtype=float)
        if v.shape != (self.n_paths,):
            raise ValueError("payoff vector does not match the number of paths")
        return v


@dataclass(frozen=True)
class StaticInstrument:
    """Path payoff (callable on a price path, or a vector over paths) with quoted price."""

    payoff: Any
    price: float


@dataclass(frozen=True)
class LPReport:
    dual_value: float
    primal_value: float
    statics: np.ndarray
    gamma: np.ndarray
    q: np.ndarray
    status: str
    message: str = ""
    node_index: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None or not np.isfinite(x) else float(x)

        return {
            "status": self.status,
            "dual_value": num(self.dual_value),
            "primal_value": num(self.primal_value),
            "statics": [float(v) for v in self.statics],
            "gamma": [float(v) for v in self.gamma],
            "q": [float(v) for v in self.q],
            "message": self.message,
        }


def _static_matrix(tree: TreeMarket, statics: Sequence[StaticInstrument]):
    if not statics:
        return np.zeros((0, tree.n_paths)), np.zeros(0)
    Hs = np.vstack([tree.evaluate(s.payoff) for s in statics])
    if not np.all(np.isfinite(Hs)):
        raise ValueError("static payoffs must be finite on every path")
    return Hs, np.array([float(s.price) for s in statics])


def _dual_system(tree: TreeMarket, statics, prices=None):
    Hs, P = _static_matrix(tree, statics)
    if prices is not None:
        P = np.asarray(prices, dtype=float)
    A = np.vstack([np.ones((1, tree.n_paths)), tree.martingale_rows(), Hs])
    b = np.concatenate(([1.0], np.zeros(len(tree.nodes)), P))
    return A, b, Hs, P


def dual_price(tree: TreeMarket, H, statics: Sequence[StaticInstrument] = ()) -> LPReport:
    """Maximize ``E_q[H]`` over martingale measures matching the static prices.

    The hedge (``c_0``, ``c_i``, ``gamma``) is read off the equality multipliers.
    """
    h = tree.evaluate(H)
    A, b, Hs, P = _dual_system(tree, statics)
    res = linprog(-h, A_eq=A, b_eq=b, bounds=(0, None), method=_METHOD)
    n_nodes = len(tree.nodes)
    if res.status == 2:
        return LPReport(np.nan, np.nan, np.zeros(1 + len(P)), np.zeros(n_nodes), np.zeros(tree.n_paths),
                        "infeasible", "no martingale measure matches the static prices (static arbitrage)")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    y = -np.asarray(res.eqlin.marginals)
    c0, gamma, cs = y[0], y[1 : 1 + n_nodes], y[1 + n_nodes :]
    primal = float(c0 + cs @ P)
    statics_vec = np.concatenate(([c0], cs))
    return LPReport(float(-res.fun), primal, statics_vec, gamma, np.asarray(res.x), "optimal")


def primal_superhedge(tree: TreeMarket, H, statics: Sequence[StaticInstrument] = ()) -> LPReport:
    """Cheapest ``c_0 + sum c_i P_i`` over superhedges; solved directly, not via the dual."""
    h = tree.evaluate(H)
    Hs, P = _static_matrix(tree, statics)
    M = tree.martingale_rows()
    n_static = len(P)
    # variables: c0, c_1..c_N, gamma_1..gamma_K; rows: -(portfolio) <= -H
    A = np.hstack([np.ones((tree.n_paths, 1)), Hs.T, M.T])
    cost = np.concatenate(([1.0], P, np.zeros(M.shape[0])))
    res = linprog(cost, A_ub=-A, b_ub=-h, bounds=(None, None), method=_METHOD)
    n_nodes = M.shape[0]
    if res.status == 3:
        return LPReport(np.nan, -np.inf, np.zeros(1 + n_static), np.zeros(n_nodes), np.zeros(tree.n_paths),
                        "unbounded", "superhedge cost unbounded below (static arbitrage)")
    if res.status == 2:
        return LPReport(np.nan, np.nan, np.zeros(1 + n_static), np.zeros(n_nodes), np.zeros(tree.n_paths),
                        "infeasible", "no superhedge exists")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    x = np.asarray(res.x)
    q = -np.asarray(res.ineqlin.marginals)
    return LPReport(float(q @ h), float(res.fun), x[: 1 + n_static], x[1 + n_static :], q, "optimal")


def feasibility_ball(tree: TreeMarket, statics: Sequence[StaticInstrument], eps: float) -> bool:
    """True iff every corner of the price box ``prod [P_i - eps, P_i + eps]`` admits a martingale measure."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not statics:
        return True
    _, P = _static_matrix(tree, statics)
    for signs in product((-1.0, 1.0), repeat=len(P)):
        A, b, _, _ = _dual_system(tree, statics, P + eps * np.array(signs))
        res = linprog(np.zeros(tree.n_paths), A_eq=A, b_eq=b, bounds=(0, None), method=_METHOD)
        if res.status != 0:
            return False
    return True


# --- JSON -------------------------------------------------------------------


def tree_from_dict(d: dict) -> TreeMarket:
    """``{"s0": 100, "children": [{"price": 80, "children": [...]}, ...]}``."""

    def build(node: dict, price: float) -> TreeNode:
        kids = tuple(build(ch, float(ch["price"])) for ch in node.get("children", []))
        return TreeNode(price, kids)

    return TreeMarket(build(d, float(d.get("s0", d.get("price")))))


def payoff_from_spec(d: dict) -> Callable[[np.ndarray], float]:
    """Path payoffs: ``call``/``put`` on the price at ``step`` (default last), ``constant``,
    ``max`` (running maximum), or an explicit ``vector`` over paths."""
    kind = d["type"]
    if kind == "vector":
        return np.asarray(d["values"], dtype=float)
    step = int(d.get("step", -1))
    if kind == "call":
        K = float(d["K"])
        return lambda p: max(p[step] - K, 0.0)
    if kind == "put":
        K = float(d["K"])
        return lambda p: max(K - p[step], 0.0)
    if kind == "constant":
        v = float(d["value"])
        return lambda p: v
    if kind == "max":
        return lambda p: float(np.max(p))
    raise ValueError(f"unknown path payoff type {kind!r}")


def statics_from_dict(items: list[dict]) -> list[StaticInstrument]:
    return [StaticInstrument(payoff_from_spec(it["payoff"]), float(it["price"])) for it in items]


# --- random instances for property tests -----------------------------------


def _random_node(rng: np.random.Generator, price: float, depth: int, max_children: int) -> TreeNode:
    if depth == 0:
        return TreeNode(price)
    k = int(rng.integers(1, max_children + 1))
    if k == 1:
        prices = [price]
    else:
        n_up = int(rng.integers(1, k))
        ups = price * (1.0 + rng.uniform(0.02, 0.5, n_up))
        downs = price * (1.0 - rng.uniform(0.02, 0.5, k - n_up))
        prices = sorted(np.concatenate((downs, ups)).tolist())
    return TreeNode(price, tuple(_random_node(rng, p, depth - 1, max_children) for p in prices))


def _interior_measure(tree: TreeMarket, rng: np.random.Generator) -> np.ndarray:
    """A martingale measure charging every path: random mixtures of two-point splits."""

    def cond(node: TreeNode) -> np.ndarray:
        x = np.array([c.price for c in node.children])
        if x.size == 1:
            return np.ones(1)
        w = np.zeros(x.size)
        lo = np.nonzero(x < node.price)[0]
        hi = np.nonzero(x > node.price)[0]
        mix = rng.dirichlet(np.ones(lo.size * hi.size))
        for (i, j), m in zip(product(lo, hi), mix):
            a = (x[j] - node.price) / (x[j] - x[i])
            w[i] += m * a
            w[j] += m * (1 - a)
        return w

    out: list[float] = []

    def walk(node: TreeNode, mass: float):
        if not node.children:
            out.append(mass)
            return
        for ch, p in zip(node.children, cond(node)):
            walk(ch, mass * p)

    walk(tree.root, 1.0)
    return np.array(out)


def random_feasible_instance(
    rng: np.random.Generator, max_depth: int = 4, max_children: int = 4, max_statics: int = 3, max_paths: int = 256
):
    """Random tree, claim and statics priced under an interior martingale measure."""
    while True:
        depth = int(rng.integers(1, max_depth + 1))
        tree = TreeMarket(_random_node(rng, 100.0, depth, max_children))
        if tree.n_paths <= max_paths:
            break
    q = _interior_measure(tree, rng)
    final = tree.paths[:, -1]
    H = np.maximum(final - rng.uniform(80, 120), 0.0) + rng.uniform(0, 1) * np.max(tree.paths, axis=1) / 100
    statics = []
    for _ in range(int(rng.integers(0, max_statics + 1))):
        v = np.maximum(rng.choice([-1.0, 1.0]) * (tree.paths[:, int(rng.integers(1, depth + 1))] - rng.uniform(70, 130)), 0.0)
        statics.append(StaticInstrument(v, float(q @ v)))
    return tree, H, statics, q
