"""Fitting the dictionary-factored mixture from pairwise histograms.

The pipeline has three stages:

1. For every pair ``(j, k)`` fit a coupling ``T`` on the matrix simplex so
   that ``D_j T D_k^T`` matches the pairwise histogram (exponentiated-gradient
   mirror descent).
2. Stack the couplings into one block matrix, factor it with the successive
   projection algorithm, and read per-coordinate weights and mixing weights off
   the two factors.
3. Refine all weight matrices and the mixing weights jointly on the summed
   pairwise squared error, one block at a time.

Every mirror step uses backtracking: a step that raises the objective is
retried with half the rate, so recorded objectives never increase.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import nnls

from .atoms import DEFAULT_COVERAGE, Dictionary, DiscretizedDictionary, discretize
from .errors import (ConfigError, DivergenceError, InfeasibleSplitError, RankDeficiencyError,
                     ShapeError)
from .histogram import DEFAULT_BINS, Dataset, estimate_all_pairs, propose_grid
from .model import JointModel

log = logging.getLogger(__name__)

THREADS_ENV = "JUPAD_THREADS"


@dataclass
class FitConfig:
    """Hyper-parameters of :func:`fit`.

    ``bins`` is either one count for every continuous coordinate or a mapping
    from coordinate index to count. ``split`` is ``"alternating"``,
    ``"halves"`` or an explicit pair of index lists. ``init_floor`` mixes the
    stage-2 estimates with the uniform distribution so that stage 3 starts
    strictly inside the simplex.
    """

    rank: int = 3
    eta_T: float = 50.0
    eta_B: float = 50.0
    eta_L: float = 50.0
    stage1_max_iter: int = 2000
    stage3_max_sweeps: int = 200
    stage3_inner_iter: int = 100
    tol: float = 1e-6
    max_halvings: int = 20
    split: object = "alternating"
    spa_transpose: bool = False
    seed: int = 0
    bins: object = DEFAULT_BINS
    coverage: float = DEFAULT_COVERAGE
    init_floor: float = 1e-3
    n_jobs: int = 1
    strict_deterministic: bool = True

    def validate(self) -> "FitConfig":
        if int(self.rank) != self.rank or self.rank < 1:
            raise ConfigError(f"rank must be a positive integer, got {self.rank}")
        for name in ("eta_T", "eta_B", "eta_L", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("stage1_max_iter", "stage3_max_sweeps", "stage3_inner_iter"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0 <= self.init_floor < 1:
            raise ConfigError(f"init_floor must lie in [0, 1), got {self.init_floor}")
        if not 0 < self.coverage <= 1:
            raise ConfigError(f"coverage must lie in (0, 1], got {self.coverage}")
        return self

    def bins_for(self, n: int) -> int:
        if isinstance(self.bins, dict):
            return int(self.bins.get(n, self.bins.get(str(n), DEFAULT_BINS)))
        return int(self.bins)

    def to_dict(self) -> dict:
        return asdict(self)


class TraceRecord(NamedTuple):
    stage: str
    block: str
    iteration: int
    objective: float
    simplex_error: float


# -- mirror descent primitives ------------------------------------------------


def mirror_step(x: np.ndarray, grad: np.ndarray, rate: float, axis=None) -> np.ndarray:
    """Exponentiated-gradient step followed by L1 renormalization along ``axis``."""
    z = -rate * grad
    z = z - z.max(axis=axis, keepdims=True)
    y = x * np.exp(z)
    return y / y.sum(axis=axis, keepdims=True)


def _simplex_error(x: np.ndarray, axis=None) -> float:
    return float(np.max(np.abs(x.sum(axis=axis) - 1.0)))


def _descend(x, cost, grad, rate, axis, max_iter, tol, max_halvings, rate_name, on_accept):
    """Backtracking mirror descent on one block; returns ``(x, cost)``."""
    c = cost(x)
    if not np.isfinite(c):
        raise DivergenceError(f"objective is not finite at the starting point ({rate_name})", rate_name)
    for it in range(1, max_iter + 1):
        g = grad(x)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"gradient is not finite; lower {rate_name}", rate_name)
        step = rate
        finite_seen = False
        for _ in range(max_halvings + 1):
            x_new = mirror_step(x, g, step, axis)
            c_new = cost(x_new)
            finite_seen |= bool(np.isfinite(c_new))
            if np.isfinite(c_new) and c_new <= c:
                break
            step *= 0.5
        else:
            if not finite_seen:
                raise DivergenceError(f"objective became non-finite for every step size; lower {rate_name}",
                                      rate_name)
            break  # no descent direction left at any tried step
        decrease = c - c_new
        x, c_old, c = x_new, c, c_new
        on_accept(it, c, x)
        if decrease <= tol * c_old:
            break
    return x, c


# -- stage 1 ------------------------------------------------------------------


@dataclass(frozen=True)
class PairCoupling:
    pair: tuple
    matrix: np.ndarray = field(repr=False)


def pair_cost(Z, Dj, T, Dk) -> float:
    E = Z - Dj @ T @ Dk.T
    return float(np.sum(E * E))


def pair_gradient(Z, Dj, T, Dk) -> np.ndarray:
    """Gradient of ``||Z - Dj T Dk^T||_F^2`` with respect to ``T``."""
    return -2.0 * Dj.T @ (Z - Dj @ T @ Dk.T) @ Dk


def stage1_fit_pair(Z, Dj, Dk, config: FitConfig, rng=None, T0=None, pair=(0, 1),
                    trace: list | None = None) -> PairCoupling:
    """Fit the simplex-constrained coupling of one coordinate pair."""
    Z, Dj, Dk = (np.asarray(a, dtype=float) for a in (Z, Dj, Dk))
    if Z.shape != (Dj.shape[0], Dk.shape[0]):
        raise ShapeError(f"histogram shape {Z.shape} does not match dictionaries "
                         f"{Dj.shape} and {Dk.shape}")
    if T0 is None:
        rng = np.random.default_rng(rng)
        T0 = rng.uniform(0.0, 1.0, (Dj.shape[1], Dk.shape[1]))
    T = np.asarray(T0, dtype=float)
    T = T / T.sum()
    label = f"T{pair[0]},{pair[1]}"
    records = trace if trace is not None else []
    records.append(TraceRecord("stage1", label, 0, pair_cost(Z, Dj, T, Dk), _simplex_error(T)))

    def accept(it, c, x):
        records.append(TraceRecord("stage1", label, it, c, _simplex_error(x)))

    T, _ = _descend(T, lambda t: pair_cost(Z, Dj, t, Dk), lambda t: pair_gradient(Z, Dj, t, Dk),
                    config.eta_T, None, config.stage1_max_iter, config.tol, config.max_halvings,
                    "eta_T", accept)
    return PairCoupling(tuple(pair), T)


def stage1_all(Z: dict, D: Sequence[np.ndarray], config: FitConfig, trace: list | None = None) -> dict:
    """Fit every pair. Pair ``p`` always uses the ``p``-th spawned seed, so
    threaded and sequential runs give identical couplings."""
    pairs = sorted(Z)
    seeds = np.random.SeedSequence(config.seed).spawn(len(pairs))
    jobs = int(os.environ.get(THREADS_ENV, config.n_jobs))
    traces = [[] for _ in pairs]

    def run(i):
        j, k = pairs[i]
        return stage1_fit_pair(Z[j, k], D[j], D[k], config, np.random.default_rng(seeds[i]),
                               pair=(j, k), trace=traces[i])

    if jobs > 1 and not config.strict_deterministic:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, range(len(pairs))))
    else:
        results = [run(i) for i in range(len(pairs))]
    if trace is not None:
        for t in traces:
            trace.extend(t)
    return {c.pair: c for c in results}


# -- stage 2 ------------------------------------------------------------------


@dataclass(frozen=True)
class AssembledMatrix:
    matrix: np.ndarray = field(repr=False)
    rows: tuple          # coordinates stacked along rows (first index set)
    cols: tuple          # coordinates stacked along columns (second index set)
    row_offsets: tuple   # block boundaries, len(rows) + 1 entries
    col_offsets: tuple

    def row_block(self, a: int) -> slice:
        return slice(self.row_offsets[a], self.row_offsets[a + 1])

    def col_block(self, b: int) -> slice:
        return slice(self.col_offsets[b], self.col_offsets[b + 1])


def choose_split(sizes: Sequence[int], rank: int, policy="alternating") -> tuple[list, list]:
    """Partition coordinates into two index sets, each with at least ``rank`` atoms in total.

    Explicit partitions are only validated; named policies are rebalanced by
    moving coordinates to the poorer side when that keeps both sides feasible.
    """
    N = len(sizes)
    if N < 2:
        raise ConfigError("fitting needs at least two coordinates")
    if isinstance(policy, str):
        if policy == "alternating":
            s1, s2 = list(range(0, N, 2)), list(range(1, N, 2))
        elif policy == "halves":
            h = (N + 1) // 2
            s1, s2 = list(range(h)), list(range(h, N))
        else:
            raise ConfigError(f"unknown split policy {policy!r}")
        total = lambda s: sum(sizes[n] for n in s)
        for _ in range(N):
            poor, rich = (s1, s2) if total(s1) < total(s2) else (s2, s1)
            if total(poor) >= rank or len(rich) < 2:
                break
            movable = [n for n in rich if total(rich) - sizes[n] >= rank]
            if not movable:
                break
            # smallest move that makes the poor side feasible, else the largest move
            enough = [n for n in movable if total(poor) + sizes[n] >= rank]
            n = min(enough, key=lambda m: (sizes[m], m)) if enough else max(movable, key=lambda m: (sizes[m], -m))
            rich.remove(n)
            poor.append(n)
        s1, s2 = sorted(s1), sorted(s2)
    else:
        s1, s2 = (sorted(int(n) for n in s) for s in policy)
        if sorted(s1 + s2) != list(range(N)) or not s1 or not s2:
            raise ConfigError(f"split {policy!r} is not a partition of 0..{N - 1} into two non-empty sets")
    for name, s in (("first", s1), ("second", s2)):
        if sum(sizes[n] for n in s) < rank:
            raise InfeasibleSplitError(
                f"{name} index set {s} has {sum(sizes[n] for n in s)} atoms in total, fewer than rank {rank}; "
                "increase dictionary sizes or reduce the rank")
    return s1, s2


def _coupling(couplings: dict, a: int, b: int) -> np.ndarray:
    if (a, b) in couplings:
        return _as_matrix(couplings[a, b])
    return _as_matrix(couplings[b, a]).T


def _as_matrix(c) -> np.ndarray:
    return c.matrix if isinstance(c, PairCoupling) else np.asarray(c, dtype=float)


def assemble_Ttilde(couplings: dict, split: tuple[Sequence[int], Sequence[int]]) -> AssembledMatrix:
    """Block matrix whose ``(a, b)`` block is the coupling of ``rows[a]`` with ``cols[b]``."""
    rows, cols = tuple(split[0]), tuple(split[1])
    blocks = []
    for a in rows:
        try:
            blocks.append([_coupling(couplings, a, b) for b in cols])
        except KeyError as exc:
            raise ShapeError(f"missing coupling for pair {exc.args[0]}") from None
    M = np.block(blocks)
    row_off = tuple(np.cumsum([0] + [blocks[i][0].shape[0] for i in range(len(rows))]).tolist())
    col_off = tuple(np.cumsum([0] + [blocks[0][j].shape[1] for j in range(len(cols))]).tolist())
    return AssembledMatrix(M, rows, cols, row_off, col_off)


def _spa_residuals(M: np.ndarray, rank: int, normalize: bool = True, rel_tol: float = 1e-12):
    """Run the successive projection loop; returns ``(residual, anchors)``."""
    M = np.asarray(M, dtype=float)
    if rank > min(M.shape):
        raise RankDeficiencyError(f"rank {rank} exceeds the smaller dimension of a {M.shape} matrix")
    if normalize:
        l1 = np.abs(M).sum(axis=0)
        R = np.divide(M, l1, out=np.zeros_like(M), where=l1 > 0)
    else:
        R = M.copy()
    norms = np.sum(R * R, axis=0)
    scale = norms.max(initial=0.0)
    anchors = []
    for _ in range(rank):
        p = int(np.argmax(norms))
        if norms[p] <= rel_tol * scale or scale == 0.0:
            raise RankDeficiencyError(f"residual vanished after {len(anchors)} anchors (rank {rank} requested)")
        u = R[:, p] / np.sqrt(norms[p])
        R = R - np.outer(u, u @ R)
        R[:, anchors + [p]] = 0.0
        anchors.append(p)
        norms = np.sum(R * R, axis=0)
    return R, anchors


def spa_select(M: np.ndarray, rank: int, normalize: bool = True, rel_tol: float = 1e-12) -> list:
    """Successive projection: indices of ``rank`` anchor columns of ``M``.

    With ``normalize`` the columns are scaled to unit L1 norm first (zero
    columns are never selected), which makes anchors extreme points even when
    columns carry arbitrary positive scales. The column of largest squared
    norm is picked and projected out of the residual, ``rank`` times.
    """
    return _spa_residuals(M, rank, normalize, rel_tol)[1]


def spa_extract(T: AssembledMatrix | np.ndarray, rank: int) -> tuple[np.ndarray, np.ndarray, list]:
    """Separable factorization ``M ~= W H^T``.

    ``W`` holds the anchor columns of ``M``; each row of ``H`` is the
    nonnegative least-squares fit of the matching column of ``M``. Returns
    ``(W, H, anchors)``.
    """
    M = T.matrix if isinstance(T, AssembledMatrix) else np.asarray(T, dtype=float)
    anchors = spa_select(M, rank)
    W = M[:, anchors].copy()
    H = np.empty((M.shape[1], rank))
    for c in range(M.shape[1]):
        H[c], _ = nnls(W, M[:, c])
    return W, H, anchors


def factor_split(W: np.ndarray, H: np.ndarray, asm: AssembledMatrix, floor: float = 1e-12):
    """Per-coordinate weight matrices and mixing weights from ``W`` and ``H``.

    Row blocks of ``W`` give the weights of the first index set up to a
    per-component scale; that scale is moved into ``H``, whose column blocks
    then equal ``diag(weights) @ B_k^T`` for the second index set.
    """
    F = W.shape[1]
    W = np.clip(W, 0.0, None)
    Ht = np.clip(H, 0.0, None).T
    factors = {}
    col_scales = []
    for a, n in enumerate(asm.rows):
        blk = W[asm.row_block(a)]
        s = blk.sum(axis=0)
        col_scales.append(s)
        factors[n] = _normalize_columns(blk, s)
    scale = np.mean(col_scales, axis=0)
    Ht = Ht * scale[:, None]
    estimates = []
    blocks = []
    for b, n in enumerate(asm.cols):
        blk = Ht[:, asm.col_block(b)]
        lam = blk.sum(axis=1)
        estimates.append(lam)
        blocks.append((n, blk, lam))
    lam = np.mean(estimates, axis=0)
    if lam.sum() <= 0:
        lam = np.full(F, 1.0 / F)
    lam = lam / lam.sum()
    weak = np.flatnonzero(lam <= floor)
    if weak.size:
        warnings.warn(f"components {weak.tolist()} have negligible weight; their factors are set uniform",
                      RuntimeWarning, stacklevel=2)
    for n, blk, lam_k in blocks:
        factors[n] = _normalize_columns(blk.T, lam_k)
        factors[n][:, weak] = 1.0 / blk.shape[1]
    return [factors[n] for n in sorted(factors)], lam


def _normalize_columns(blk: np.ndarray, sums: np.ndarray) -> np.ndarray:
    out = np.empty_like(blk, dtype=float)
    for r in range(blk.shape[1]):
        if sums[r] > 0:
            out[:, r] = blk[:, r] / blk[:, r].sum()
        else:
            out[:, r] = 1.0 / blk.shape[0]
    return out


# -- stage 3 ------------------------------------------------------------------


class _JointObjective:
    """Summed pairwise squared error, with per-pair costs cached so that
    block updates only recompute the pairs they touch."""

    def __init__(self, Z: dict, D: Sequence[np.ndarray]):
        self.pairs = sorted(Z)
        self.Z = {p: np.asarray(Z[p], dtype=float) for p in self.pairs}
        self.D = [np.asarray(d, dtype=float) for d in D]
        self.N = len(self.D)
        self.touching = {n: [i for i, p in enumerate(self.pairs) if n in p] for n in range(self.N)}

    def residual(self, p, A, lam):
        j, k = p
        return self.Z[p] - (A[j] * lam) @ A[k].T

    def pair_costs(self, A, lam, idx=None) -> np.ndarray:
        idx = range(len(self.pairs)) if idx is None else idx
        out = []
        for i in idx:
            E = self.residual(self.pairs[i], A, lam)
            out.append(np.sum(E * E))
        return np.asarray(out)

    def value(self, B, lam) -> float:
        A = [d @ b for d, b in zip(self.D, B)]
        return float(self.pair_costs(A, lam).sum())

    def grad_B(self, n, A, lam, B_n=None) -> np.ndarray:
        if B_n is not None:
            A = list(A)
            A[n] = self.D[n] @ B_n
        G = np.zeros((self.D[n].shape[1], lam.size))
        for i in self.touching[n]:
            p = self.pairs[i]
            E = self.residual(p, A, lam)
            if p[0] == n:
                k = p[1]
            else:
                k, E = p[0], E.T
            G += -2.0 * self.D[n].T @ E @ (A[k] * lam)
        return G

    def grad_lambda(self, A, lam) -> np.ndarray:
        g = np.zeros(lam.size)
        for p in self.pairs:
            j, k = p
            E = self.residual(p, A, lam)
            g += -2.0 * np.sum((E @ A[k]) * A[j], axis=0)
        return g

    def all_grads(self, B, lam):
        A = [d @ b for d, b in zip(self.D, B)]
        return [self.grad_B(n, A, lam) for n in range(self.N)], self.grad_lambda(A, lam)


def _refine(B: list, lam: np.ndarray, obj: _JointObjective, config: FitConfig, trace: list | None):
    B = [np.array(b, dtype=float) for b in B]
    lam = np.array(lam, dtype=float)
    A = [d @ b for d, b in zip(obj.D, B)]
    costs = obj.pair_costs(A, lam)
    records = trace if trace is not None else []
    step_no = [0]
    records.append(TraceRecord("stage3", "init", 0, float(costs.sum()), _simplex_error(lam)))

    for sweep in range(config.stage3_max_sweeps):
        J_start = float(costs.sum())
        for n in range(obj.N):
            idx = obj.touching[n]
            if not idx:
                continue

            def cost_B(b, n=n, idx=idx):
                A_try = list(A)
                A_try[n] = obj.D[n] @ b
                trial = costs.copy()
                trial[idx] = obj.pair_costs(A_try, lam, idx)
                return float(trial.sum())

            def accept_B(it, c, b, n=n, idx=idx):
                A[n] = obj.D[n] @ b
                costs[idx] = obj.pair_costs(A, lam, idx)
                step_no[0] += 1
                records.append(TraceRecord("stage3", f"B{n}", step_no[0], float(costs.sum()),
                                           _simplex_error(b, axis=0)))

            B[n], _ = _descend(B[n], cost_B, lambda b, n=n: obj.grad_B(n, A, lam, b), config.eta_B, 0,
                               config.stage3_inner_iter, config.tol, config.max_halvings, "eta_B", accept_B)
            A[n] = obj.D[n] @ B[n]

        def cost_L(l):
            return float(obj.pair_costs(A, l).sum())

        def accept_L(it, c, l):
            costs[:] = obj.pair_costs(A, l)
            step_no[0] += 1
            records.append(TraceRecord("stage3", "lambda", step_no[0], float(costs.sum()), _simplex_error(l)))

        lam, _ = _descend(lam, cost_L, lambda l: obj.grad_lambda(A, l), config.eta_L, None,
                          config.stage3_inner_iter, config.tol, config.max_halvings, "eta_L", accept_L)
        costs = obj.pair_costs(A, lam)
        J_end = float(costs.sum())
        log.debug("stage3 sweep %d: J %.6g -> %.6g", sweep, J_start, J_end)
        if J_start - J_end <= config.tol * J_start:
            break
    return B, lam


def stage3_refine(B: Sequence, lam, Z: dict, D: Sequence[DiscretizedDictionary], config: FitConfig,
                  trace: list | None = None, metadata: dict | None = None) -> JointModel:
    """Joint block mirror descent on all weights, starting from ``B`` and ``lam``."""
    obj = _JointObjective({p: _hist(z) for p, z in Z.items()}, [d.matrix for d in D])
    B, lam = _refine(list(B), lam, obj, config, trace)
    return JointModel([d.dictionary for d in D], B, lam, [d.grid for d in D], metadata=metadata,
                      coverage=config.coverage)


def _hist(z):
    return z.estimate if hasattr(z, "estimate") else np.asarray(z, dtype=float)


def joint_cost(B, lam, Z: dict, D: Sequence[np.ndarray]) -> float:
    return _JointObjective({p: _hist(z) for p, z in Z.items()}, D).value(B, lam)


def joint_gradients(B, lam, Z: dict, D: Sequence[np.ndarray]):
    """Analytic gradients of the joint objective: ``([dJ/dB_n], dJ/dlambda)``."""
    return _JointObjective({p: _hist(z) for p, z in Z.items()}, D).all_grads(B, np.asarray(lam, dtype=float))


# -- full pipeline ------------------------------------------------------------


def _floor(x: np.ndarray, eps: float, axis=0) -> np.ndarray:
    if eps == 0:
        return x
    size = x.shape[axis] if x.ndim > 1 else x.size
    return (1.0 - eps) * x + eps / size


def initial_factors(Z: dict, D: Sequence[np.ndarray], config: FitConfig, trace: list | None = None):
    """Stages 1 and 2: pair couplings, block assembly, SPA, factor split."""
    couplings = stage1_all(Z, D, config, trace)
    sizes = [d.shape[1] for d in D]
    s1, s2 = choose_split(sizes, config.rank, config.split)
    if config.spa_transpose:
        s1, s2 = s2, s1
    asm = assemble_Ttilde(couplings, (s1, s2))
    W, H, _ = spa_extract(asm, config.rank)
    B, lam = factor_split(W, H, asm)
    B = [_floor(b, config.init_floor) for b in B]
    lam = _floor(lam, config.init_floor)
    return B, lam


def fit(dataset: Dataset, dictionaries: Sequence[Dictionary], config: FitConfig | None = None,
        trace: list | None = None, grids=None) -> JointModel:
    """Fit a model to ``dataset`` using one dictionary per column.

    Grids default to ``config.bins`` equal-width bins spanning the data and
    the dictionary's support (one bin per state for discrete columns). Pass a
    list as ``trace`` to collect per-iteration objectives.
    """
    config = (config or FitConfig()).validate()
    if len(dictionaries) != dataset.ndim:
        raise ShapeError(f"{len(dictionaries)} dictionaries for {dataset.ndim} columns")
    if grids is None:
        grids = [propose_grid(dataset, n, config.bins_for(n), dictionaries[n], config.coverage)
                 for n in range(dataset.ndim)]
    disc = [discretize(d, g, config.coverage) for d, g in zip(dictionaries, grids)]
    D = [d.matrix for d in disc]
    hists = estimate_all_pairs(dataset, grids)
    Z = {p: h.estimate for p, h in hists.items()}
    B, lam = initial_factors(Z, D, config, trace)
    return stage3_refine(B, lam, Z, disc, config, trace)
