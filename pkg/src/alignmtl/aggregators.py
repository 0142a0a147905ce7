"""Multi-task gradient aggregation.

Maps a gradient matrix (one column per task) and task weights to a single
update direction. The alignment methods rescale the principal components of
the gradient system so all retained singular values equal the smallest
positive one, which drives the condition number of the system to 1. The
baselines (uniform scalarization, PCGrad, MGDA, CAGrad, IMTL-G) are
reimplemented from their published definitions for comparison.

All functions are pure; the estimator classes at the bottom wrap them in a
scikit-learn-style API (``get_params``/``fit``/``transform``) so they plug
into wider tooling and the CLI registry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .linalg import Spectrum, gram, sym_eigh
from .validation import check_matrix, check_rng, check_weights


class ZeroGradient(Exception):
    """All task gradients vanished.

    This is a control-flow signal, not a failure: training loops treat the
    current point as Pareto-stationary and stop.
    """


@dataclass(frozen=True)
class SharedRepGradients:
    """Per-task gradients w.r.t. a shared representation, plus its Jacobian.

    ``Z`` has one column per task (|H| x T). ``J`` is oriented |theta| x |H|
    so that the full gradient matrix factors as G = J @ Z.
    """

    Z: np.ndarray
    J: np.ndarray

    def __post_init__(self):
        Z = check_matrix(self.Z, name="Z")
        J = check_matrix(self.J, name="J")
        if J.shape[1] != Z.shape[0]:
            raise ValueError(f"J is {J.shape} but Z is {Z.shape}; J @ Z must compose")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "J", J)

    @property
    def n_tasks(self) -> int:
        return self.Z.shape[1]

    def full_matrix(self) -> np.ndarray:
        """G = J @ Z."""
        return self.J @ self.Z


@dataclass(frozen=True)
class AlignmentResult:
    """Output of the gradient matrix alignment.

    ``g_hat0 = G @ alpha`` by construction. ``balance`` is the task-space
    transformation B, so the full aligned matrix is ``G @ balance``.
    ``weight_projections`` holds w^T v_r for the retained eigenvectors,
    surfaced because the convergence guarantee silently assumes they stay
    away from zero.
    """

    g_hat0: np.ndarray
    alpha: np.ndarray
    sigma: float
    rank: int
    spectrum: Spectrum
    balance: np.ndarray
    weight_projections: np.ndarray

    def aligned_matrix(self, G) -> np.ndarray:
        """Reassemble the aligned gradient matrix G_hat = G @ B."""
        return check_matrix(G) @ self.balance


def _balance_from_spectrum(spectrum: Spectrum, rank: int | None = None) -> tuple[np.ndarray, float]:
    """Balance transformation B = sigma * V_R Sigma^-1 V_R^T and sigma.

    ``rank`` overrides the spectrum's own rank count (used by the
    refinement pass, which must keep the subspace chosen on the first
    pass).
    """
    r = spectrum.rank if rank is None else min(rank, spectrum.rank)
    lam = spectrum.eigenvalues[:r]
    V = spectrum.eigenvectors[:, :r]
    sigma = math.sqrt(lam[r - 1])
    inv_singular = 1.0 / np.sqrt(lam)
    B = sigma * (V * inv_singular) @ V.T
    return B, sigma


def align(G, weights=None) -> AlignmentResult:
    """Gradient matrix alignment in the task space.

    Eigendecomposes the Gram matrix G^T G, restricts to the eigenvalues
    above the rank threshold (for singular systems the scale becomes the
    smallest singular value greater than zero), and rescales the retained
    principal components to the common scale sigma. Returns the balance
    coefficients alpha and the aligned cumulative gradient G @ alpha.

    Raises ZeroGradient when every column of ``G`` is zero.
    """
    G = check_matrix(G)
    w = check_weights(weights, G.shape[1])

    spectrum = sym_eigh(gram(G))
    if spectrum.rank == 0:
        raise ZeroGradient("all task gradients are zero")
    B, sigma = _balance_from_spectrum(spectrum)
    rank = spectrum.rank

    # One re-alignment pass when the retained eigenvalues are strongly
    # graded: forming the Gram matrix squares the conditioning, and a single
    # pass then leaves the output measurably non-orthogonal. The second pass
    # operates on a near-perfectly conditioned system, so it restores
    # orthogonality to working precision while keeping the first-pass
    # subspace and scale.
    lam = spectrum.eigenvalues
    if lam[0] > 1e6 * lam[rank - 1]:
        G_hat = G @ B
        spectrum2 = sym_eigh(gram(G_hat))
        if spectrum2.rank >= 1:
            B2, sigma = _balance_from_spectrum(spectrum2, rank=rank)
            B = B @ B2

    alpha = B @ w
    g_hat0 = G @ alpha
    projections = spectrum.eigenvectors[:, :rank].T @ w
    return AlignmentResult(
        g_hat0=g_hat0,
        alpha=alpha,
        sigma=sigma,
        rank=rank,
        spectrum=spectrum,
        balance=B,
        weight_projections=projections,
    )


def align_ub(rep: SharedRepGradients, weights=None) -> AlignmentResult:
    """Alignment over a shared representation (upper-bound approximation).

    Runs the task-space alignment on Z (gradients w.r.t. the shared
    representation) and maps the aligned cumulative gradient back through
    the Jacobian: g_hat0 = J @ (Z @ alpha) = sigma * J Z_hat w. Only one
    Jacobian application is needed regardless of the task count.

    Raises ZeroGradient when every column of ``Z`` is zero.
    """
    if not isinstance(rep, SharedRepGradients):
        rep = SharedRepGradients(*rep)
    result = align(rep.Z, weights)
    g_hat0 = rep.J @ result.g_hat0
    return AlignmentResult(
        g_hat0=g_hat0,
        alpha=result.alpha,
        sigma=result.sigma,
        rank=result.rank,
        spectrum=result.spectrum,
        balance=result.balance,
        weight_projections=result.weight_projections,
    )


def uniform(G, weights=None) -> np.ndarray:
    """Weighted linear scalarization: returns G @ w."""
    G = check_matrix(G)
    w = check_weights(weights, G.shape[1])
    return G @ w


def _pcgrad_project(G: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Project each task gradient off the gradients it conflicts with.

    For each task i the other tasks are visited in an rng-shuffled order;
    whenever the running gradient conflicts with g_j (negative dot product)
    its projection onto g_j is removed. Pairs with a zero g_j are skipped.
    """
    T = G.shape[1]
    sq_norms = np.einsum("ij,ij->j", G, G)
    projected = np.zeros_like(G)
    for i in range(T):
        g = G[:, i].copy()
        others = np.array([j for j in range(T) if j != i], dtype=int)
        rng.shuffle(others)
        for j in others:
            if sq_norms[j] == 0.0:
                continue
            dot = float(g @ G[:, j])
            if dot < 0.0:
                g -= (dot / sq_norms[j]) * G[:, j]
        projected[:, i] = g
    return projected


def pcgrad(G, weights=None, rng=None) -> np.ndarray:
    """Gradient surgery: the weighted sum of conflict-projected gradients."""
    G = check_matrix(G)
    w = check_weights(weights, G.shape[1])
    rng = check_rng(rng)
    return _pcgrad_project(G, rng) @ w


def _frank_wolfe_min_norm(M: np.ndarray, max_iters: int = 200, gap_tol: float = 1e-8) -> np.ndarray:
    """Frank-Wolfe (away-steps variant) for min over the simplex of
    gamma^T M gamma / 2.

    Away steps restore linear convergence on the simplex, so the duality
    gap tolerance is actually reached within the iteration budget; plain
    Frank-Wolfe zig-zags at O(1/k) and can land visibly off the optimum
    after 200 iterations.
    """
    T = M.shape[0]
    gamma = np.full(T, 1.0 / T)
    for _ in range(max_iters):
        grad = M @ gamma
        s = int(np.argmin(grad))
        fw_gap = float(gamma @ grad - grad[s])
        if fw_gap <= gap_tol:
            break
        support = np.nonzero(gamma > 0.0)[0]
        v = int(support[np.argmax(grad[support])])
        away_gap = float(grad[v] - gamma @ grad)
        if fw_gap >= away_gap:
            d = -gamma.copy()
            d[s] += 1.0
            eta_max = 1.0
        else:
            d = gamma.copy()
            d[v] -= 1.0
            denom_mass = 1.0 - gamma[v]
            if denom_mass <= 0.0:
                break
            eta_max = gamma[v] / denom_mass
        Md = M @ d
        curv = float(d @ Md)
        slope = float(gamma @ Md)
        if curv <= 0.0:
            eta = eta_max
        else:
            eta = min(eta_max, max(0.0, -slope / curv))
        if eta <= 0.0:
            break
        gamma = gamma + eta * d
        np.clip(gamma, 0.0, None, out=gamma)
        gamma /= gamma.sum()
    return gamma


def mgda(G) -> np.ndarray:
    """Min-norm point in the convex hull of the task gradients.

    Two tasks use the closed form; more tasks run Frank-Wolfe on the task
    Gram matrix (at most 200 iterations, duality-gap tolerance 1e-8).
    Identical columns short-circuit to the first vertex.
    """
    G = check_matrix(G)
    T = G.shape[1]
    if T == 1:
        return G[:, 0].copy()
    if np.all(G == G[:, :1]):
        gamma = np.zeros(T)
        gamma[0] = 1.0
        return G @ gamma
    if T == 2:
        g1, g2 = G[:, 0], G[:, 1]
        diff = g1 - g2
        denom = float(diff @ diff)
        c = float((g2 - g1) @ g2) / denom
        c = min(1.0, max(0.0, c))
        gamma = np.array([c, 1.0 - c])
    else:
        gamma = _frank_wolfe_min_norm(gram(G))
    return G @ gamma


def cagrad_dual_objective(gamma, M: np.ndarray, w: np.ndarray, c: float) -> float:
    """Dual objective F(gamma) = gamma^T M w + c*||g0|| * ||G gamma||."""
    gamma = np.asarray(gamma, dtype=np.float64)
    g0_norm = math.sqrt(max(float(w @ M @ w), 0.0))
    quad = max(float(gamma @ M @ gamma), 0.0)
    return float(gamma @ M @ w) + c * g0_norm * math.sqrt(quad)


def _project_simplex(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, x.size + 1)
    cond = u - css / ks > 0
    rho = int(np.nonzero(cond)[0][-1])
    theta = css[rho] / (rho + 1.0)
    return np.maximum(x - theta, 0.0)


def _cagrad_solve(M: np.ndarray, w: np.ndarray, c: float, g0_norm: float) -> tuple[np.ndarray, float]:
    """Deterministic minimization of the conflict-averse dual over the simplex.

    Projected gradient descent (100 iterations, step 0.05, uniform
    initialization) followed by a Frank-Wolfe polish with exact line
    searches. The fixed-step phase alone stalls on shallow duals (strongly
    conflicting, near-equal-norm gradients); the polish pushes the dual
    value to grid-search accuracy while staying deterministic.
    """
    T = M.shape[0]
    Mw = M @ w

    def value(gamma: np.ndarray) -> float:
        quad = max(float(gamma @ M @ gamma), 0.0)
        return float(gamma @ Mw) + c * g0_norm * math.sqrt(quad)

    gamma = np.full(T, 1.0 / T)
    best = gamma
    best_val = value(gamma)
    for _ in range(100):
        quad = max(float(gamma @ M @ gamma), 0.0)
        grad = Mw.copy()
        if quad > 0.0:
            grad += (c * g0_norm / math.sqrt(quad)) * (M @ gamma)
        gamma = _project_simplex(gamma - 0.05 * grad)
        val = value(gamma)
        if val < best_val:
            best_val = val
            best = gamma

    def line_min(start: np.ndarray, end: np.ndarray) -> tuple[np.ndarray, float]:
        # The dual is convex, so its restriction to a segment is unimodal.
        lo, hi = 0.0, 1.0
        for _ in range(90):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            if value(start + m1 * (end - start)) <= value(start + m2 * (end - start)):
                hi = m2
            else:
                lo = m1
        eta = 0.5 * (lo + hi)
        point = start + eta * (end - start)
        return point, value(point)

    gamma = best
    for _ in range(40):
        moved = False
        for t in range(T):
            vertex = np.zeros(T)
            vertex[t] = 1.0
            cand, cand_val = line_min(gamma, vertex)
            if cand_val < best_val - 1e-15 * (1.0 + abs(best_val)):
                best_val = cand_val
                best = cand
                moved = True
        gamma = best
        if not moved:
            break
    return best, best_val


def cagrad_dual_solution(G, weights=None, c: float = 0.4) -> tuple[np.ndarray, float]:
    """Simplex weights gamma and the dual value behind the cagrad direction."""
    G = check_matrix(G)
    w = check_weights(weights, G.shape[1])
    if c < 0:
        raise ValueError("c must be non-negative")
    M = gram(G)
    if c == 0.0:
        return w.copy(), cagrad_dual_objective(w, M, w, c)
    g0_norm = float(np.linalg.norm(G @ w))
    return _cagrad_solve(M, w, c, g0_norm)


def cagrad(G, weights=None, c: float = 0.4) -> np.ndarray:
    """Conflict-averse direction: g0 plus a bounded correction.

    Solves the dual over the simplex (deterministic, see _cagrad_solve)
    and returns g0 + (c*||g0||/||g_gamma||) * g_gamma. With c = 0 this is
    exactly g0 = G @ w.
    """
    G = check_matrix(G)
    w = check_weights(weights, G.shape[1])
    if c < 0:
        raise ValueError("c must be non-negative")
    g0 = G @ w
    if c == 0.0:
        return g0
    g0_norm = float(np.linalg.norm(g0))
    gamma, _ = _cagrad_solve(gram(G), w, c, g0_norm)
    g_gamma = G @ gamma
    corr_norm = float(np.linalg.norm(g_gamma))
    if corr_norm == 0.0:
        return g0
    return g0 + (c * g0_norm / corr_norm) * g_gamma


def imtl_g(G, *, return_info: bool = False):
    """Impartial gradient balancing.

    Solves for combination coefficients beta (normalized to sum 1) such
    that the aggregate G @ beta has the same cosine similarity to every
    task gradient. A singular or numerically singular solve falls back to
    uniform coefficients and flags it in the info dict.
    """
    G = check_matrix(G)
    T = G.shape[1]
    norms = np.linalg.norm(G, axis=0)
    if np.any(norms == 0.0):
        idx = int(np.argmin(norms))
        raise ValueError(f"task {idx} has a zero gradient")

    info: dict[str, object] = {"fallback": False}
    units = G / norms
    # Equal cosines: (u_i . G beta) identical for all i, with sum(beta) = 1.
    N = units.T @ G
    singular = False
    try:
        cond = np.linalg.cond(N)
        if not np.isfinite(cond) or cond > 1e12:
            singular = True
        else:
            x = np.linalg.solve(N, np.ones(T))
            total = float(x.sum())
            if total == 0.0 or not np.all(np.isfinite(x)):
                singular = True
            else:
                beta = x / total
    except np.linalg.LinAlgError:
        singular = True
    if singular:
        info["fallback"] = True
        beta = np.full(T, 1.0 / T)

    out = G @ beta
    info["beta"] = beta
    info["pareto_stationary"] = bool(np.linalg.norm(out) <= 1e-12 * norms.max())
    if return_info:
        return out, info
    return out


# ---------------------------------------------------------------------------
# Estimator-style wrappers


class GradientAggregator(BaseEstimator):
    """Base class for aggregators with a scikit-learn parameter surface.

    Aggregators are stateless transformers: ``fit`` only validates input
    (kept for pipeline compatibility), the work happens per call in
    ``aggregate``. ``rep`` carries shared-representation gradients and is
    only consumed by the upper-bound alignment.
    """

    method: str = ""

    def fit(self, G, y=None):
        check_matrix(G)
        self.n_tasks_ = np.asarray(G).shape[1]
        return self

    def aggregate(self, G, rep=None) -> np.ndarray:
        raise NotImplementedError

    def transform(self, G) -> np.ndarray:
        """Per-task replacement gradients; default leaves G unchanged."""
        return check_matrix(G)


class AlignedMTL(GradientAggregator, TransformerMixin):
    """Condition-number-driven alignment of the full gradient matrix."""

    method = "aligned-mtl"

    def __init__(self, weights=None):
        self.weights = weights

    def align(self, G) -> AlignmentResult:
        return align(G, self.weights)

    def aggregate(self, G, rep=None) -> np.ndarray:
        return self.align(G).g_hat0

    def transform(self, G) -> np.ndarray:
        """The aligned gradient matrix G_hat (orthogonal columns, norm sigma)."""
        G = check_matrix(G)
        return self.align(G).aligned_matrix(G)


class AlignedMTLUB(GradientAggregator, TransformerMixin):
    """Alignment of shared-representation gradients (upper bound)."""

    method = "aligned-mtl-ub"

    def __init__(self, weights=None):
        self.weights = weights

    def align(self, rep: SharedRepGradients) -> AlignmentResult:
        return align_ub(rep, self.weights)

    def aggregate(self, G, rep=None) -> np.ndarray:
        if rep is None:
            raise ValueError("aligned-mtl-ub needs shared-representation gradients (rep)")
        return self.align(rep).g_hat0

    def transform(self, G) -> np.ndarray:
        """Aligned representation-gradient matrix Z_hat for a Z input."""
        Z = check_matrix(G)
        return align(Z, self.weights).aligned_matrix(Z)


class UniformScalarization(GradientAggregator):
    """Plain weighted sum of task gradients."""

    method = "uniform"

    def __init__(self, weights=None):
        self.weights = weights

    def aggregate(self, G, rep=None) -> np.ndarray:
        return uniform(G, self.weights)


class PCGrad(GradientAggregator):
    """Gradient surgery with an explicit random source for the task order."""

    method = "pcgrad"

    def __init__(self, weights=None, random_state=0):
        self.weights = weights
        self.random_state = random_state

    def fit(self, G, y=None):
        super().fit(G)
        self.rng_ = check_rng(self.random_state)
        return self

    def aggregate(self, G, rep=None) -> np.ndarray:
        if not hasattr(self, "rng_"):
            self.rng_ = check_rng(self.random_state)
        return pcgrad(G, self.weights, self.rng_)

    def transform(self, G) -> np.ndarray:
        """Projected per-task gradients (columns after surgery)."""
        G = check_matrix(G)
        return _pcgrad_project(G, check_rng(self.random_state))


class MGDA(GradientAggregator):
    """Min-norm convex combination of task gradients."""

    method = "mgda"

    def aggregate(self, G, rep=None) -> np.ndarray:
        return mgda(G)


class CAGrad(GradientAggregator):
    """Conflict-averse gradient with correction radius c."""

    method = "cagrad"

    def __init__(self, weights=None, c: float = 0.4):
        self.weights = weights
        self.c = c

    def aggregate(self, G, rep=None) -> np.ndarray:
        return cagrad(G, self.weights, self.c)


class IMTLG(GradientAggregator):
    """Equal-cosine gradient balancing."""

    method = "imtl-g"

    def aggregate(self, G, rep=None) -> np.ndarray:
        out, info = imtl_g(G, return_info=True)
        self.last_info_ = info
        return out


_METHODS = {
    cls.method: cls
    for cls in (AlignedMTL, AlignedMTLUB, UniformScalarization, PCGrad, MGDA, CAGrad, IMTLG)
}


def available_methods() -> list[str]:
    return sorted(_METHODS)


def make_aggregator(method: str, weights=None, random_state=0, **kwargs) -> GradientAggregator:
    """Build an aggregator by its registry id.

    Raises KeyError for unknown ids. ``weights`` and ``random_state`` are
    forwarded only to methods that accept them.
    """
    try:
        cls = _METHODS[method]
    except KeyError:
        raise KeyError(f"unknown aggregation method {method!r}; known: {', '.join(available_methods())}") from None
    params = {}
    if "weights" in cls().get_params():
        params["weights"] = weights
    if "random_state" in cls().get_params():
        params["random_state"] = random_state
    params.update(kwargs)
    return cls(**params)
