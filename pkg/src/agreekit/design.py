"""Synthesis and certification of agreement matrices.

A matrix ``A`` consistent with a digraph drives ``x' = A x`` to ``W x(0)``
exactly when ``A t_i = 0`` and ``tau_i^T A = 0`` for the agreement modes and
the remaining ``n - k`` eigenvalues are stable.  The first condition is
linear in the edge weights, so the feasible weights form a subspace; the
optimizers below search that subspace under the normalization
``max |a_ij| <= 1``.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as mio
from .exceptions import (
    CombinatorialBudgetExceeded,
    EmptyKernel,
    NoStableFeasiblePoint,
    PatternViolation,
    PreconditionError,
)
from .graph import Digraph, EdgeParameters, charpoly_coefficients, read_graph, realize
from .linalg import (
    TOL_EIG,
    TOL_RANK,
    _orient,
    abscissas,
    build_projection,
    decompose_projection,
    matrix_exponential,
)

TOL_DESIGN = 1e-8
LIMIT_TOL = 1e-6
LIMIT_HORIZON = 40.0
CROSSCHECK_BUDGET = 10**5

OBJECTIVES = ("feasibility", "essential_spectral", "deflated_numerical")
_OBJECTIVE_ALIASES = {
    "feasible": "feasibility",
    "feasibility": "feasibility",
    "spectral": "essential_spectral",
    "essential_spectral": "essential_spectral",
    "numerical": "deflated_numerical",
    "deflated_numerical": "deflated_numerical",
}


def normalize_objective(name):
    try:
        return _OBJECTIVE_ALIASES[name]
    except KeyError:
        raise PreconditionError(f"unknown objective {name!r}") from None


def worker_count():
    """Thread cap from ``AGREEKIT_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("AGREEKIT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class DesignProblem:
    graph: Digraph
    weights: object  # ProjectionWeights
    objective: str = "feasibility"
    seed: int = 0
    iterations: int = 2000
    restarts: int = 20

    def __post_init__(self):
        if self.graph.n != self.weights.n:
            raise PreconditionError(
                f"graph has {self.graph.n} nodes but W is {self.weights.n} x {self.weights.n}"
            )
        object.__setattr__(self, "objective", normalize_objective(self.objective))
        if self.objective != "feasibility" and self.weights.k == self.weights.n:
            raise PreconditionError("k = n forces A = 0; nothing to optimize")

    @classmethod
    def from_json(cls, path):
        """Load ``{"graph": path, "weights": path, "objective": str, "seed": int}``.

        Relative paths are resolved against the problem file's directory.
        """
        path = Path(path)
        data = json.loads(path.read_text())
        base = path.parent
        graph = read_graph(base / data["graph"])
        W = mio.read_matrix(base / data["weights"])
        return cls(
            graph=graph,
            weights=decompose_projection(W, data.get("k")),
            objective=data.get("objective", "feasibility"),
            seed=int(data.get("seed", 0)),
            iterations=int(data.get("iterations", 2000)),
            restarts=int(data.get("restarts", 20)),
        )


@dataclass
class AgreementCertificate:
    """Checkable evidence that ``A`` reaches agreement on ``W``.

    ``passed`` is the conjunction of the pattern check, the kernel residual
    bound, the zero-multiplicity test, stability of the remaining spectrum and
    the finite-horizon limit check.  Static certificates (``k = n``) carry
    ``A = 0`` and leave the rate fields as ``nan``.
    """

    A: np.ndarray
    k: int
    kernel_residual: float
    essential_abscissa: float
    zero_multiplicity_check: bool
    charpoly_tail: list
    tail_stable: bool
    limit_error: float
    pattern_ok: bool = True
    charpoly_crosscheck: float | None = None
    deflated_numerical: float = float("nan")
    static: bool = False
    objective: str = "feasibility"
    objective_value: float = float("nan")
    kernel_dim: int | None = None
    history: list = field(default_factory=list)
    passed: bool = False

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def limit_horizon(self):
        if self.static or not self.essential_abscissa < 0:
            return float("nan")
        return LIMIT_HORIZON / abs(self.essential_abscissa)

    def to_json(self):
        def num(x):
            return None if x is None or not np.isfinite(x) else float(x)

        return {
            "passed": bool(self.passed),
            "static": bool(self.static),
            "n": int(self.n),
            "k": int(self.k),
            "A": mio.matrix_to_csv(self.A),
            "kernel_residual": num(self.kernel_residual),
            "essential_abscissa": num(self.essential_abscissa),
            "deflated_numerical": num(self.deflated_numerical),
            "zero_multiplicity_check": bool(self.zero_multiplicity_check),
            "charpoly_tail": [float(p) for p in self.charpoly_tail],
            "tail_stable": bool(self.tail_stable),
            "charpoly_crosscheck": num(self.charpoly_crosscheck),
            "limit_horizon": num(self.limit_horizon),
            "limit_error": num(self.limit_error),
            "pattern_ok": bool(self.pattern_ok),
            "objective": self.objective,
            "objective_value": num(self.objective_value),
            "kernel_dim": self.kernel_dim,
            "history": [float(h) for h in self.history],
        }

    @classmethod
    def from_json(cls, data):
        def num(x):
            return float("nan") if x is None else float(x)

        return cls(
            A=mio.matrix_from_text(data["A"]),
            k=int(data["k"]),
            kernel_residual=num(data["kernel_residual"]),
            essential_abscissa=num(data["essential_abscissa"]),
            zero_multiplicity_check=bool(data["zero_multiplicity_check"]),
            charpoly_tail=list(data["charpoly_tail"]),
            tail_stable=bool(data["tail_stable"]),
            limit_error=num(data["limit_error"]),
            pattern_ok=bool(data["pattern_ok"]),
            charpoly_crosscheck=data.get("charpoly_crosscheck"),
            deflated_numerical=num(data.get("deflated_numerical")),
            static=bool(data["static"]),
            objective=data.get("objective", "feasibility"),
            objective_value=num(data.get("objective_value")),
            kernel_dim=data.get("kernel_dim"),
            history=list(data.get("history", [])),
            passed=bool(data["passed"]),
        )


def read_certificate(path):
    return AgreementCertificate.from_json(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# certification


def _rank_above(M, floor):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > max(TOL_RANK * s[0], floor)))


def kernel_residual(A, weights):
    """Largest of ``||A t_i||`` and ``||tau_i^T A||`` over the agreement modes."""
    if weights.k == 0:
        return 0.0
    r1 = np.linalg.norm(A @ weights.t_cols, axis=0)
    r2 = np.linalg.norm(weights.tau_rows @ A, axis=1)
    return float(max(r1.max(), r2.max()))


def certify(A, weights, graph=None, tol_design=TOL_DESIGN, crosscheck_budget=CROSSCHECK_BUDGET):
    """Evaluate the agreement conditions for ``A`` on ``W``.

    Raises
    ------
    PatternViolation
        When ``A`` has entries above ``tol_design`` outside the graph pattern.
    """
    A = np.asarray(A, dtype=float)
    n, k = weights.n, weights.k
    if A.shape != (n, n):
        raise PreconditionError(f"A is {A.shape}, W is {n} x {n}")
    if graph is not None:
        if graph.n != n:
            raise PreconditionError(f"graph has {graph.n} nodes, W has {n}")
        off = np.abs(A[~graph.pattern()])
        if off.size and off.max() > tol_design * max(1.0, float(np.abs(A).max())):
            raise PatternViolation(f"A has mass {off.max():.3g} outside the graph pattern")

    residual = kernel_residual(A, weights)
    if k == n:
        zero = bool(np.abs(A).max(initial=0.0) <= tol_design)
        return AgreementCertificate(
            A=A, k=k, kernel_residual=residual, essential_abscissa=float("nan"),
            zero_multiplicity_check=zero, charpoly_tail=[], tail_stable=True,
            limit_error=0.0 if zero else float("nan"), static=True, passed=zero,
        )

    floor = 10.0 * np.sqrt(n) * tol_design
    zero_ok = (_rank_above(A, floor) == n - k
               and _rank_above(A @ A, floor * max(1.0, np.linalg.norm(A, 2))) == n - k)
    report = abscissas(A, weights)
    essential = report.essential_spectral
    tail = [float(c) for c in np.poly(A)[1:n - k + 1]]
    tail_roots = np.roots([1.0] + tail) if tail else np.array([])
    margin = TOL_EIG * max(1.0, float(np.linalg.norm(A, 2)))
    tail_stable = bool(np.all(tail_roots.real < -margin))

    crosscheck = None
    if graph is not None and crosscheck_budget:
        try:
            combinatorial = charpoly_coefficients(
                EdgeParameters.from_matrix(graph, A), n - k, budget=crosscheck_budget
            )
            crosscheck = float(np.max(np.abs(np.array(combinatorial) - np.array(tail))))
        except CombinatorialBudgetExceeded:
            crosscheck = None

    if essential < 0:
        limit_error = float(np.linalg.norm(matrix_exponential(A, LIMIT_HORIZON / abs(essential)) - weights.W))
    else:
        limit_error = float("inf")

    passed = bool(
        residual <= tol_design and zero_ok and report.structural_zeros_ok
        and essential < 0 and limit_error <= LIMIT_TOL
    )
    return AgreementCertificate(
        A=A, k=k, kernel_residual=residual, essential_abscissa=essential,
        zero_multiplicity_check=bool(zero_ok), charpoly_tail=tail, tail_stable=tail_stable,
        limit_error=limit_error, charpoly_crosscheck=crosscheck,
        deflated_numerical=report.deflated_numerical, passed=passed,
    )


# --------------------------------------------------------------------------
# complete graphs


def design_complete(weights, B=None):
    """``A = T diag(0_k, B) T^-1`` with ``B = -I`` by default.

    Always realizable on the complete graph.  For ``k = n`` the result is the
    static certificate with ``A = 0``.
    """
    n, k = weights.n, weights.k
    if k == n:
        return certify(np.zeros((n, n)), weights)
    if B is None:
        B = -np.eye(n - k)
    B = np.asarray(B, dtype=float)
    if B.shape != (n - k, n - k):
        raise PreconditionError(f"B must be {(n - k, n - k)}, got {B.shape}")
    if np.max(np.linalg.eigvals(B).real) >= 0:
        raise PreconditionError("B must be Hurwitz stable")
    A = weights.error_basis @ B @ weights.error_rows
    # the combinatorial crosscheck only exhausts its budget on a complete graph
    cert = certify(A, weights, Digraph.complete(n), crosscheck_budget=0)
    cert.objective_value = cert.essential_abscissa
    return cert


# --------------------------------------------------------------------------
# sparse graphs


def constraint_matrix(graph, weights):
    """Stacked ``2 n k x |E|`` system ``A t_i = 0``, ``tau_i^T A = 0`` in the edge weights."""
    n, k = weights.n, weights.k
    m = graph.num_edges
    rows = np.array([i - 1 for i, _ in graph.edges], dtype=int)
    cols = np.array([j - 1 for _, j in graph.edges], dtype=int)
    C = np.zeros((2 * n * k, m))
    edge_ids = np.arange(m)
    for r in range(k):
        t = weights.t_cols[:, r]
        tau = weights.tau_rows[r]
        # (A t)_i collects a_ij t_j
        C[r * 2 * n + rows, edge_ids] = t[cols]
        # (tau^T A)_j collects tau_i a_ij
        C[r * 2 * n + n + cols, edge_ids] = tau[rows]
    return C


@dataclass(frozen=True)
class KernelParameterization:
    """Orthonormal ``basis`` (|E| x dim): every ``a = basis @ z`` meets the kernel conditions."""

    basis: np.ndarray
    rank: int

    @property
    def dim(self):
        return self.basis.shape[1]


def kernel_parameterization(problem_or_graph, weights=None):
    """Orthonormal basis of edge-weight vectors meeting the kernel conditions.

    Dependent constraint rows are removed by the SVD rank cut.

    Raises
    ------
    EmptyKernel
        When only ``a = 0`` satisfies the conditions.
    """
    graph, weights = _unpack(problem_or_graph, weights)
    C = constraint_matrix(graph, weights)
    m = graph.num_edges
    if C.size == 0 or not np.any(C):
        return KernelParameterization(np.eye(m), 0)
    _, s, Vt = np.linalg.svd(C, full_matrices=True)
    r = int(np.sum(s > TOL_RANK * s[0]))
    if r >= m:
        raise EmptyKernel(
            f"the {C.shape[0]} kernel equations have full rank {r} in the {m} edge weights"
        )
    return KernelParameterization(_orient(Vt[r:].T), r)


def _unpack(problem_or_graph, weights):
    if isinstance(problem_or_graph, DesignProblem):
        return problem_or_graph.graph, problem_or_graph.weights
    if weights is None:
        raise PreconditionError("weights required with a bare graph")
    if problem_or_graph.n != weights.n:
        raise PreconditionError(f"graph has {problem_or_graph.n} nodes, W has {weights.n}")
    return problem_or_graph, weights


def _heuristic_start(graph, weights, K):
    # projection of -(I - W) onto the feasible subspace
    target = -(np.eye(weights.n) - weights.W)
    a = np.array([target[i - 1, j - 1] for i, j in graph.edges])
    return K.T @ a


def _normalize(K, z):
    peak = float(np.abs(K @ z).max(initial=0.0))
    return z / peak if peak > 0 else z


def _project_box_subspace(K, a, iters=100, tol=1e-12):
    """Dykstra projection of ``a`` onto range(K) intersected with the unit box."""
    x = a.copy()
    p = np.zeros_like(a)
    q = np.zeros_like(a)
    for _ in range(iters):
        y = K @ (K.T @ (x + p))
        p = x + p - y
        x_new = np.clip(y + q, -1.0, 1.0)
        q = y + q - x_new
        if np.linalg.norm(x_new - x) <= tol:
            x = x_new
            break
        x = x_new
    z = K.T @ x
    peak = float(np.abs(K @ z).max(initial=0.0))
    return z / max(1.0, peak)


class _DeflatedNumerical:
    """``z -> lambda_max(Q^T sym(A(K z)) Q)`` with a subgradient."""

    def __init__(self, graph, weights, K):
        Q, _ = np.linalg.qr(weights.error_basis)
        rows = [i - 1 for i, _ in graph.edges]
        cols = [j - 1 for _, j in graph.edges]
        # S_l = Q^T sym(e_i e_j^T) Q, one slice per edge
        S = 0.5 * (np.einsum("la,lb->lab", Q[rows], Q[cols]) + np.einsum("la,lb->lab", Q[cols], Q[rows]))
        self.G = np.einsum("lm,lab->mab", K, S)

    def __call__(self, z):
        F = np.tensordot(z, self.G, axes=1)
        vals, vecs = np.linalg.eigh(F)
        q = vecs[:, -1]
        return float(vals[-1]), np.einsum("a,mab,b->m", q, self.G, q)


def _essential_from_blocks(graph, weights, K):
    T2 = weights.error_basis
    U2 = weights.error_rows
    rows = np.array([i - 1 for i, _ in graph.edges])
    cols = np.array([j - 1 for _, j in graph.edges])
    # B(a) = U2 A T2 = sum_l a_l U2[:, i_l] T2[j_l, :]
    blocks = np.einsum("al,lb->lab", U2[:, rows], T2[cols])
    Bz = np.einsum("lm,lab->mab", K, blocks)

    def value(z):
        return float(np.max(np.linalg.eigvals(np.tensordot(z, Bz, axes=1)).real))

    return value


def _finish(graph, weights, K, candidates, objective, history):
    """Certify candidates best-first; return the first that passes."""
    for val, z in sorted(candidates, key=lambda c: c[0]):
        A = realize(graph, K @ z)
        cert = certify(A, weights, graph)
        if cert.passed:
            cert.objective = objective
            cert.objective_value = val
            cert.kernel_dim = K.shape[1]
            cert.history = history
            return cert
    raise NoStableFeasiblePoint(
        f"no iterate of the {objective} search certified (best value {min(c[0] for c in candidates):.3g})"
        if candidates else f"the {objective} search produced no candidates"
    )


def optimize_deflated_numerical(problem, iterations=None):
    """Minimize the deflated numerical abscissa over normalized feasible weights.

    Projected subgradient descent with Polyak-type steps toward a target that
    sits below the best value found so far; the gap shrinks as the run goes.
    """
    graph, weights = problem.graph, problem.weights
    iterations = problem.iterations if iterations is None else iterations
    K = kernel_parameterization(problem).basis
    f = _DeflatedNumerical(graph, weights, K)
    z = _project_box_subspace(K, K @ _normalize(K, _heuristic_start(graph, weights, K)))
    if not np.any(z):
        rng = np.random.default_rng(problem.seed)
        z = _project_box_subspace(K, K @ rng.standard_normal(K.shape[1]))

    best_val, best_z = np.inf, z
    history = []
    candidates = []
    gap = 0.5
    for it in range(iterations):
        val, g = f(z)
        if val < best_val - 1e-15:
            best_val, best_z = val, z.copy()
            if val < 0:
                candidates.append((val, best_z))
        history.append(best_val)
        gnorm2 = float(g @ g)
        if gnorm2 == 0.0:
            break
        target = best_val - gap * max(abs(best_val), 1e-3) / (1.0 + it / 50.0)
        step = (val - target) / gnorm2
        z = _project_box_subspace(K, K @ (z - step * g))
    candidates = candidates[-10:] or [(best_val, best_z)]
    return _finish(graph, weights, K, candidates, "deflated_numerical", history)


def _coordinate_descent(value, K, z0, rng, max_evals):
    z = _normalize(K, z0)
    fz = value(z)
    dim = K.shape[1]
    h = 0.5
    evals = 1
    trace = [fz]
    while evals < max_evals and h > 1e-9:
        improved = False
        for m in rng.permutation(dim):
            for sign in (1.0, -1.0):
                cand = z.copy()
                cand[m] += sign * h
                cand = _normalize(K, cand)
                fc = value(cand)
                evals += 1
                if fc < fz:
                    z, fz, improved = cand, fc, True
                    break
            trace.append(fz)
            if evals >= max_evals:
                break
        h = h * 1.5 if improved else h * 0.5
        h = min(h, 2.0)
    return fz, z, trace


def optimize_essential_spectral(problem, restarts=None, evals_per_restart=None):
    """Multi-start randomized coordinate descent on the essential spectral abscissa.

    The objective is not convex; the result is the best local optimum found.
    Restart ``r`` draws from ``default_rng([seed, r])``; restart 0 starts from
    the projected ``-(I - W)`` when that is nonzero.  Restarts run on up to
    ``AGREEKIT_THREADS`` threads and are reduced by (value, restart index).
    """
    graph, weights = problem.graph, problem.weights
    restarts = problem.restarts if restarts is None else restarts
    max_evals = evals_per_restart or max(400, 40 * problem.iterations // max(restarts, 1))
    K = kernel_parameterization(problem).basis
    value = _essential_from_blocks(graph, weights, K)
    z_heur = _heuristic_start(graph, weights, K)

    def run(r):
        rng = np.random.default_rng([problem.seed, r])
        z0 = z_heur if r == 0 and np.any(z_heur) else rng.standard_normal(K.shape[1])
        return _coordinate_descent(value, K, z0, rng, max_evals)

    if worker_count() > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=min(worker_count(), restarts)) as pool:
            results = list(pool.map(run, range(restarts)))
    else:
        results = [run(r) for r in range(restarts)]

    order = sorted(range(restarts), key=lambda r: (results[r][0], r))
    history = []
    best = np.inf
    for r in range(restarts):
        for v in results[r][2]:
            best = min(best, v)
            history.append(best)
    candidates = [(results[r][0], results[r][1]) for r in order if results[r][0] < 0]
    return _finish(graph, weights, K, candidates, "essential_spectral", history)


def design(problem):
    """Dispatch on ``problem.objective``.

    ``feasibility`` uses the closed-form construction on complete graphs and
    otherwise tries the projected ``-(I - W)`` before falling back to the
    two optimizers.
    """
    graph, weights = problem.graph, problem.weights
    if weights.k == weights.n:
        cert = certify(np.zeros((weights.n, weights.n)), weights, graph)
        return cert
    if problem.objective == "deflated_numerical":
        return optimize_deflated_numerical(problem)
    if problem.objective == "essential_spectral":
        return optimize_essential_spectral(problem)
    if graph.is_complete():
        return design_complete(weights)
    K = kernel_parameterization(problem).basis
    z = _normalize(K, _heuristic_start(graph, weights, K))
    if np.any(z):
        cert = certify(realize(graph, K @ z), weights, graph)
        if cert.passed:
            cert.kernel_dim = K.shape[1]
            return cert
    try:
        return optimize_deflated_numerical(problem)
    except NoStableFeasiblePoint:
        return optimize_essential_spectral(problem)


# --------------------------------------------------------------------------
# instance generation


def sample_reachable_weights(graph, k, seed=0, attempts=50, sweeps=5000):
    """A rank-``k`` projection that ``graph`` provably reaches agreement on.

    Alternates between the graph pattern and rank ``n - k`` matrices to find
    a consistent ``A`` with a ``k``-dimensional kernel, then takes ``W`` as
    the projection onto ``ker(A)`` along ``Im(A)``.  Draws are repeated from
    offset seeds until the nonzero spectrum of ``A`` (or of ``-A``) is stable.

    Returns
    -------
    weights : ProjectionWeights
    A : ndarray
        The witness matrix, already certified against ``weights``.
    """
    n = graph.n
    if not 1 <= k < n:
        raise PreconditionError(f"k must lie in [1, {n - 1}]")
    mask = graph.pattern()
    for attempt in range(attempts):
        rng = np.random.default_rng([seed, attempt])
        A = rng.standard_normal((n, n)) * mask
        for _ in range(sweeps):
            U, s, Vt = np.linalg.svd(A)
            A = ((U[:, : n - k] * s[: n - k]) @ Vt[: n - k]) * mask
        s = np.linalg.svd(A, compute_uv=False)
        if s[n - k] > 1e-12 * s[0] or s[n - k - 1] < 1e-3 * s[0]:
            continue
        A = A / np.abs(A).max()
        ev = np.linalg.eigvals(A)
        nonzero = ev[np.argsort(np.abs(ev))[k:]]
        if np.all(nonzero.real > 0):
            A = -A
        elif not np.all(nonzero.real < 0):
            continue
        U, _, Vt = np.linalg.svd(A)
        ker_A = Vt[n - k:].T
        ker_At = U[:, n - k:]
        try:
            weights = build_projection(ker_A, ker_At)
        except PreconditionError:
            continue
        # snap tiny off-rank residue so the witness certifies at full precision
        A = weights.error_basis @ (weights.error_rows @ A @ weights.error_basis) @ weights.error_rows
        A = A * mask
        if certify(A, weights, graph).passed:
            return weights, A
    raise NoStableFeasiblePoint(f"no reachable rank-{k} projection found in {attempts} attempts")
