"""Application studies: communication cost, distributed regression, formation control."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design import DesignProblem, design, optimize_deflated_numerical
from .exceptions import (
    ComplementarityViolation,
    DesignInfeasible,
    EmptyKernel,
    PreconditionError,
)
from .graph import check_necessary, generate_graph
from .linalg import _null_space, build_projection
from .simulation import simulate_static

# --------------------------------------------------------------------------
# communication complexity

_MODEL_TAGS = {
    "er": "erdos_renyi",
    "erdos_renyi": "erdos_renyi",
    "ba": "barabasi_albert",
    "barabasi_albert": "barabasi_albert",
}


@dataclass(frozen=True)
class CommComplexityResult:
    """Average scalar transmissions per iteration per agent.

    One transmission is one scalar over one directed non-loop edge in one
    synchronous round.  An agreement run sends each agent's scalar to all
    out-neighbours; ``k`` parallel consensus runs send ``k`` scalars.
    """

    model: str
    n: int
    k: int
    trials: int
    per_agent_tx_parallel: float
    per_agent_tx_agreement: float
    ratio: float
    mean_out_degree: float
    edge_counts: tuple = field(default=())

    def to_json(self):
        return {
            "model": self.model,
            "n": self.n,
            "k": self.k,
            "trials": self.trials,
            "per_agent_tx_parallel": self.per_agent_tx_parallel,
            "per_agent_tx_agreement": self.per_agent_tx_agreement,
            "ratio": self.ratio,
            "mean_out_degree": self.mean_out_degree,
            "edge_counts": list(self.edge_counts),
        }


def comm_complexity(model, n, k, trials=20, seed=0, p=0.4, m=3):
    """Transmission counts for ``k`` consensus runs versus one agreement run.

    Trial ``r`` uses generator seed ``seed + r``.
    """
    tag = _MODEL_TAGS.get(model)
    if tag is None:
        raise PreconditionError(f"model must be one of {sorted(_MODEL_TAGS)}, got {model!r}")
    if not 1 <= k <= n:
        raise PreconditionError(f"k must lie in [1, {n}]")
    links = []
    for r in range(trials):
        g = generate_graph(tag, n, p=p, m=m, seed=seed + r)
        links.append(int(g.out_degrees().sum()))
    total_agreement = sum(links)
    total_parallel = k * total_agreement
    agree = total_agreement / (trials * n)
    return CommComplexityResult(
        model=tag,
        n=n,
        k=k,
        trials=trials,
        per_agent_tx_parallel=total_parallel / (trials * n),
        per_agent_tx_agreement=agree,
        ratio=total_parallel / total_agreement if total_agreement else float(k),
        mean_out_degree=agree,
        edge_counts=tuple(links),
    )


# --------------------------------------------------------------------------
# regression


@dataclass
class RegressionResult:
    theta_ls: np.ndarray
    theta_hat: np.ndarray
    y_hat: np.ndarray
    projection: np.ndarray
    trace: object
    certificate: object

    def summary(self, H, y):
        return {
            "n": int(H.shape[0]),
            "k": int(H.shape[1]),
            "theta_ls": self.theta_ls.tolist(),
            "theta_hat": self.theta_hat.tolist(),
            "projection_error": float(np.linalg.norm(self.y_hat - self.projection)),
            "normal_equation_residual": float(np.linalg.norm(H.T @ (y - self.y_hat))),
            "deflated_numerical_abscissa": float(self.certificate.deflated_numerical),
            "essential_abscissa": float(self.certificate.essential_abscissa),
            "horizon": float(self.trace.times[-1]),
        }


def regression_demo(H, y, graph, seed=0, iterations=2000):
    """Distributed least squares: agents converge to the projection of ``y`` onto ``Im(H)``."""
    H = np.asarray(H, dtype=float)
    if H.ndim == 1:
        H = H.reshape(-1, 1)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, k = H.shape
    if np.linalg.cond(H.T @ H) > 1e12:
        raise PreconditionError("H^T H is numerically singular")
    if not check_necessary(graph, k).holds:
        raise DesignInfeasible(f"graph has {graph.num_edges} edges, fewer than k n = {k * n}")
    weights = build_projection(H, H)
    if k == n:
        raise PreconditionError("k = n leaves nothing to estimate")
    cert = optimize_deflated_numerical(
        DesignProblem(graph, weights, "deflated_numerical", seed=seed, iterations=iterations)
    )
    trace = simulate_static(cert.A, y, weights=weights)
    y_hat = trace.final_state
    theta_ls = np.linalg.lstsq(H, y, rcond=None)[0]
    theta_hat = np.linalg.lstsq(H, y_hat, rcond=None)[0]
    return RegressionResult(theta_ls, theta_hat, y_hat, weights.W @ y, trace, cert)


def regression_preset(seed=0, n=50, alpha=4, noise=0.2):
    """Noisy line sampled at ``n`` points with a ``circulant(alpha)`` graph."""
    rng = np.random.default_rng(seed)
    s = np.arange(1, n + 1, dtype=float)
    H = np.column_stack([np.ones(n), s / np.linalg.norm(s)])
    y = 1.0 + 2.0 * s / n + noise * rng.standard_normal(n)
    return H, y, generate_graph("circulant", n, alpha=alpha)


# --------------------------------------------------------------------------
# formation control

FORMATION_M1 = np.array([
    [1, -1, -1, 1, 0, 0, 0, 0],
    [0, 0, 0, 0, 1, -1, -1, 1],
], dtype=float)
# rows are the transposed ray matrix; its columns span the direction of projection
FORMATION_N1T = np.array([
    [-1, 5, 5, -1, 0, 0, 0, 0],
    [0, 0, 0, 0, -1, 5, 5, -1],
], dtype=float)

FORMATION_MODES = ("consensus", "orthogonal", "oblique")


@dataclass(frozen=True)
class FormationSpec:
    n_robots: int = 8
    initial_positions: np.ndarray = None  # (n_robots, 2)
    constraint_matrix: np.ndarray = None  # M1
    ray_matrix: np.ndarray | None = None  # N1 (n_robots x r)

    def __post_init__(self):
        n = self.n_robots
        if self.initial_positions is None:
            ang = 2 * np.pi * np.arange(n) / n
            object.__setattr__(self, "initial_positions", np.column_stack([np.cos(ang), np.sin(ang)]))
        if self.constraint_matrix is None:
            if n != 8:
                raise PreconditionError("default constraint matrix is defined for 8 robots")
            object.__setattr__(self, "constraint_matrix", FORMATION_M1.copy())
        if self.initial_positions.shape != (n, 2):
            raise PreconditionError("initial_positions must be n_robots x 2")

    @classmethod
    def default(cls):
        return cls(ray_matrix=FORMATION_N1T.T.copy())

    @property
    def x0(self):
        """Interleaved ``(x_1, y_1, x_2, y_2, ...)``."""
        return self.initial_positions.reshape(-1)


def formation_weights(spec, mode):
    n = spec.n_robots
    if mode == "consensus":
        one = np.ones((n, 1))
        return build_projection(one, one)
    M1 = spec.constraint_matrix
    kernel = _null_space(M1, n - np.linalg.matrix_rank(M1))
    if mode == "orthogonal":
        return build_projection(kernel, kernel)
    if mode == "oblique":
        if spec.ray_matrix is None:
            raise ComplementarityViolation("oblique mode needs a ray matrix")
        N1 = spec.ray_matrix
        if N1.shape[1] + kernel.shape[1] != n:
            raise ComplementarityViolation(
                f"dim ker(M1) + dim Im(N1) = {kernel.shape[1] + N1.shape[1]} != {n}"
            )
        try:
            return build_projection(kernel, _null_space(N1.T, kernel.shape[1]))
        except PreconditionError as exc:
            raise ComplementarityViolation(f"ker(M1) and Im(N1) are not complementary: {exc}") from exc
    raise PreconditionError(f"mode must be one of {FORMATION_MODES}")


def kron_lift(A, d=2):
    """``A kron I_d``: acts on interleaved ``d``-dimensional agent states."""
    return np.kron(np.asarray(A, dtype=float), np.eye(d))


def default_formation_graph(spec, mode, alpha=4):
    """Smallest circulant, ``alpha`` upward, whose kernel conditions admit weights."""
    from .design import kernel_parameterization

    weights = formation_weights(spec, mode)
    n = spec.n_robots
    for a in range(alpha, n):
        g = generate_graph("circulant", n, alpha=a)
        try:
            kernel_parameterization(g, weights)
        except EmptyKernel:
            continue
        return g
    return generate_graph("complete", n)


@dataclass
class FormationResult:
    mode: str
    graph: object
    weights: object
    certificate: object
    trace2d: object  # SimTrace on the lifted 2n-dimensional state

    @property
    def final_positions(self):
        return self.trace2d.final_state.reshape(-1, 2)

    def constraint_residual(self, spec):
        """``max |M1 x(inf)|`` over both coordinates."""
        return float(np.abs(spec.constraint_matrix @ self.final_positions).max())

    def summary(self, spec):
        return {
            "mode": self.mode,
            "graph_edges": self.graph.num_edges,
            "circulant_degree": int(self.graph.num_edges // self.graph.n - 1),
            "final_positions": self.final_positions.tolist(),
            "constraint_residual": self.constraint_residual(spec),
            "rendezvous_error": float(np.abs(self.final_positions).max()),
            "final_error": self.trace2d.final_error,
            "essential_abscissa": float(self.certificate.essential_abscissa),
            "objective": self.certificate.objective,
        }


def formation_demo(spec=None, mode="orthogonal", graph=None, seed=0):
    """Design ``A`` for the chosen weights, lift it to the plane and simulate.

    Consensus and orthogonal weights are designed by minimizing the deflated
    numerical abscissa, oblique weights by minimizing the essential spectral
    abscissa.  Without ``graph`` the smallest feasible circulant with degree
    at least 4 is used.
    """
    spec = FormationSpec.default() if spec is None else spec
    weights = formation_weights(spec, mode)
    if graph is None:
        graph = default_formation_graph(spec, mode)
    objective = "essential_spectral" if mode == "oblique" else "deflated_numerical"
    cert = design(DesignProblem(graph, weights, objective, seed=seed))
    lifted = build_projection(np.kron(weights.t_cols, np.eye(2)), np.kron(weights.tau_rows.T, np.eye(2)))
    trace = simulate_static(kron_lift(cert.A), spec.x0, weights=lifted)
    return FormationResult(mode, graph, weights, cert, trace)
