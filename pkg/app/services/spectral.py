"""Spectral analysis of replacement policies.

This module classifies the mean structure of a replacement policy:

1. Class decomposition of the structure digraph (strongly connected components,
   returned in a topological order of the condensation)
2. Perron data per class, lambda_H and the limit simplex S_H spanned by the
   class left eigenvectors v_j, with right eigenvectors u_j and the projection U
3. The secondary spectrum (rho, nu_sec) that sets the convergence-rate law b_n
4. Distances to the limit set and integration of the mean ODE whose
   equilibria are lambda_H * S_H

Indices are 0-based. Row k of a matrix is the source color k: drawing color k
adds row k of the replacement matrix to the urn.
"""

import heapq
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from ..core.exceptions import (
    BlowUp,
    DomainError,
    NoPositiveRightEigenvector,
    NonPositiveLambda,
    PreconditionViolation,
)
from ..models.structures import SpectralProfileModel

# Set up logger
logger = logging.getLogger(__name__)

POWER_TOL = 1e-12
POWER_MAX_ITER = 1_000_000
POLISH_OFFSET = 1e-8
POLISH_STEPS = 4
ROUNDING_FLOOR = 16 * np.finfo(float).eps
CLUSTER_TOL = 1e-8
RANK_TOL = 1e-8
POSITIVITY_TOL = 1e-10
PROJECTION_TOL = 1e-14
PROJECTION_MAX_ITER = 100_000
ALPHA_MIN, ALPHA_MAX = 1e-9, 1e9
MAX_DIMENSION = 64


@dataclass(frozen=True)
class SpectralProfile:
    """Perron and secondary spectral data of a mean matrix H.

    Attributes:
        lambda_h: Largest real part of the eigenvalues of H.
        classes: Irreducible classes in topological order of the condensation.
        class_roots: Perron root of each class block, aligned with ``classes``.
        lambda_classes: Positions in ``classes`` of the nu1 classes attaining lambda_h.
        v_basis: nu1 x d array; row j is the left eigenvector v_j (sums to 1).
        u_basis: nu1 x d array; row j is the right eigenvector u_j with v_j . u_j = 1.
        u_projection: d x d projection U = sum_j u_j^t v_j.
        rho: Ratio of the second largest real part to lambda_h, None without secondary spectrum.
        nu_sec: Largest Jordan block size at the second largest real part.
        irreducible: Whether the structure digraph is strongly connected.
    """

    lambda_h: float
    classes: List[List[int]]
    class_roots: List[float]
    lambda_classes: List[int]
    v_basis: np.ndarray
    u_basis: np.ndarray
    u_projection: np.ndarray
    rho: Optional[float] = None
    nu_sec: int = 1
    irreducible: bool = False

    @property
    def nu1(self) -> int:
        return int(self.v_basis.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.v_basis.shape[1])


@dataclass(frozen=True)
class OdeTrajectory:
    """Sampled solution of the mean ODE."""

    times: np.ndarray
    states: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


# --- Validation helpers ---

def as_structure_matrix(nonzero: Sequence[Sequence[bool]]) -> np.ndarray:
    """Boolean square matrix of possibly-nonzero replacement entries."""
    s = np.asarray(nonzero, dtype=bool)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise PreconditionViolation(f"structure matrix must be square, got shape {s.shape}")
    if not 1 <= s.shape[0] <= MAX_DIMENSION:
        raise PreconditionViolation(f"dimension must be between 1 and {MAX_DIMENSION}, got {s.shape[0]}")
    return s


def check_mean_sign_conditions(H: Sequence[Sequence[float]]) -> List[str]:
    """Lists violations of the mean-matrix conditions (finite, nonnegative off-diagonal)."""
    h = np.asarray(H, dtype=float)
    problems: List[str] = []
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        return [f"H must be square, got shape {h.shape}"]
    if not np.all(np.isfinite(h)):
        problems.append("H has non-finite entries")
    off = h.copy()
    np.fill_diagonal(off, 0.0)
    for k, q in zip(*np.nonzero(off < 0)):
        problems.append(
            f"H[{k}][{q}] = {h[k, q]} is a negative off-diagonal mean (nonnegative off-diagonal condition)"
        )
    return problems


def as_mean_matrix(H: Sequence[Sequence[float]]) -> np.ndarray:
    """Validated float copy of a mean matrix."""
    problems = check_mean_sign_conditions(H)
    if problems:
        raise PreconditionViolation("; ".join(problems))
    h = np.array(H, dtype=float)
    if h.shape[0] > MAX_DIMENSION:
        raise PreconditionViolation(f"dimension must be at most {MAX_DIMENSION}, got {h.shape[0]}")
    return h


# --- Class structure ---

def _successor_lists(s: np.ndarray) -> List[List[int]]:
    d = s.shape[0]
    return [[q for q in range(d) if q != k and s[k, q]] for k in range(d)]


def _tarjan(successors: List[List[int]]) -> List[List[int]]:
    """Iterative Tarjan; components come out sinks first."""
    d = len(successors)
    index: List[Optional[int]] = [None] * d
    lowlink = [0] * d
    on_stack = [False] * d
    stack: List[int] = []
    components: List[List[int]] = []
    counter = 0

    for root in range(d):
        if index[root] is not None:
            continue
        index[root] = lowlink[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        work = [(root, iter(successors[root]))]
        while work:
            node, children = work[-1]
            descended = False
            for w in children:
                if index[w] is None:
                    index[w] = lowlink[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, iter(successors[w])))
                    descended = True
                    break
                if on_stack[w]:
                    lowlink[node] = min(lowlink[node], index[w])
            if descended:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
            if lowlink[node] == index[node]:
                component = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    component.append(w)
                    if w == node:
                        break
                components.append(sorted(component))
    return components


def strongly_connected_classes(nonzero: Sequence[Sequence[bool]]) -> List[List[int]]:
    """Partition colors into maximal strongly connected classes.

    Edges are k -> q for nonzero(k, q) with k != q. The classes are returned in
    a topological order of the condensation; ties are broken by the smallest
    color index so the order is deterministic.
    """
    s = as_structure_matrix(nonzero)
    successors = _successor_lists(s)
    components = _tarjan(successors)

    owner = {}
    for c, component in enumerate(components):
        for k in component:
            owner[k] = c
    downstream = [set() for _ in components]
    indegree = [0] * len(components)
    for k, succ in enumerate(successors):
        for q in succ:
            a, b = owner[k], owner[q]
            if a != b and b not in downstream[a]:
                downstream[a].add(b)
                indegree[b] += 1

    ready = [(components[c][0], c) for c in range(len(components)) if indegree[c] == 0]
    heapq.heapify(ready)
    ordered: List[List[int]] = []
    while ready:
        _, c = heapq.heappop(ready)
        ordered.append(components[c])
        for b in downstream[c]:
            indegree[b] -= 1
            if indegree[b] == 0:
                heapq.heappush(ready, (components[b][0], b))
    return ordered


def is_irreducible(nonzero: Sequence[Sequence[bool]]) -> bool:
    """True iff the off-diagonal digraph is strongly connected."""
    return len(strongly_connected_classes(nonzero)) == 1


# --- Perron data ---

def _power_iteration(matrix: np.ndarray) -> Tuple[float, np.ndarray]:
    """Dominant eigenpair of a primitive nonnegative matrix, x <- A x normalized to sum 1."""
    m = matrix.shape[0]
    x = np.full(m, 1.0 / m)
    estimate = None
    for _ in range(POWER_MAX_ITER):
        y = matrix @ x
        total = float(np.sum(y))
        x = y / total
        if estimate is not None and abs(total - estimate) < max(POWER_TOL, ROUNDING_FLOOR * abs(total)):
            return _polish(matrix, total, x)
        estimate = total
    logger.warning(f"Power iteration hit {POWER_MAX_ITER} iterations without meeting tolerance {POWER_TOL}")
    return _polish(matrix, estimate, x)


def _polish(matrix: np.ndarray, root: float, x: np.ndarray) -> Tuple[float, np.ndarray]:
    """Inverse iteration with (sigma I - A) for sigma just above the power-iteration root.

    Power iterates converge at the ratio of the two leading eigenvalues, which is
    close to 1 for nearly decoupled classes; the inverse step contracts the other
    eigendirections by roughly offset / gap.
    """
    m = matrix.shape[0]
    sigma = root + POLISH_OFFSET * max(1.0, abs(root))
    factors = linalg.lu_factor(sigma * np.eye(m) - matrix)
    for _ in range(POLISH_STEPS):
        x = linalg.lu_solve(factors, x)
        x = x / np.sum(x)
    return float(np.sum(matrix @ x)), x


def _class_perron(block: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """Perron root with left and right Perron vectors of one class block."""
    m = block.shape[0]
    if m == 1:
        return float(block[0, 0]), np.ones(1), np.ones(1)
    beta = 1.0 + float(np.max(np.abs(np.diag(block))))
    shifted = block + beta * np.eye(m)
    root, right = _power_iteration(shifted)
    _, left = _power_iteration(shifted.T)
    return root - beta, left, right


def perron_data(H: Sequence[Sequence[float]], classes: Sequence[Sequence[int]]) -> SpectralProfile:
    """Perron structure of H over the given class partition.

    Args:
        H: Mean matrix with nonnegative off-diagonal entries.
        classes: Class partition in topological order, as returned by
            strongly_connected_classes.

    Returns:
        SpectralProfile with lambda_h, the v_j / u_j bases and U filled in.
        rho and nu_sec keep their defaults; see second_eigen_structure.

    Raises:
        NonPositiveLambda: If lambda_H <= 0.
        NoPositiveRightEigenvector: If no strictly positive right eigenvector
            exists for lambda_H (a lambda_H-class feeds other colors, or some
            class reaches no lambda_H-class).
    """
    h = as_mean_matrix(H)
    d = h.shape[0]
    classes = [sorted(int(k) for k in c) for c in classes]

    roots, lefts, rights = [], [], []
    for c in classes:
        root, left, right = _class_perron(h[np.ix_(c, c)])
        roots.append(root)
        lefts.append(left)
        rights.append(right)

    lambda_h = max(roots)
    if lambda_h <= 0:
        raise NonPositiveLambda(f"lambda_H = {lambda_h} is not positive")
    tie = CLUSTER_TOL * max(1.0, abs(lambda_h))
    top = [i for i, r in enumerate(roots) if r > lambda_h - tie]
    nu1 = len(top)

    v_basis = np.zeros((nu1, d))
    u_basis = np.zeros((nu1, d))
    for j, i in enumerate(top):
        idx = classes[i]
        rest = [k for k in range(d) if k not in set(idx)]
        if rest and np.any(h[np.ix_(idx, rest)] != 0):
            raise NoPositiveRightEigenvector(
                f"class {idx} attains lambda_H = {lambda_h:.6g} but feeds other colors"
            )
        v_basis[j, idx] = lefts[i] / np.sum(lefts[i])
        u_basis[j, idx] = rights[i]

    # Remaining classes, sinks first: u_C = (lambda_H I - H_CC)^{-1} H_{C,rest} u_rest
    for i in reversed(range(len(classes))):
        if i in top:
            continue
        idx = classes[i]
        rest = [k for k in range(d) if k not in set(idx)]
        if not rest:
            continue
        rhs = h[np.ix_(idx, rest)] @ u_basis[:, rest].T
        system = lambda_h * np.eye(len(idx)) - h[np.ix_(idx, idx)]
        u_basis[:, idx] = linalg.solve(system, rhs).T

    for j in range(nu1):
        u_basis[j] /= float(v_basis[j] @ u_basis[j])

    total = u_basis.sum(axis=0)
    if np.any(total <= POSITIVITY_TOL):
        starved = [int(k) for k in np.nonzero(total <= POSITIVITY_TOL)[0]]
        raise NoPositiveRightEigenvector(f"colors {starved} reach no class attaining lambda_H = {lambda_h:.6g}")

    residual = float(np.max(np.abs(h @ u_basis.T - lambda_h * u_basis.T))) if nu1 else 0.0
    logger.debug(f"Perron data: lambda_H={lambda_h:.12g}, nu1={nu1}, right-eigenvector residual={residual:.3g}")

    return SpectralProfile(
        lambda_h=float(lambda_h),
        classes=classes,
        class_roots=[float(r) for r in roots],
        lambda_classes=top,
        v_basis=v_basis,
        u_basis=u_basis,
        u_projection=u_basis.T @ v_basis,
        irreducible=len(classes) == 1,
    )


# --- Secondary spectrum and rates ---

def _numerical_rank(matrix: np.ndarray, tol: float) -> int:
    singular = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(singular > tol))


def _eigenvalue_index(h: np.ndarray, mu: complex, multiplicity: int) -> int:
    """Largest Jordan block size at mu: smallest k where rank((H - mu I)^k) stops dropping."""
    d = h.shape[0]
    shifted = h - mu * np.eye(d)
    scale = max(1.0, float(np.linalg.norm(h, 2)))
    power = np.eye(d, dtype=shifted.dtype)
    previous = d
    for k in range(1, multiplicity + 2):
        power = power @ shifted
        rank = _numerical_rank(power, RANK_TOL * scale ** k)
        if rank == previous:
            return max(1, k - 1)
        previous = rank
    return multiplicity


def second_eigen_structure(
    H: Sequence[Sequence[float]], lambda_h: float, nu_sec_override: Optional[int] = None
) -> Tuple[Optional[float], int]:
    """Ratio rho of the second largest real part to lambda_H, and nu_sec.

    Eigenvalues with real part above lambda_H - 1e-8 * max(1, lambda_H) form the
    lambda_H cluster; everything else is secondary. rho is None when there is no
    secondary spectrum.
    """
    h = np.asarray(H, dtype=float)
    eigenvalues = linalg.eigvals(h)
    tie = CLUSTER_TOL * max(1.0, abs(lambda_h))
    secondary = eigenvalues[eigenvalues.real <= lambda_h - tie]
    if secondary.size == 0:
        return None, nu_sec_override or 1

    top_real = float(np.max(secondary.real))
    rho = top_real / lambda_h
    leading = secondary[secondary.real >= top_real - CLUSTER_TOL * max(1.0, abs(top_real))]

    clusters: List[List[complex]] = []
    for value in leading:
        for cluster in clusters:
            if abs(value - cluster[0]) <= CLUSTER_TOL * max(1.0, abs(cluster[0])):
                cluster.append(value)
                break
        else:
            clusters.append([value])

    if nu_sec_override is not None:
        return rho, int(nu_sec_override)

    nu_sec = 1
    for cluster in clusters:
        mu = complex(np.mean(cluster))
        if abs(mu.imag) < CLUSTER_TOL:
            mu = complex(mu.real, 0.0)
        nu_sec = max(nu_sec, _eigenvalue_index(h, mu if mu.imag else mu.real, len(cluster)))
    return rho, nu_sec


def rate_bn(rho: Optional[float], nu_sec: int, n: float) -> float:
    """Almost-sure convergence rate b_n of Y_n / n towards lambda_H * S_H.

    Raises:
        DomainError: If n < 16 (log log n must be positive).
    """
    if n < 16:
        raise DomainError(f"rate_bn needs n >= 16, got {n}")
    log_n = math.log(n)
    loglog_n = math.log(log_n)
    if rho is not None and rho >= 1:
        raise DomainError(f"rho must be below 1, got {rho}")
    if rho is not None and math.isclose(rho, 0.5, abs_tol=1e-12):
        return n ** -0.5 * log_n ** (nu_sec - 1) * math.sqrt(loglog_n)
    if rho is not None and rho > 0.5:
        return n ** (rho - 1) * log_n ** (nu_sec - 1)
    return n ** -0.5 * math.sqrt(loglog_n)


# --- Limit set geometry ---

def project_to_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based, exact)."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    cumulative = np.cumsum(u)
    ranks = np.arange(1, y.size + 1)
    support = ranks[u + (1.0 - cumulative) / ranks > 0][-1]
    tau = (1.0 - cumulative[support - 1]) / support
    return np.maximum(y + tau, 0.0)


def dist_to_limit_set(x: Sequence[float], profile: SpectralProfile, scale: float) -> float:
    """Euclidean distance from x to scale * S_H by projected gradient over the simplex weights.

    Use scale = lambda_H for Y_n / n and scale = 1 for proportions.
    """
    if scale <= 0:
        raise DomainError(f"scale must be positive, got {scale}")
    point = np.asarray(x, dtype=float)
    vertices = scale * profile.v_basis
    if profile.nu1 == 1:
        return float(np.linalg.norm(point - vertices[0]))

    gram = vertices @ vertices.T
    target = vertices @ point
    lipschitz = 2.0 * float(np.max(linalg.eigvalsh(gram)))
    step = 1.0 / lipschitz

    def objective(b: np.ndarray) -> float:
        return float(b @ gram @ b - 2.0 * target @ b + point @ point)

    beta = project_to_simplex(linalg.solve(gram, target, assume_a="pos"))
    current = objective(beta)
    for _ in range(PROJECTION_MAX_ITER):
        candidate = project_to_simplex(beta - step * 2.0 * (gram @ beta - target))
        value = objective(candidate)
        beta = candidate
        if abs(current - value) < PROJECTION_TOL:
            break
        current = value
    return float(np.linalg.norm(point - beta @ vertices))


# --- Mean ODE ---

def regression_field(theta: Sequence[float], H: Sequence[Sequence[float]]) -> np.ndarray:
    """h(theta) = theta (I - H / alpha(theta)) with alpha(theta) = sum_k theta_k."""
    t = np.asarray(theta, dtype=float)
    alpha = float(np.sum(t))
    return t - (t @ np.asarray(H, dtype=float)) / alpha


def integrate_mean_ode(
    theta0: Sequence[float],
    H: Sequence[Sequence[float]],
    T: float,
    dt: float = 1e-2,
    samples: int = 101,
) -> OdeTrajectory:
    """Classical fourth-order Runge-Kutta for d theta / dt = -h(theta).

    Args:
        theta0: Strictly positive starting point.
        H: Mean matrix.
        T: Horizon.
        dt: Upper bound on the step; the actual step divides T evenly.
        samples: Number of evenly spaced states returned (first and last included).

    Raises:
        BlowUp: If alpha(theta) leaves [1e-9, 1e9].
    """
    theta = np.array(theta0, dtype=float)
    h = np.asarray(H, dtype=float)
    if np.any(theta <= 0):
        raise PreconditionViolation("theta0 must be strictly positive")
    if dt > 1e-2 or dt <= 0:
        raise PreconditionViolation(f"dt must lie in (0, 1e-2], got {dt}")
    if T <= 0:
        raise PreconditionViolation(f"T must be positive, got {T}")

    steps = max(1, int(math.ceil(T / dt - 1e-9)))
    step = T / steps
    record_at = set(np.linspace(0, steps, max(2, samples)).round().astype(int).tolist())

    def velocity(state: np.ndarray) -> np.ndarray:
        alpha = float(np.sum(state))
        if not ALPHA_MIN <= alpha <= ALPHA_MAX:
            raise BlowUp(f"alpha(theta) = {alpha:.3g} left [{ALPHA_MIN}, {ALPHA_MAX}]")
        return (state @ h) / alpha - state

    times, states = [], []
    for i in range(steps + 1):
        if i in record_at:
            times.append(i * step)
            states.append(theta.copy())
        if i == steps:
            break
        k1 = velocity(theta)
        k2 = velocity(theta + 0.5 * step * k1)
        k3 = velocity(theta + 0.5 * step * k2)
        k4 = velocity(theta + step * k3)
        theta = theta + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    return OdeTrajectory(times=np.array(times), states=np.array(states))


# --- Combined analysis ---

def analyze(
    H: Sequence[Sequence[float]],
    structure: Optional[Sequence[Sequence[bool]]] = None,
    nu_sec_override: Optional[int] = None,
) -> SpectralProfile:
    """Full spectral profile of a mean matrix.

    Args:
        H: Mean matrix.
        structure: Optional nonzero pattern of the replacement matrices. Defaults
            to the nonzero pattern of H.
        nu_sec_override: Replaces the numerically estimated nu_sec.
    """
    h = as_mean_matrix(H)
    nonzero = as_structure_matrix(structure) if structure is not None else (h != 0)
    if nonzero.shape != h.shape:
        raise PreconditionViolation(f"structure shape {nonzero.shape} does not match H shape {h.shape}")
    classes = strongly_connected_classes(nonzero)
    profile = perron_data(h, classes)
    rho, nu_sec = second_eigen_structure(h, profile.lambda_h, nu_sec_override)
    logger.debug(f"Secondary spectrum: rho={rho}, nu_sec={nu_sec}")
    return replace(profile, rho=rho, nu_sec=nu_sec)


def profile_to_model(profile: SpectralProfile) -> SpectralProfileModel:
    """JSON-facing view of a profile."""
    return SpectralProfileModel(
        lambda_h=profile.lambda_h,
        classes=[list(c) for c in profile.classes],
        nu1=profile.nu1,
        v_basis=profile.v_basis.tolist(),
        u_basis=profile.u_basis.tolist(),
        u_projection=profile.u_projection.tolist(),
        rho=profile.rho,
        nu_sec=profile.nu_sec,
        irreducible=profile.irreducible,
    )


def profile_from_model(model: SpectralProfileModel) -> SpectralProfile:
    """Rebuilds a profile from its JSON view (class roots are not part of the view)."""
    v_basis = np.array(model.v_basis, dtype=float)
    lambda_classes = []
    for row in v_basis:
        support = set(np.nonzero(row > 0)[0].tolist())
        lambda_classes.extend(i for i, c in enumerate(model.classes) if set(c) == support)
    return SpectralProfile(
        lambda_h=model.lambda_h,
        classes=[list(c) for c in model.classes],
        class_roots=[],
        lambda_classes=lambda_classes,
        v_basis=v_basis,
        u_basis=np.array(model.u_basis, dtype=float),
        u_projection=np.array(model.u_projection, dtype=float),
        rho=model.rho,
        nu_sec=model.nu_sec,
        irreducible=model.irreducible,
    )
