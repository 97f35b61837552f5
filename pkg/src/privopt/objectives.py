"""Convex local objectives, box feasible sets with Euclidean projection, and the
global sum objective with a centralized optimum oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .polynomials import SeparablePolynomial, as_coeff_matrix


class DimensionMismatchError(ValueError):
    pass


class ConvexityError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Box:
    """Axis-aligned feasible set; nonempty, convex and compact."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionMismatchError("lower/upper bounds must be 1-D and equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("box bounds must be finite (compactness)")
        if np.any(lower > upper):
            raise ValueError("box must be nonempty: lower <= upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def project(self, z) -> np.ndarray:
        """Componentwise clamp: the unique Euclidean-nearest feasible point."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise DimensionMismatchError(f"point dimension {z.shape[-1]} != box dimension {self.dim}")
        return np.clip(z, self.lower, self.upper)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def grid(self, points_per_dim: int) -> np.ndarray:
        """Regular grid including the corners, flattened to (m, D).

        For dimensions above 3 a full mesh is replaced by corners plus a
        seeded uniform sample of comparable size.
        """
        if self.dim <= 3:
            axes = [np.linspace(self.lower[d], self.upper[d], points_per_dim) for d in range(self.dim)]
            mesh = np.meshgrid(*axes, indexing="ij")
            return np.stack([m.ravel() for m in mesh], axis=-1)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(points_per_dim)))
        count = points_per_dim ** 3
        sample = rng.uniform(self.lower, self.upper, size=(count, self.dim))
        return np.concatenate([self.corners(), sample], axis=0)

    def corners(self) -> np.ndarray:
        if self.dim > 16:
            raise ValueError("corner enumeration limited to 16 dimensions")
        out = np.zeros((2 ** self.dim, self.dim))
        for i in range(2 ** self.dim):
            for d in range(self.dim):
                out[i, d] = self.upper[d] if (i >> d) & 1 else self.lower[d]
        return out

    def to_spec(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_spec(cls, spec: dict) -> "Box":
        return cls(lower=spec["lower"], upper=spec["upper"])


class Objective:
    """Base class: differentiable convex function on a box."""

    dim: int = 1

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def curvature_norm(self, x) -> np.ndarray:
        """Operator norm of the Hessian at points x (batched)."""
        raise NotImplementedError

    def check_dim(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x[None]
        if x.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"point dimension {x.shape[-1]} != objective dimension {self.dim}"
            )
        return x

    def ensure_convex_on(self, box: Box) -> None:
        raise NotImplementedError

    def gradient_bound(self, box: Box) -> float:
        """Upper bound for sup-norm of the gradient on the box (grid fallback)."""
        return float(np.max(np.linalg.norm(self.gradient(_constant_grids(box)[1]), axis=-1)))

    def smoothness_bound(self, box: Box) -> float:
        """Upper bound for the gradient Lipschitz constant on the box (grid fallback)."""
        return float(np.max(self.curvature_norm(_constant_grids(box)[1])))

    def to_spec(self) -> dict:
        raise NotImplementedError


def _constant_grids(box: Box) -> tuple[np.ndarray, np.ndarray]:
    """Coarse grid and a 10x finer certification grid over the box."""
    base = {1: 101, 2: 21, 3: 9}.get(box.dim, 9)
    return box.grid(base), box.grid(10 * base)


class PolynomialObjective(Objective):
    """Separable polynomial objective with optional convexity enforcement.

    ``enforce_convex=False`` is used for obfuscated objectives, which may lose
    convexity while their network sum stays convex.
    """

    def __init__(self, coeffs, enforce_convex: bool = True):
        self.poly = SeparablePolynomial(as_coeff_matrix(coeffs))
        self.dim = self.poly.dim
        self.enforce_convex = enforce_convex

    def value(self, x):
        return self.poly.value(self.check_dim(x))

    def gradient(self, x):
        return self.poly.gradient(self.check_dim(x))

    def curvature_norm(self, x):
        return np.max(np.abs(self.poly.curvature(self.check_dim(x))), axis=-1)

    def curvature_floor(self, box: Box) -> float:
        return self.poly.curvature_floor(box.lower, box.upper)

    def ensure_convex_on(self, box: Box) -> None:
        if not self.enforce_convex:
            return
        floor = self.curvature_floor(box)
        if floor < -1e-12:
            raise ConvexityError(
                f"polynomial objective is non-convex on the feasible set (second derivative reaches {floor:.3e})"
            )

    def gradient_bound(self, box: Box) -> float:
        exact = self.poly.gradient_sup_norm(box.lower, box.upper)
        return max(exact, super().gradient_bound(box))

    def smoothness_bound(self, box: Box) -> float:
        exact = self.poly.curvature_sup(box.lower, box.upper)
        return max(exact, super().smoothness_bound(box))

    def to_spec(self) -> dict:
        return {"kind": "polynomial", "coeffs": self.poly.coeffs.tolist(),
                "enforce_convex": self.enforce_convex}


class QuadraticObjective(Objective):
    """f(x) = 0.5 x'Qx + b'x + c with symmetric positive semidefinite Q."""

    def __init__(self, matrix, vector, scalar: float = 0.0):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.vector = np.atleast_1d(np.asarray(vector, dtype=float))
        self.scalar = float(scalar)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionMismatchError("quadratic matrix must be square")
        if self.vector.shape[0] != self.matrix.shape[0]:
            raise DimensionMismatchError("quadratic vector length must match the matrix")
        if np.max(np.abs(self.matrix - self.matrix.T)) > 1e-12:
            raise ValueError("quadratic matrix must be symmetric")
        self.dim = self.matrix.shape[0]

    def value(self, x):
        x = self.check_dim(x)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.matrix, x) + x @ self.vector + self.scalar

    def gradient(self, x):
        x = self.check_dim(x)
        return x @ self.matrix.T + self.vector

    def curvature_norm(self, x):
        x = self.check_dim(x)
        norm = float(np.linalg.norm(self.matrix, 2))
        return np.full(x.shape[:-1], norm)

    def ensure_convex_on(self, box: Box) -> None:
        eigs = np.linalg.eigvalsh(self.matrix)
        scale = max(1.0, float(np.max(np.abs(eigs)))) if eigs.size else 1.0
        if eigs.size and eigs.min() < -1e-10 * scale:
            raise ConvexityError(f"quadratic matrix is not positive semidefinite (min eigenvalue {eigs.min():.3e})")

    def gradient_bound(self, box: Box) -> float:
        # ||Qx + b|| is convex, so its max over the box sits at a corner.
        corners = box.corners()
        exact = float(np.max(np.linalg.norm(self.gradient(corners), axis=-1)))
        return max(exact, super().gradient_bound(box))

    def smoothness_bound(self, box: Box) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def to_spec(self) -> dict:
        return {"kind": "quadratic", "matrix": self.matrix.tolist(),
                "vector": self.vector.tolist(), "scalar": self.scalar}


class LogisticObjective(Objective):
    """Logistic loss over an embedded seeded synthetic dataset with a small
    ridge term, so the machine-learning use case runs without external data."""

    def __init__(self, seed: int, dim: int = 2, samples: int = 40, ridge: float = 0.01):
        self.seed = int(seed)
        self.dim = int(dim)
        self.samples = int(samples)
        self.ridge = float(ridge)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=(7340191, self.seed))))
        self.features = rng.normal(0.0, 1.0, size=(self.samples, self.dim))
        separator = rng.normal(0.0, 1.0, size=self.dim)
        margins = self.features @ separator + 0.3 * rng.normal(size=self.samples)
        self.labels = np.where(margins >= 0.0, 1.0, -1.0)

    def _margins(self, x):
        x = self.check_dim(x)
        return np.tensordot(x, self.features, axes=([-1], [1])), x  # (..., samples)

    def value(self, x):
        m, x = self._margins(x)
        loss = np.mean(np.logaddexp(0.0, -self.labels * m), axis=-1)
        return loss + 0.5 * self.ridge * np.sum(x * x, axis=-1)

    def gradient(self, x):
        m, x = self._margins(x)
        sig = 1.0 / (1.0 + np.exp(self.labels * m))  # sigma(-y m)
        grad = -np.tensordot(sig * self.labels, self.features, axes=([-1], [0])) / self.samples
        if grad.shape != x.shape:
            grad = -np.einsum("...s,sd->...d", sig * self.labels, self.features) / self.samples
        return grad + self.ridge * x

    def curvature_norm(self, x):
        m, x = self._margins(x)
        p = 1.0 / (1.0 + np.exp(-m))
        w = p * (1.0 - p) / self.samples  # (..., samples)
        flat_w = w.reshape(-1, self.samples)
        out = np.empty(flat_w.shape[0])
        for i, wi in enumerate(flat_w):
            h = (self.features * wi[:, None]).T @ self.features
            out[i] = np.linalg.norm(h + self.ridge * np.eye(self.dim), 2)
        return out.reshape(x.shape[:-1])

    def ensure_convex_on(self, box: Box) -> None:
        return  # sum of log-convex losses plus a ridge term

    def to_spec(self) -> dict:
        return {"kind": "logistic", "seed": self.seed, "dim": self.dim,
                "samples": self.samples, "ridge": self.ridge}


def objective_from_spec(spec: dict) -> Objective:
    kind = spec.get("kind")
    if kind == "polynomial":
        return PolynomialObjective(spec["coeffs"], enforce_convex=spec.get("enforce_convex", True))
    if kind == "quadratic":
        return QuadraticObjective(spec["matrix"], spec["vector"], spec.get("scalar", 0.0))
    if kind == "logistic":
        return LogisticObjective(spec["seed"], dim=spec.get("dim", 2),
                                 samples=spec.get("samples", 40), ridge=spec.get("ridge", 0.01))
    raise ValueError(f"unknown objective kind: {kind!r}")


@dataclass
class GlobalProblem:
    """Local objectives plus the shared feasible set."""

    objectives: list
    feasible: Box
    validate_convexity: bool = True
    _constants: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        dims = {obj.dim for obj in self.objectives}
        if len(dims) != 1:
            raise DimensionMismatchError(f"objectives disagree on dimension: {sorted(dims)}")
        if dims != {self.feasible.dim}:
            raise DimensionMismatchError("objective dimension must match the feasible set")
        if self.validate_convexity:
            for obj in self.objectives:
                obj.ensure_convex_on(self.feasible)

    @property
    def n(self) -> int:
        return len(self.objectives)

    @property
    def dim(self) -> int:
        return self.feasible.dim

    def total_value(self, x) -> np.ndarray:
        return sum(obj.value(x) for obj in self.objectives)

    def total_gradient(self, x) -> np.ndarray:
        return sum(obj.gradient(x) for obj in self.objectives)

    def agent_gradients(self, points: np.ndarray) -> np.ndarray:
        """Row j is the gradient of objective j at points[j]; points (n, D)."""
        return np.stack([obj.gradient(points[j]) for j, obj in enumerate(self.objectives)])

    def constants(self) -> tuple[float, float]:
        """Per-agent gradient bound and Lipschitz constant (max over agents)."""
        if "LN" not in self._constants:
            pairs = [estimate_constants(obj, self.feasible) for obj in self.objectives]
            self._constants["LN"] = (max(p[0] for p in pairs), max(p[1] for p in pairs))
        return self._constants["LN"]

    def to_spec(self) -> dict:
        return {"objectives": [obj.to_spec() for obj in self.objectives],
                "feasible": self.feasible.to_spec()}

    @classmethod
    def from_spec(cls, spec: dict, validate_convexity: bool = True) -> "GlobalProblem":
        return cls(objectives=[objective_from_spec(s) for s in spec["objectives"]],
                   feasible=Box.from_spec(spec["feasible"]),
                   validate_convexity=validate_convexity)


def evaluate(obj: Objective, x) -> float:
    """Objective value at a single point."""
    return float(obj.value(x))


def gradient(obj: Objective, x) -> np.ndarray:
    """Objective gradient at a single point."""
    return obj.gradient(x)


def project(box: Box, z) -> np.ndarray:
    """Euclidean projection onto the box."""
    return box.project(z)


def estimate_constants(obj: Objective, box: Box) -> tuple[float, float]:
    """Gradient sup-norm bound and gradient Lipschitz bound on the box,
    certified against a 10x finer grid (exact for polynomials/quadratics)."""
    coarse, fine = _constant_grids(box)
    grad_candidates = [
        float(np.max(np.linalg.norm(obj.gradient(coarse), axis=-1))),
        float(np.max(np.linalg.norm(obj.gradient(fine), axis=-1))),
    ]
    smooth_candidates = [
        float(np.max(obj.curvature_norm(coarse))),
        float(np.max(obj.curvature_norm(fine))),
    ]
    grad_candidates.append(obj.gradient_bound(box))
    smooth_candidates.append(obj.smoothness_bound(box))
    return max(grad_candidates), max(smooth_candidates)


def solve_centralized(problem: GlobalProblem, tolerance: float = 1e-8,
                      max_rounds: int = 500_000) -> tuple[np.ndarray, float]:
    """Optimum oracle: projected gradient descent on the sum objective with
    diminishing steps until the gradient-mapping norm drops below tolerance.
    One-dimensional problems are additionally refined by grid plus ternary
    search, so the returned value is a certified upper bound on the infimum.
    """
    box = problem.feasible
    smooth_total = sum(estimate_constants(obj, box)[1] for obj in problem.objectives)
    base = 1.0 / max(smooth_total, 1e-12)
    x = box.midpoint()
    converged = False
    for k in range(1, max_rounds + 1):
        g = problem.total_gradient(x)
        probe = box.project(x - base * g)
        mapping_norm = float(np.linalg.norm(x - probe)) / base
        if mapping_norm <= tolerance:
            converged = True
            break
        step = base * min(1.0, 32.0 / np.sqrt(k))
        x = box.project(x - step * g)
    if not converged:
        raise ConvergenceError(
            f"centralized oracle did not reach gradient-mapping tolerance {tolerance} in {max_rounds} rounds"
        )
    best_x = x
    best_f = float(problem.total_value(x))
    if problem.dim == 1:
        lo, hi = float(box.lower[0]), float(box.upper[0])
        grid = np.linspace(lo, hi, 4097)
        vals = problem.total_value(grid[:, None])
        idx = int(np.argmin(vals))
        a = grid[max(idx - 1, 0)]
        b = grid[min(idx + 1, grid.size - 1)]
        for _ in range(200):
            m1 = a + (b - a) / 3.0
            m2 = b - (b - a) / 3.0
            if problem.total_value(np.array([m1])) <= problem.total_value(np.array([m2])):
                b = m2
            else:
                a = m1
            if b - a <= 1e-14 * max(1.0, abs(a), abs(b)):
                break
        mid = np.array([0.5 * (a + b)])
        candidates = [(float(problem.total_value(mid)), mid),
                      (float(vals[idx]), grid[idx:idx + 1]),
                      (best_f, best_x)]
        best_f, best_x = min(candidates, key=lambda t: t[0])
    return np.asarray(best_x, dtype=float), float(best_f)
