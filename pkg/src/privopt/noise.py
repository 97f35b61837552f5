"""Structured-randomization generators: pairwise network-balanced shares,
locally balanced per-neighbor perturbations, and polynomial noise functions.

All draws are reproducible: streams are split per (agent, round, purpose) from
a master seed, so changing one agent's draw does not shift the others and runs
with different noise magnitudes stay seed-paired.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import FusionMatrix, Topology
from .polynomials import SeparablePolynomial

_PURPOSES = {"nb_share": 1, "lb_raw": 2, "fs_coeff": 3, "alt_extra": 4}

# Noise-polynomial coefficients are snapped to this dyadic grid so that
# obfuscated coefficient sums stay exactly representable in float64; the
# privacy checker then inverts them with zero residual.
COEFF_GRID = 2.0 ** -26


class MissingShareError(ValueError):
    pass


class FsObjectiveError(TypeError):
    pass


class RandomStreams:
    """Independent generator per (purpose, agent, round) under one master seed."""

    def __init__(self, master_seed: int):
        if master_seed < 0:
            raise ValueError("master seed must be non-negative")
        self.master_seed = int(master_seed)

    def generator(self, purpose: str, agent: int, round_index: int = 0) -> np.random.Generator:
        key = np.random.SeedSequence(
            entropy=(self.master_seed, _PURPOSES[purpose], int(agent), int(round_index))
        )
        return np.random.Generator(np.random.Philox(key))


def _uniform_ball(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    """Uniform draws from the Euclidean ball of the given radius."""
    direction = rng.standard_normal((count, dim))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = rng.random((count, 1)) ** (1.0 / dim)
    return direction / norms * radii * radius


@dataclass
class ShareTable:
    """Pairwise shares for one round; entry [j, i] is the vector agent j sent to i."""

    round_index: int
    delta: float
    table: np.ndarray  # (n, n, D); zero outside directed edges
    mask: np.ndarray   # (n, n) bool, True on directed edges (no self entries)

    @property
    def n(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[2]

    @classmethod
    def from_pairs(cls, topology: Topology, dim: int, pairs: dict,
                   round_index: int = 1, delta: float = 0.0) -> "ShareTable":
        """Build a table from an explicit {(sender, receiver): vector} map.
        Every directed edge must be present."""
        n = topology.n
        mask = topology.adjacency()
        table = np.zeros((n, n, dim))
        for j in range(n):
            for i in range(n):
                if not mask[j, i]:
                    continue
                if (j, i) not in pairs:
                    raise MissingShareError(f"missing share for directed edge ({j}, {i})")
                table[j, i] = np.asarray(pairs[(j, i)], dtype=float)
        return cls(round_index=round_index, delta=delta, table=table, mask=mask)


def draw_nb_shares(topology: Topology, round_index: int, delta: float,
                   streams: RandomStreams, dim: int) -> ShareTable:
    """Shares drawn uniformly from the ball of radius delta/(2n); the first
    round and delta == 0 give all-zero shares."""
    if round_index < 1:
        raise ValueError("rounds are 1-indexed")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    n = topology.n
    mask = topology.adjacency()
    table = np.zeros((n, n, dim))
    if round_index > 1 and delta > 0.0:
        radius = delta / (2.0 * n)
        for j in range(n):
            receivers = [i for i in topology.neighbors(j) if i != j]
            if not receivers:
                continue
            rng = streams.generator("nb_share", j, round_index)
            table[j, receivers] = _uniform_ball(rng, len(receivers), dim, radius)
    return ShareTable(round_index=round_index, delta=delta, table=table, mask=mask)


def nb_perturbation(shares: ShareTable, topology: Topology) -> np.ndarray:
    """Antisymmetric aggregation: received shares minus sent shares, per agent.
    The network sum cancels pairwise and is zero up to rounding."""
    if shares.n != topology.n:
        raise MissingShareError("share table size does not match the topology")
    expected = topology.adjacency()
    if not np.array_equal(shares.mask, expected):
        raise MissingShareError("share table support does not match the topology")
    received = shares.table.transpose(1, 0, 2)
    return received.sum(axis=1) - shares.table.sum(axis=1)


def draw_lb_perturbation(topology: Topology, weights: FusionMatrix, delta: float,
                         round_index: int, streams: RandomStreams, dim: int) -> np.ndarray:
    """Per-neighbor perturbations d[j, i] that cancel under the fusion weights:
    sum_i B[i, j] d[j, i] = 0, with every norm at most delta.

    Raw draws are uniform on [-1, 1]^D per non-self neighbor, recentred by the
    weighted mean so the constraint holds exactly, then the family is shrunk by
    min(1, delta / max norm). The self entry d[j, j] is zero.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    n = topology.n
    b = weights.entries
    out = np.zeros((n, n, dim))
    if delta == 0.0:
        return out
    for j in range(n):
        others = [i for i in topology.neighbors(j) if i != j]
        if not others:
            raise ValueError(f"agent {j} has no non-self neighbor; locally balanced noise undefined")
        rng = streams.generator("lb_raw", j, round_index)
        raw = rng.uniform(-1.0, 1.0, size=(len(others), dim))
        wts = b[others, j]
        centre = (wts @ raw) / wts.sum()
        dev = raw - centre
        max_norm = float(np.max(np.linalg.norm(dev, axis=1)))
        factor = 1.0 if max_norm == 0.0 else min(1.0, delta / max_norm)
        out[j, others] = dev * factor
    return out


def draw_noise_functions(topology: Topology, delta_coeff: float, d_max: int,
                         streams: RandomStreams, dim: int = 1) -> dict:
    """One noise polynomial per directed edge, with coefficients uniform in
    [-delta_coeff, delta_coeff] snapped to a dyadic grid, degree at most d_max."""
    if d_max < 0:
        raise ValueError("d_max must be non-negative")
    if delta_coeff < 0:
        raise ValueError("delta_coeff must be non-negative")
    out = {}
    for j in range(topology.n):
        receivers = [i for i in topology.neighbors(j) if i != j]
        rng = streams.generator("fs_coeff", j, 0)
        for i in receivers:
            if delta_coeff == 0.0:
                coeffs = np.zeros((dim, d_max + 1))
            else:
                raw = rng.uniform(-delta_coeff, delta_coeff, size=(dim, d_max + 1))
                coeffs = np.clip(np.round(raw / COEFF_GRID) * COEFF_GRID,
                                 -delta_coeff, delta_coeff)
            out[(j, i)] = SeparablePolynomial(coeffs)
    return out


def noise_offsets(noise_functions: dict, topology: Topology, width: int) -> list:
    """Per-agent noise polynomial: received functions minus sent functions.
    Their network sum is identically zero."""
    offsets = []
    for j in range(topology.n):
        acc = SeparablePolynomial.zero(next(iter(noise_functions.values())).dim
                                       if noise_functions else 1, width)
        for i in topology.neighbors(j):
            if i == j:
                continue
            acc = acc + noise_functions[(i, j)].padded(width)
        for i in topology.neighbors(j):
            if i == j:
                continue
            acc = acc - noise_functions[(j, i)].padded(width)
        offsets.append(acc)
    return offsets


def obfuscate(objectives: list, noise_functions: dict, topology: Topology) -> list:
    """Obfuscated objectives: each local polynomial plus its zero-sum noise
    offset, padded to a common width. Requires a polynomial objective family."""
    from .objectives import PolynomialObjective

    if len(objectives) != topology.n:
        raise ValueError("one objective per agent is required")
    for obj in objectives:
        if not isinstance(obj, PolynomialObjective):
            raise FsObjectiveError("function sharing requires polynomial local objectives")
    width = max([obj.poly.width for obj in objectives]
                + [p.width for p in noise_functions.values()] + [1])
    offsets = noise_offsets(noise_functions, topology, width) if noise_functions else \
        [SeparablePolynomial.zero(objectives[0].dim, width) for _ in objectives]
    obfuscated = []
    for obj, off in zip(objectives, offsets):
        coeffs = obj.poly.padded(width).coeffs + off.coeffs
        obfuscated.append(PolynomialObjective(coeffs, enforce_convex=False))
    return obfuscated


def noise_gradient_bounds(noise_functions: dict, lower, upper) -> tuple[float, float]:
    """Largest gradient sup-norm and curvature sup over all per-agent noise
    offsets is bounded by summing per-function bounds; used for the obfuscated
    gradient constants."""
    grad = 0.0
    curv = 0.0
    by_agent: dict[int, list] = {}
    for (j, i), poly in noise_functions.items():
        by_agent.setdefault(j, []).append(poly)
        by_agent.setdefault(i, []).append(poly)
    for polys in by_agent.values():
        grad = max(grad, sum(p.gradient_sup_norm(lower, upper) for p in polys))
        curv = max(curv, sum(p.curvature_sup(lower, upper) for p in polys))
    return grad, curv
