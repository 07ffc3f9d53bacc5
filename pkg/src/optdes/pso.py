"""Particle swarm search over vectorised exact designs.

Two communication topologies are supported:

* ``global`` - Basic PSO; every particle is pulled toward the swarm best.
* ``local``  - SPSO2007-style random informers; each particle informs itself
  plus ``expected_links`` randomly drawn particles, links are redrawn after
  every iteration in which the swarm best fails to improve, and the social
  pull is skipped when a particle's neighbourhood best is its own memory.

Updates are synchronous: all velocities are computed from the same snapshot,
then all particles move and are scored in one batch.
"""

from __future__ import annotations

import enum
import math
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import kernels
from .criteria import CriterionKind, CriterionValue, moment_matrix
from .model import num_params

RNG_ALGORITHM = "numpy.PCG64"

DEFAULT_OMEGA = 1.0 / (2.0 * math.log(2.0))
DEFAULT_C = 0.5 + math.log(2.0)
DEFAULT_TOL = math.sqrt(np.finfo(float).eps)
DEFAULT_VMAX = 2.0
LOWER, UPPER = -1.0, 1.0


class TopologyKind(str, enum.Enum):
    GLOBAL = "global"
    LOCAL = "local"

    @classmethod
    def parse(cls, value) -> "TopologyKind":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        aliases = {"basic": "global", "gbest": "global", "random_local": "local", "spso2007": "local", "lbest": "local"}
        try:
            return cls(aliases.get(v, v))
        except ValueError:
            raise ValueError(f"unknown topology {value!r}; expected 'global' or 'local'") from None


@dataclass(frozen=True)
class Topology:
    tag: TopologyKind = TopologyKind.LOCAL
    expected_links: int = 3

    def __post_init__(self):
        object.__setattr__(self, "tag", TopologyKind.parse(self.tag))
        if self.expected_links < 1:
            raise ValueError("expected_links must be >= 1")


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 50
    omega: float = DEFAULT_OMEGA
    c1: float = DEFAULT_C
    c2: float = DEFAULT_C
    v_max: float | np.ndarray = DEFAULT_VMAX
    topology: Topology = field(default_factory=Topology)
    max_iterations: int = 5000
    tol: float = DEFAULT_TOL
    stagnation_limit: int = 100
    # improvement for the tolerance stop is measured over this many iterations;
    # 1 stops on the first tiny improvement
    tol_window: int = 100
    seed: int = 0
    # skip the social pull when lbest is the particle's own pbest (local only)
    drop_self_social: bool = True

    def __post_init__(self):
        if not isinstance(self.topology, Topology):
            object.__setattr__(self, "topology", Topology(self.topology))

    def validate(self, dim: int | None = None) -> None:
        if int(self.swarm_size) != self.swarm_size or self.swarm_size < 1:
            raise ValueError(f"swarm_size must be a positive integer, got {self.swarm_size}")
        if not 0.0 < self.omega < 1.0:
            raise ValueError(f"omega must lie in (0, 1), got {self.omega}")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("c1 and c2 must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.stagnation_limit < 1:
            raise ValueError("stagnation_limit must be >= 1")
        if self.tol_window < 1:
            raise ValueError("tol_window must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.topology.tag is TopologyKind.LOCAL and self.topology.expected_links > self.swarm_size:
            raise ValueError("expected_links cannot exceed the swarm size")
        vmax = np.asarray(self.v_max, dtype=float)
        if np.any(~(vmax > 0)):
            raise ValueError("v_max must be positive")
        if dim is not None and vmax.ndim and vmax.shape != (dim,):
            raise ValueError(f"v_max must be a scalar or have length {dim}")


# -- design <-> particle coordinates -------------------------------------------


def vectorize(X) -> np.ndarray:
    """Column-major flattening: entry (i, k) lands in slot ``k*N + i``."""
    return np.asarray(X, dtype=float).ravel(order="F")


def devectorize(v, N: int, K: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != N * K:
        raise ValueError(f"vector length {v.shape[-1]} does not match N*K = {N * K}")
    return np.swapaxes(v.reshape(v.shape[:-1] + (K, N)), -1, -2)


# -- objectives ----------------------------------------------------------------


@dataclass(frozen=True)
class Objective:
    """Batch objective: ``fn(designs[S, N, K]) -> scores[S]``, lower is better."""

    kind: CriterionKind
    K: int
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, designs: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(designs), dtype=float)


def make_objective(kind, K: int) -> Objective:
    kind = CriterionKind.parse(kind)
    if kind is CriterionKind.D:
        return Objective(kind, K, kernels.d_scores)
    W = moment_matrix(K)
    return Objective(kind, K, lambda designs: kernels.iv_scores(designs, W))


# -- swarm pieces --------------------------------------------------------------


@dataclass
class Swarm:
    position: np.ndarray  # (S, D)
    velocity: np.ndarray  # (S, D)
    fitness: np.ndarray  # (S,)
    pbest: np.ndarray  # (S, D)
    pbest_fitness: np.ndarray  # (S,)
    gbest: np.ndarray  # (D,)
    gbest_fitness: float
    # informs[i, j] is True when particle j is an informer of particle i
    informs: np.ndarray | None = None


def regenerate_links(S: int, expected_links: int, rng: np.random.Generator) -> np.ndarray:
    """Fresh random informer graph.

    Every particle picks ``expected_links`` targets uniformly with
    replacement and informs them; everybody also informs itself.
    """
    targets = rng.integers(0, S, size=(S, expected_links))
    informs = np.eye(S, dtype=bool)
    informs[targets, np.repeat(np.arange(S), expected_links).reshape(S, expected_links)] = True
    return informs


def clip_velocity(v: np.ndarray, v_max) -> np.ndarray:
    v_max = np.asarray(v_max, dtype=float)
    return np.clip(v, -v_max, v_max)


def velocity_update(x, v, pbest, attractor, omega, c1, c2, v_max, u_cog, u_soc, drop_social=False):
    """One velocity step; works on a single particle or a stack of them.

    ``drop_social`` (bool or per-particle mask) removes the social pull.
    """
    x, v, pbest, attractor = (np.asarray(a, dtype=float) for a in (x, v, pbest, attractor))
    social = c2 * u_soc * (attractor - x)
    drop = np.asarray(drop_social, dtype=bool)
    if drop.ndim:
        drop = drop[..., None]
    social = np.where(drop, 0.0, social)
    return clip_velocity(omega * v + c1 * u_cog * (pbest - x) + social, v_max)


def confine(position, velocity, lower=LOWER, upper=UPPER):
    """Absorbing wall: clamp escaped coordinates and zero their velocity."""
    position = np.asarray(position, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    out = (position < lower) | (position > upper)
    return np.clip(position, lower, upper), np.where(out, 0.0, velocity)


def _argmin_first(values: np.ndarray) -> int:
    # np.argmin returns the first occurrence, which is the tie rule we want
    return int(np.argmin(values))


def init_swarm(config: PsoConfig, dim: int, rng: np.random.Generator, objective=None, N=None, K=None) -> Swarm:
    """Uniform positions, half-gap velocities, pbest = start, gbest = best start.

    When ``objective`` is omitted the fitness arrays are left at ``+inf``.
    """
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    S = config.swarm_size
    u = rng.random((S, 2, dim))
    x = LOWER + (UPPER - LOWER) * u[:, 0]
    lo, hi = (LOWER - x) / 2.0, (UPPER - x) / 2.0
    v = clip_velocity(lo + (hi - lo) * u[:, 1], config.v_max)
    if objective is None:
        f = np.full(S, np.inf)
    else:
        f = objective(devectorize(x, N, K))
    g = _argmin_first(f)
    informs = None
    if config.topology.tag is TopologyKind.LOCAL:
        informs = regenerate_links(S, config.topology.expected_links, rng)
    return Swarm(
        position=x,
        velocity=v,
        fitness=f.copy(),
        pbest=x.copy(),
        pbest_fitness=f.copy(),
        gbest=x[g].copy(),
        gbest_fitness=float(f[g]),
        informs=informs,
    )


def local_best_index(informs: np.ndarray, pbest_fitness: np.ndarray) -> np.ndarray:
    """Index of the best informer of each particle (lowest index on ties)."""
    masked = np.where(informs, pbest_fitness[None, :], np.inf)
    best = np.argmin(masked, axis=1)
    # all informers singular: fall back to the first informer, not particle 0
    hopeless = np.isinf(masked[np.arange(len(best)), best])
    best[hopeless] = np.argmax(informs[hopeless], axis=1)
    return best


# -- the search ----------------------------------------------------------------


class StopReason(str, enum.Enum):
    CONVERGED_TOLERANCE = "converged_tolerance"
    STAGNATED = "stagnated"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class RunResult:
    best_design: np.ndarray
    best_fitness: CriterionValue
    iterations: int
    function_evaluations: int
    wall_time_seconds: float
    stop_reason: StopReason
    seed: int
    swarm_size: int
    topology: TopologyKind

    @property
    def N(self) -> int:
        return self.best_design.shape[0]

    @property
    def K(self) -> int:
        return self.best_design.shape[1]


def run(objective, N: int, K: int, config: PsoConfig, *, callback=None) -> RunResult:
    """Run one swarm search and return the best design found.

    ``objective`` is an :class:`Objective` or a criterion name (``"D"``/``"I"``).
    ``callback(iteration, swarm)`` is invoked after initialisation and after
    every iteration; it must not modify the swarm.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"number of points must be >= 1, got {N}")
    num_params(K)
    dim = N * K
    config.validate(dim)
    if not isinstance(objective, Objective):
        objective = make_objective(objective, K)
    elif objective.K != K:
        raise ValueError(f"objective is for K={objective.K}, search has K={K}")

    t0 = time.perf_counter()
    rng = np.random.default_rng(int(config.seed))
    S = config.swarm_size
    local = config.topology.tag is TopologyKind.LOCAL
    swarm = init_swarm(config, dim, rng, objective, N, K)
    if callback is not None:
        callback(0, swarm)

    iterations = 0
    stagnant = 0
    history = deque([swarm.gbest_fitness], maxlen=config.tol_window + 1)
    reason = StopReason.MAX_ITERATIONS
    while iterations < config.max_iterations:
        if local:
            lb = local_best_index(swarm.informs, swarm.pbest_fitness)
            attractor = swarm.pbest[lb]
            drop = np.all(attractor == swarm.pbest, axis=1) if config.drop_self_social else False
        else:
            attractor = swarm.gbest[None, :]
            drop = False
        u = rng.random((S, 2, dim))
        swarm.velocity = velocity_update(
            swarm.position, swarm.velocity, swarm.pbest, attractor,
            config.omega, config.c1, config.c2, config.v_max, u[:, 0], u[:, 1], drop,
        )
        swarm.position, swarm.velocity = confine(swarm.position + swarm.velocity, swarm.velocity)
        swarm.fitness = objective(devectorize(swarm.position, N, K))

        better = swarm.fitness < swarm.pbest_fitness
        swarm.pbest[better] = swarm.position[better]
        swarm.pbest_fitness[better] = swarm.fitness[better]
        previous = swarm.gbest_fitness
        if np.any(better):
            # equal fitness goes to the lowest index, so gbest can move on a tie
            g = _argmin_first(swarm.pbest_fitness)
            swarm.gbest = swarm.pbest[g].copy()
            swarm.gbest_fitness = float(swarm.pbest_fitness[g])
        iterations += 1
        history.append(swarm.gbest_fitness)
        if callback is not None:
            callback(iterations, swarm)

        if swarm.gbest_fitness < previous:
            stagnant = 0
            gain = history[0] - swarm.gbest_fitness
            if len(history) == history.maxlen and gain < config.tol:
                reason = StopReason.CONVERGED_TOLERANCE
                break
        else:
            stagnant += 1
            if stagnant >= config.stagnation_limit:
                reason = StopReason.STAGNATED
                break
            if local:
                swarm.informs = regenerate_links(S, config.topology.expected_links, rng)

    return RunResult(
        best_design=devectorize(swarm.gbest, N, K).copy(),
        best_fitness=CriterionValue.from_float(objective.kind, swarm.gbest_fitness),
        iterations=iterations,
        function_evaluations=S * (iterations + 1),
        wall_time_seconds=time.perf_counter() - t0,
        stop_reason=reason,
        seed=int(config.seed),
        swarm_size=S,
        topology=config.topology.tag,
    )


def with_seed(config: PsoConfig, seed: int) -> PsoConfig:
    return replace(config, seed=int(seed))
