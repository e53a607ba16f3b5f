"""Quenched walk simulation.

Single-replica trajectories are stepped one uniform draw at a time and
record first-passage times, snapshots, and (optionally) the full path.
Batched engines run replicas in lockstep chunks of a fixed width so that
every replica's draw stream is a pure function of (master seed, replica
index): chunk c uses the generator spawned with key (c,), and replica i
reads column i mod 1024 of that chunk's draw matrix regardless of how many
replicas are requested or how work is distributed over workers.

Guard breaches are hard errors, never silent reflections: reflecting at a
boundary would bias crossing times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import EnvironmentWindow
from .errors import (
    LeftGuardBreachError,
    ModelError,
    RightGuardBreachError,
    StepBudgetExceededError,
    WindowTooSmallError,
)

__all__ = [
    "SimulationBudget",
    "WalkObservation",
    "step",
    "sample_hitting_times",
    "sample_position",
    "first_passage_index",
    "batch_hitting_times",
    "batch_positions",
    "replica_chunks",
    "REPLICA_CHUNK",
]

REPLICA_CHUNK = 1024
_BUF = 1 << 14


@dataclass(frozen=True)
class SimulationBudget:
    """Safety limits for one simulation: guard position and step cap."""

    left_guard: int
    max_steps: int
    t_max: int = 0
    n_max: int = 0

    def __post_init__(self) -> None:
        if self.left_guard < 1:
            raise ModelError(f"budget.left_guard: must be >= 1, got {self.left_guard}")
        if self.max_steps < max(self.t_max, 1):
            raise ModelError("budget.max_steps: must cover t_max and be positive")


@dataclass(frozen=True)
class WalkObservation:
    """One replica's sampled crossing times, hitting times, and snapshots.

    ``tau[j]`` is the crossing time of edge start+j -> start+j+1 and
    ``hit[m] = sum_{j<m} tau[j]`` (so ``hit[0] = 0``).  Snapshots are
    (t, X(t)) pairs at the requested times; ``path[t]`` is the full position
    record when it was requested.
    """

    replica_seed: int
    start: int
    tau: np.ndarray
    hit: np.ndarray
    snapshots: tuple[tuple[int, int], ...] = ()
    path: np.ndarray | None = None

    def first_passage_index(self, t: float) -> int:
        return first_passage_index(self, t)


def step(window: EnvironmentWindow, x: int, rng: np.random.Generator) -> int:
    """One nearest-neighbour step from x: +1 with probability p_x, else -1.

    Consumes exactly one uniform draw.  x must be strictly inside the window.
    """
    if x <= window.lo:
        raise LeftGuardBreachError(f"position {x} at or beyond left window edge {window.lo}")
    if x >= window.hi:
        raise RightGuardBreachError(f"position {x} at or beyond right window edge {window.hi}")
    return x + 1 if rng.random() < window.p[x - window.lo] else x - 1


def _simulate(
    window: EnvironmentWindow,
    z0: int,
    rng: np.random.Generator,
    *,
    left_guard: int,
    max_steps: int,
    t_stop: int = 0,
    n_stop: int | None = None,
    snap_times=(),
    record_first_passage: bool = False,
    record_path: bool = False,
    replica_seed: int = -1,
) -> WalkObservation:
    p = window.p
    lo = window.lo
    hi = window.hi
    if z0 <= lo or z0 >= hi:
        raise WindowTooSmallError(f"start {z0} not strictly inside window [{lo}, {hi}]")
    if n_stop is not None and n_stop > hi:
        raise WindowTooSmallError(f"hitting goal {n_stop} beyond window end {hi}")
    snap_times = sorted(int(t) for t in snap_times)
    snaps: list[tuple[int, int]] = []
    si = 0
    while si < len(snap_times) and snap_times[si] == 0:
        snaps.append((0, z0))
        si += 1
    fp = [0]
    best = z0
    path = [z0] if record_path else None
    x = z0
    t = 0
    buf = rng.random(_BUF)
    bi = 0
    while True:
        if (
            t >= t_stop
            and si >= len(snap_times)
            and (n_stop is None or best >= n_stop)
        ):
            break
        if t >= max_steps:
            raise StepBudgetExceededError(f"trajectory exceeded max_steps={max_steps}")
        if bi == _BUF:
            buf = rng.random(_BUF)
            bi = 0
        u = buf[bi]
        bi += 1
        x += 1 if u < p[x - lo] else -1
        t += 1
        if x > best:
            best = x
            if record_first_passage:
                fp.append(t)
        if record_path:
            path.append(x)
        while si < len(snap_times) and t == snap_times[si]:
            snaps.append((t, x))
            si += 1
        if x <= -left_guard:
            raise LeftGuardBreachError(
                f"walker reached left guard {-left_guard} at step {t}; enlarge the guard"
            )
        if x >= hi and not (
            t >= t_stop and si >= len(snap_times) and (n_stop is None or best >= n_stop)
        ):
            raise RightGuardBreachError(f"walker reached right window edge {hi} at step {t}")
    hit = np.array(fp, dtype=np.int64) if record_first_passage else np.zeros(1, dtype=np.int64)
    tau = np.diff(hit)
    return WalkObservation(
        replica_seed=replica_seed,
        start=z0,
        tau=tau,
        hit=hit,
        snapshots=tuple(snaps),
        path=np.array(path, dtype=np.int64) if record_path else None,
    )


def sample_hitting_times(
    window: EnvironmentWindow,
    n: int,
    rng: np.random.Generator,
    budget: SimulationBudget,
) -> WalkObservation:
    """Crossing times tau_0..tau_{n-1} and hitting times T(0)..T(n) from 0.

    Direct simulation of one trajectory; the per-edge crossing times are
    read off the first-passage record, so they carry the exact quenched law
    and are independent across edges given the environment.
    """
    if n < 1:
        raise ModelError(f"sample_hitting_times: n must be >= 1, got {n}")
    return _simulate(
        window,
        0,
        rng,
        left_guard=budget.left_guard,
        max_steps=budget.max_steps,
        n_stop=n,
        record_first_passage=True,
    )


def sample_position(
    window: EnvironmentWindow,
    z0: int,
    t_list,
    rng: np.random.Generator,
    budget: SimulationBudget,
    *,
    record_hitting: bool = False,
    n_goal: int | None = None,
    record_path: bool = False,
) -> WalkObservation:
    """Position snapshots X(t) at the requested times from one trajectory.

    ``record_hitting`` turns on the joint mode that also records the
    first-passage structure (used by the coupling identity checks).
    """
    t_list = sorted(int(t) for t in t_list)
    if t_list and t_list[0] < 0:
        raise ModelError("sample_position: snapshot times must be >= 0")
    return _simulate(
        window,
        z0,
        rng,
        left_guard=budget.left_guard,
        max_steps=budget.max_steps,
        t_stop=t_list[-1] if t_list else 0,
        snap_times=t_list,
        n_stop=n_goal,
        record_first_passage=record_hitting,
        record_path=record_path,
    )


def first_passage_index(observation: WalkObservation, t: float) -> int:
    """The unique n with T(n) <= t < T(n+1) for this trajectory."""
    hit = observation.hit
    if t < 0:
        raise ModelError(f"first_passage_index: t must be >= 0, got {t}")
    if t >= hit[-1]:
        raise WindowTooSmallError(
            f"hitting-time record ends at T({len(hit) - 1}) = {int(hit[-1])}; t={t} not bracketed"
        )
    return int(np.searchsorted(hit, t, side="right")) - 1


# ---------------------------------------------------------------------------
# chunked batch engines


def replica_chunks(n_replicas: int) -> int:
    """Number of fixed-width chunks needed for n_replicas."""
    return (n_replicas + REPLICA_CHUNK - 1) // REPLICA_CHUNK


def _chunk_rng(master_seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(chunk_index,))
    )


def hitting_chunk(args) -> np.ndarray:
    """Lockstep hitting times T(n) for one full replica chunk.

    The chunk is always simulated at full width so a replica's draws do not
    depend on the total replica count; callers slice off the unused tail.
    """
    window, n, master_seed, chunk_index, left_guard, max_steps = args
    rng = _chunk_rng(master_seed, chunk_index)
    p = window.p
    lo = window.lo
    if n > window.hi or -left_guard < lo:
        raise WindowTooSmallError(
            f"window [{lo}, {window.hi}] must cover [-{left_guard}, {n}]"
        )
    x = np.zeros(REPLICA_CHUNK, dtype=np.int64)
    t_hit = np.zeros(REPLICA_CHUNK, dtype=np.int64)
    active = np.ones(REPLICA_CHUNK, dtype=bool)
    for t in range(1, max_steps + 1):
        u = rng.random(REPLICA_CHUNK)
        move = np.where(u < p[x - lo], 1, -1)
        x = np.where(active, x + move, x)
        if x.min() <= -left_guard:
            raise LeftGuardBreachError(
                f"a walker reached the left guard {-left_guard}; enlarge the guard"
            )
        arrived = active & (x == n)
        if arrived.any():
            t_hit[arrived] = t
            active &= ~arrived
            if not active.any():
                return t_hit
    raise StepBudgetExceededError(f"hitting chunk exceeded max_steps={max_steps}")


def position_chunk(args) -> np.ndarray:
    """Lockstep positions X(t) for one full replica chunk after exactly t steps."""
    window, z0, t_steps, master_seed, chunk_index, left_guard = args
    rng = _chunk_rng(master_seed, chunk_index)
    p = window.p
    lo = window.lo
    if z0 + t_steps > window.hi or -left_guard < lo:
        raise WindowTooSmallError(
            f"window [{lo}, {window.hi}] must cover [-{left_guard}, {z0 + t_steps}]"
        )
    x = np.full(REPLICA_CHUNK, z0, dtype=np.int64)
    for _ in range(t_steps):
        u = rng.random(REPLICA_CHUNK)
        x += np.where(u < p[x - lo], 1, -1)
        if x.min() <= -left_guard:
            raise LeftGuardBreachError(
                f"a walker reached the left guard {-left_guard}; enlarge the guard"
            )
    return x


def _run_chunks(task_fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [task_fn(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(task_fn, tasks))


def batch_hitting_times(
    window: EnvironmentWindow,
    n: int,
    master_seed: int,
    n_replicas: int,
    budget: SimulationBudget,
    *,
    workers: int = 1,
) -> np.ndarray:
    """T(n) for n_replicas independent replicas under one quenched window."""
    tasks = [
        (window, n, master_seed, c, budget.left_guard, budget.max_steps)
        for c in range(replica_chunks(n_replicas))
    ]
    parts = _run_chunks(hitting_chunk, tasks, workers)
    return np.concatenate(parts)[:n_replicas]


def batch_positions(
    window: EnvironmentWindow,
    t_steps: int,
    master_seed: int,
    n_replicas: int,
    budget: SimulationBudget,
    *,
    z0: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """X(t) for n_replicas independent replicas under one quenched window."""
    tasks = [
        (window, z0, t_steps, master_seed, c, budget.left_guard)
        for c in range(replica_chunks(n_replicas))
    ]
    parts = _run_chunks(position_chunk, tasks, workers)
    return np.concatenate(parts)[:n_replicas]


def default_max_steps(n_or_t: int, mu_hint: float) -> int:
    """Generous step cap: ten times the expected hitting scale plus slack."""
    return int(10_000 + 10.0 * mu_hint * max(n_or_t, 1))
