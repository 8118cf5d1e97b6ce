"""Sampled safe set and cost-to-go records.

The safe set stores, for every retained iteration, the states its closed-loop
trajectory visited from time 1 onward together with the realized cost-to-go
from that state. States are matched by rounding each coordinate to the key
resolution, so two floating-point states within 1e-9 of each other share a
record. Snapshots are immutable: append and prune return new instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

KEY_TOL = 1e-9


def state_key(state: np.ndarray) -> tuple[int, ...]:
    """Integer key identifying states up to the key resolution."""
    return tuple(int(round(float(c) / KEY_TOL)) for c in state)


@dataclass(frozen=True)
class SafeSetEntry:
    """One visited state: trajectory index, time step, state, cost-to-go."""

    iteration: int
    time: int
    state: np.ndarray
    cost_to_go: float

    def key(self) -> tuple[int, ...]:
        return state_key(self.state)


class SafeSet:
    """Union of stored trajectories with realized cost-to-go values."""

    def __init__(self, goal: np.ndarray, entries: Sequence[SafeSetEntry] = (), live: Iterable[int] = ()):
        self.goal = np.asarray(goal, dtype=float)
        self.entries: tuple[SafeSetEntry, ...] = tuple(entries)
        self.live_iters: tuple[int, ...] = tuple(sorted(set(live)))
        live_set = set(self.live_iters)
        self._entry_at: dict[tuple[int, int], SafeSetEntry] = {}
        self._max_time: dict[int, int] = {}
        self._best: dict[tuple[int, ...], SafeSetEntry] = {}
        self._candidate_keys: list[tuple[int, ...]] = []
        for entry in self.entries:
            if entry.iteration not in live_set:
                continue
            self._entry_at[(entry.iteration, entry.time)] = entry
            prev = self._max_time.get(entry.iteration, 0)
            if entry.time > prev:
                self._max_time[entry.iteration] = entry.time
            key = entry.key()
            best = self._best.get(key)
            if best is None:
                self._best[key] = entry
                self._candidate_keys.append(key)
            elif entry.cost_to_go < best.cost_to_go:
                self._best[key] = entry

    # -- construction -----------------------------------------------------

    def append(self, iteration: int, pairs: Sequence[tuple[np.ndarray, float]]) -> "SafeSet":
        """Add a completed trajectory given (state, stage cost) pairs.

        ``pairs`` holds T+1 items: states x_0 .. x_T with the stage cost paid
        at each, the last being the goal with zero cost. States from time 1
        on are stored with their realized cost-to-go.
        """
        if iteration in self.live_iters:
            raise ValueError(f"iteration {iteration} already stored")
        if len(pairs) < 2:
            raise ValueError("a trajectory needs at least one transition")
        horizon = len(pairs) - 1
        last_state, last_cost = pairs[horizon]
        if last_cost != 0.0:
            raise ValueError("the terminal stage cost must be zero")
        if np.max(np.abs(np.asarray(last_state, dtype=float) - self.goal)) > KEY_TOL:
            raise ValueError("trajectory does not end at the goal state")
        cost_to_go = np.zeros(horizon + 1)
        for t in range(horizon - 1, -1, -1):
            cost_to_go[t] = float(pairs[t][1]) + cost_to_go[t + 1]
        new_entries = list(self.entries)
        for t in range(1, horizon + 1):
            state = self.goal.copy() if t == horizon else np.asarray(pairs[t][0], dtype=float).copy()
            new_entries.append(SafeSetEntry(iteration, t, state, float(cost_to_go[t])))
        return SafeSet(self.goal, new_entries, self.live_iters + (iteration,))

    def prune(self, state_is_safe: Callable[[np.ndarray], bool]) -> tuple["SafeSet", tuple[int, ...]]:
        """Drop every trajectory containing a state the predicate rejects.

        Returns the pruned snapshot and the removed iteration indices.
        Pruning is wholesale: one unsafe state disqualifies the whole
        trajectory, because its cost-to-go certificate relies on the suffix
        remaining executable.
        """
        removed = []
        checked: dict[tuple[int, ...], bool] = {}
        for iteration in self.live_iters:
            ok = True
            for t in range(1, self._max_time.get(iteration, 0) + 1):
                entry = self._entry_at[(iteration, t)]
                key = entry.key()
                verdict = checked.get(key)
                if verdict is None:
                    verdict = bool(state_is_safe(entry.state))
                    checked[key] = verdict
                if not verdict:
                    ok = False
                    break
            if not ok:
                removed.append(iteration)
        if not removed:
            return self, ()
        keep = [i for i in self.live_iters if i not in set(removed)]
        kept_entries = [e for e in self.entries if e.iteration in set(keep)]
        return SafeSet(self.goal, kept_entries, keep), tuple(removed)

    # -- queries ----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._entry_at)

    def min_cost_to_go(self, state: np.ndarray) -> float | None:
        entry = self._best.get(state_key(state))
        return None if entry is None else entry.cost_to_go

    def best_entry(self, state: np.ndarray) -> SafeSetEntry | None:
        return self._best.get(state_key(state))

    def successor(self, entry: SafeSetEntry) -> SafeSetEntry | None:
        """The stored state one step later on the same trajectory, if any."""
        return self._entry_at.get((entry.iteration, entry.time + 1))

    def max_time(self, iteration: int) -> int:
        return self._max_time.get(iteration, 0)

    def entry_at(self, iteration: int, time: int) -> SafeSetEntry | None:
        return self._entry_at.get((iteration, time))

    def trajectory_states(self, iteration: int) -> list[SafeSetEntry]:
        return [self._entry_at[(iteration, t)] for t in range(1, self.max_time(iteration) + 1)]

    def terminal_candidates(self) -> list[SafeSetEntry]:
        """Distinct stored states with their best cost-to-go, in first-seen order."""
        return [self._best[k] for k in self._candidate_keys]

    # -- serialization ----------------------------------------------------

    def to_lines(self) -> list[str]:
        lines = []
        for entry in self.entries:
            if entry.iteration not in set(self.live_iters):
                continue
            coords = " ".join(format(c, ".17g") for c in entry.state)
            lines.append(f"{entry.iteration} {entry.time} {coords} {format(entry.cost_to_go, '.17g')}")
        return lines

    @classmethod
    def from_lines(cls, goal: np.ndarray, lines: Iterable[str]) -> "SafeSet":
        entries = []
        live = set()
        for line in lines:
            parts = line.split()
            if not parts:
                continue
            iteration, time = int(parts[0]), int(parts[1])
            state = np.array([float(tok) for tok in parts[2:-1]])
            entries.append(SafeSetEntry(iteration, time, state, float(parts[-1])))
            live.add(iteration)
        return cls(goal, entries, live)
