"""Dual replay memory: expandable global buffer + fixed FIFO local buffer.

Every committed episode goes to the global memory. The local memory only
admits an episode whose return beats the worst current agent score, and
only from the global agent or from a local agent that has accepted a
policy transfer -- it approximates on-policy data for the global agent.
The global agent then samples one buffer per batch, local with
probability p.

Both buffers keep the stored transitions as objects and mirror them into
contiguous column arrays, so batch sampling is a single vectorized gather.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GLOBAL_AGENT = "global"


@dataclass(eq=False)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class EpisodeBuffer:
    """Current-episode transitions and running (undiscounted) return."""

    transitions: list = field(default_factory=list)
    ret: float = 0.0

    def add(self, t: Transition) -> None:
        self.transitions.append(t)
        self.ret += t.r

    def clear(self) -> None:
        self.transitions = []
        self.ret = 0.0

    def __len__(self) -> int:
        return len(self.transitions)


class _TransitionStore:
    """List of transitions plus mirrored column arrays for fast gathers.

    capacity=None grows without bound; otherwise the store is a ring and a
    push on a full store overwrites the oldest slot.
    """

    def __init__(self, capacity: int | None = None):
        self.capacity = capacity
        self._items: list[Transition] = []
        self._cursor = 0
        self._cols: dict[str, np.ndarray] | None = None
        self._col_cap = 0

    def _ensure_cols(self, t: Transition) -> None:
        if self._cols is not None:
            return
        cap = self.capacity if self.capacity is not None else 256
        self._cols = {
            "s": np.empty((cap, t.s.size)),
            "a": np.empty((cap, t.a.size)),
            "r": np.empty(cap),
            "s2": np.empty((cap, t.s_next.size)),
            "d": np.empty(cap),
        }
        self._col_cap = cap

    def _grow_cols(self) -> None:
        new_cap = self._col_cap * 2
        for key, arr in self._cols.items():
            bigger = np.empty((new_cap,) + arr.shape[1:])
            bigger[: self._col_cap] = arr
            self._cols[key] = bigger
        self._col_cap = new_cap

    def push(self, t: Transition) -> None:
        self._ensure_cols(t)
        if self.capacity is not None and len(self._items) == self.capacity:
            slot = self._cursor
            self._items[slot] = t
            self._cursor = (slot + 1) % self.capacity
        else:
            slot = len(self._items)
            if slot == self._col_cap:
                self._grow_cols()
            self._items.append(t)
        cols = self._cols
        cols["s"][slot] = t.s
        cols["a"][slot] = t.a
        cols["r"][slot] = t.r
        cols["s2"][slot] = t.s_next
        cols["d"][slot] = 1.0 if t.done else 0.0

    def ordered_items(self) -> list[Transition]:
        return self._items[self._cursor :] + self._items[: self._cursor]

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if not self._items:
            raise ValueError("sampling from empty memory")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def sample_arrays(self, batch_size: int, rng: np.random.Generator):
        """Uniform batch as (s, a, r, s2, d) arrays; one vectorized gather."""
        if not self._items:
            raise ValueError("sampling from empty memory")
        idx = rng.integers(0, len(self._items), size=batch_size)
        cols = self._cols
        return cols["s"][idx], cols["a"][idx], cols["r"][idx], cols["s2"][idx], cols["d"][idx]

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, t: Transition) -> bool:
        return any(x is t for x in self._items)


class GlobalMemory(_TransitionStore):
    """Append-only transition store; optional capacity cap evicts oldest."""


class LocalMemory(_TransitionStore):
    """Fixed-capacity ring buffer; a push on a full buffer evicts the oldest."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        super().__init__(capacity)

    def contents(self) -> list[Transition]:
        """Items oldest first."""
        return self.ordered_items()


def push_fifo(lm: LocalMemory, t: Transition) -> None:
    lm.push(t)


@dataclass
class TransferFlags:
    """Set when the corresponding transfer fires; gates local-memory admission."""

    a_p: bool = False  # first local agent accepted a policy from the global agent
    a_c: bool = False  # second local agent accepted a policy from the global agent

    def for_agent(self, agent_kind: str) -> bool:
        if agent_kind == "local1":
            return self.a_p
        if agent_kind == "local2":
            return self.a_c
        return False


def admit_episode(
    ep: EpisodeBuffer,
    agent_kind: str,
    flags: TransferFlags,
    r_min: float,
    gm: GlobalMemory,
    lm: LocalMemory | None,
) -> bool:
    """Commit an episode: always to global memory, conditionally to local.

    Local admission requires the episode return to strictly beat r_min
    (the minimum of the agents' current scores) and the agent to be either
    the global one or a local agent whose transfer flag is set. Clears the
    episode buffer. Returns whether the episode was stored locally.
    """
    stored_local = (
        lm is not None
        and ep.ret > r_min
        and (agent_kind == GLOBAL_AGENT or flags.for_agent(agent_kind))
    )
    for t in ep.transitions:
        gm.push(t)
        if stored_local:
            lm.push(t)
    ep.clear()
    return stored_local


def pick_mixed_source(
    gm: GlobalMemory,
    lm: LocalMemory | None,
    p: float,
    rng: np.random.Generator,
):
    """Bernoulli(p) source choice with fallback to the non-empty buffer.

    Returns (store, drew_from_local); raises if both are empty.
    """
    use_local = rng.random() < p
    local_ok = lm is not None and len(lm) > 0
    global_ok = len(gm) > 0
    if use_local and not local_ok:
        use_local = False
    if not use_local and not global_ok:
        use_local = local_ok
    if use_local and local_ok:
        return lm, True
    if global_ok:
        return gm, False
    raise ValueError("both memories empty")


def sample_mixed(
    gm: GlobalMemory,
    lm: LocalMemory | None,
    batch_size: int,
    p: float,
    rng: np.random.Generator,
) -> tuple[list[Transition], bool]:
    """Draw one batch from local memory with probability p, else global.

    One Bernoulli draw per batch. If the chosen source is empty but the
    other is not, falls back to the non-empty one. Returns
    (batch, drew_from_local).
    """
    store, from_local = pick_mixed_source(gm, lm, p, rng)
    return store.sample(batch_size, rng), from_local
