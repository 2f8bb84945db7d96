"""Per-vehicle pseudonym pools with change, reuse and lock mechanics.

Pseudonyms are opaque integers from a per-run issuing counter; there is no
certificate machinery. Locks freeze changes for at most MAX_LOCK_S seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

MAX_LOCK_S = 255.0


class RefusalReason(Enum):
    LOCKED = "locked"
    TOO_SOON = "too_soon"
    EXHAUSTED = "exhausted"


class ChangeRefused(Exception):
    def __init__(self, reason: RefusalReason):
        super().__init__(reason.value)
        self.reason = reason


class InvalidPriority(ValueError):
    pass


@dataclass(slots=True)
class Pseudonym:
    id: int
    issued_at: float
    first_used: Optional[float] = None
    last_used: Optional[float] = None
    use_count: int = 0


@dataclass(frozen=True, slots=True)
class PseudonymPolicy:
    min_usage_duration: float = 60.0
    max_parallel: int = 1
    reuse_allowed: bool = False
    pool_size: int = 64


@dataclass(frozen=True, slots=True)
class LockState:
    locked_until: Optional[float] = None
    priority: int = 0

    def locked(self, now: float) -> bool:
        return self.locked_until is not None and now < self.locked_until


@dataclass(slots=True)
class PseudonymPool:
    owner: int
    active: Pseudonym
    available: list[Pseudonym]
    retired: list[Pseudonym] = field(default_factory=list)
    policy: PseudonymPolicy = PseudonymPolicy()
    active_since: float = 0.0  # start of the current activation (reuse restarts it)


@dataclass(frozen=True, slots=True)
class ChangeRecord:
    time: float
    true_id: int
    old_id: int
    new_id: int
    context: str


class PseudonymAuthority:
    """Issues run-unique pseudonym ids and initial pools."""

    def __init__(self, first_id: int = 1000):
        self._next = first_id

    def issue(self, now: float) -> Pseudonym:
        p = Pseudonym(id=self._next, issued_at=now)
        self._next += 1
        return p

    def new_pool(self, owner: int, policy: PseudonymPolicy, now: float = 0.0) -> PseudonymPool:
        first = self.issue(now)
        first.first_used = now
        first.use_count = 1
        available = [self.issue(now) for _ in range(max(0, policy.pool_size - 1))]
        return PseudonymPool(owner=owner, active=first, available=available,
                             policy=policy, active_since=now)


def can_change(
    pool: PseudonymPool,
    lock: LockState,
    now: float,
    min_usage_override: Optional[float] = None,
) -> Optional[RefusalReason]:
    """None when a change is allowed, otherwise the refusal reason.

    The minimum-usage check runs against the start of the current activation;
    strategies pass min_usage_override=0.0 at sanctioned mix events.
    """
    if lock.locked(now):
        return RefusalReason.LOCKED
    min_usage = pool.policy.min_usage_duration if min_usage_override is None else min_usage_override
    if now - pool.active_since < min_usage:
        return RefusalReason.TOO_SOON
    if not pool.available and not (pool.policy.reuse_allowed and pool.retired):
        return RefusalReason.EXHAUSTED
    return None


def change_pseudonym(
    pool: PseudonymPool,
    lock: LockState,
    now: float,
    min_usage_override: Optional[float] = None,
) -> int:
    """Retire the active pseudonym and activate the next one (FIFO; oldest
    retired under reuse). Returns the new active id."""
    reason = can_change(pool, lock, now, min_usage_override)
    if reason is not None:
        raise ChangeRefused(reason)
    old = pool.active
    old.last_used = now
    pool.retired.append(old)
    if pool.available:
        new = pool.available.pop(0)
    else:
        new = pool.retired.pop(0)
        if new is old:  # never swap a pseudonym for itself
            pool.retired.insert(0, new)
            raise ChangeRefused(RefusalReason.EXHAUSTED)
    new.use_count += 1
    if new.first_used is None:
        new.first_used = now
    pool.active = new
    pool.active_since = now
    return new.id


def apply_lock(lock: LockState, now: float, duration: float, priority: int) -> LockState:
    """Fresh lock state ending at now + duration, clamped to MAX_LOCK_S."""
    if priority not in (0, 1):
        raise InvalidPriority(f"priority must be 0 or 1, got {priority}")
    if duration <= 0:
        raise ValueError("lock duration must be positive")
    return LockState(locked_until=now + min(duration, MAX_LOCK_S), priority=priority)


def assert_unique_actives(pools: dict[int, PseudonymPool]) -> None:
    """Global uniqueness scan: no pseudonym id is active on two vehicles."""
    seen: dict[int, int] = {}
    for owner, pool in pools.items():
        pid = pool.active.id
        if pid in seen:
            raise AssertionError(f"pseudonym {pid} active on vehicles {seen[pid]} and {owner}")
        seen[pid] = owner
