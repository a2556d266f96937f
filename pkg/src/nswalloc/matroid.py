"""Matroids over small ground sets, with the rank-slack separation oracle.

All built-in kinds (free, uniform, partition, graphic) are valid matroids by
construction; explicit rank tables can encode anything and are validated with
check_rank_axioms.  Ground sets are {0, ..., ground_size-1}; subsets travel
as iterables in the public API and as bitmasks internally.
"""

from __future__ import annotations

import random
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from ._rat import QQ, Q0, qq
from .errors import GroundSetTooLarge, OutOfRangeElement

EXHAUSTIVE_LIMIT = 16


def _mask_of(subset: Iterable[int], ground_size: int) -> int:
    if isinstance(subset, int):
        if subset < 0 or subset >= (1 << ground_size):
            raise OutOfRangeElement(f"mask {subset} out of range for ground size {ground_size}")
        return subset
    mask = 0
    for e in subset:
        if not isinstance(e, int) or e < 0 or e >= ground_size:
            raise OutOfRangeElement(f"element {e!r} not in ground set of size {ground_size}")
        mask |= 1 << e
    return mask


def _mask_to_set(mask: int) -> frozenset:
    out = []
    idx = 0
    while mask:
        if mask & 1:
            out.append(idx)
        mask >>= 1
        idx += 1
    return frozenset(out)


class Matroid:
    """Base class; subclasses implement rank_mask."""

    kind = "abstract"

    def __init__(self, ground_size: int):
        if ground_size < 0:
            raise ValueError("ground_size must be nonnegative")
        self.ground_size = ground_size

    # -- subclass hook ---------------------------------------------------
    def rank_mask(self, mask: int) -> int:
        raise NotImplementedError

    # -- public API ------------------------------------------------------
    def rank(self, subset: Iterable[int]) -> int:
        return self.rank_mask(_mask_of(subset, self.ground_size))

    def is_independent(self, subset: Iterable[int]) -> bool:
        mask = _mask_of(subset, self.ground_size)
        return self.rank_mask(mask) == mask.bit_count()

    def full_rank(self) -> int:
        return self.rank_mask((1 << self.ground_size) - 1)

    def rank_table(self) -> List[int]:
        """Tabulate ranks for all subsets (ground <= EXHAUSTIVE_LIMIT)."""
        if self.ground_size > EXHAUSTIVE_LIMIT:
            raise GroundSetTooLarge(
                f"cannot tabulate ground set of size {self.ground_size}")
        return [self.rank_mask(m) for m in range(1 << self.ground_size)]

    def __repr__(self):
        return f"<{type(self).__name__} ground={self.ground_size}>"


class FreeMatroid(Matroid):
    kind = "free"

    def rank_mask(self, mask: int) -> int:
        return mask.bit_count()


class UniformMatroid(Matroid):
    kind = "uniform"

    def __init__(self, ground_size: int, rank: int):
        super().__init__(ground_size)
        if rank < 0:
            raise ValueError("uniform matroid rank must be >= 0")
        self.uniform_rank = rank

    def rank_mask(self, mask: int) -> int:
        return min(mask.bit_count(), self.uniform_rank)


class PartitionMatroid(Matroid):
    kind = "partition"

    def __init__(self, blocks: Sequence[Sequence[int]], capacities: Sequence[int]):
        elements = [e for b in blocks for e in b]
        ground_size = len(elements)
        super().__init__(ground_size)
        if sorted(elements) != list(range(ground_size)):
            raise ValueError("blocks must partition {0..n-1}")
        if len(capacities) != len(blocks):
            raise ValueError("need one capacity per block")
        if any(c < 0 for c in capacities):
            raise ValueError("capacities must be >= 0")
        self.blocks = [tuple(sorted(b)) for b in blocks]
        self.capacities = list(capacities)
        self._block_masks = [_mask_of(b, ground_size) for b in self.blocks]

    def rank_mask(self, mask: int) -> int:
        return sum(
            min((mask & bm).bit_count(), cap)
            for bm, cap in zip(self._block_masks, self.capacities)
        )


class GraphicMatroid(Matroid):
    """Ground set = edge list of a multigraph; rank = n_vertices - components."""

    kind = "graphic"

    def __init__(self, num_vertices: int, edges: Sequence[Tuple[int, int]]):
        super().__init__(len(edges))
        if num_vertices < 0:
            raise ValueError("num_vertices must be >= 0")
        for (u, v) in edges:
            if not (0 <= u < num_vertices and 0 <= v < num_vertices):
                raise ValueError(f"edge ({u},{v}) has endpoint outside vertex range")
        self.num_vertices = num_vertices
        self.edges = [tuple(e) for e in edges]
        self._cache: Dict[int, int] = {}

    def rank_mask(self, mask: int) -> int:
        cached = self._cache.get(mask)
        if cached is not None:
            return cached
        parent = list(range(self.num_vertices))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        r = 0
        m = mask
        idx = 0
        while m:
            if m & 1:
                u, v = self.edges[idx]
                ru, rv = find(u), find(v)
                if ru != rv:
                    parent[ru] = rv
                    r += 1
            m >>= 1
            idx += 1
        self._cache[mask] = r
        return r


class ExplicitMatroid(Matroid):
    """Rank function tabulated over all subsets, bitmask-indexed."""

    kind = "explicit"

    def __init__(self, ground_size: int, rank_table: Sequence[int]):
        if ground_size > EXHAUSTIVE_LIMIT:
            raise GroundSetTooLarge(
                f"explicit matroid limited to ground size {EXHAUSTIVE_LIMIT}")
        super().__init__(ground_size)
        if len(rank_table) != (1 << ground_size):
            raise ValueError(
                f"rank table must have 2^{ground_size} entries, got {len(rank_table)}")
        self._table = [int(r) for r in rank_table]

    def rank_mask(self, mask: int) -> int:
        if mask < 0 or mask >= len(self._table):
            raise OutOfRangeElement(f"mask {mask} out of table range")
        return self._table[mask]


def check_rank_axioms(m: Matroid) -> bool:
    """Verify r(empty)=0, unit increase, monotonicity and submodularity.

    Submodularity is checked through the local diminishing-returns form
    r(S+x) + r(S+y) >= r(S+x+y) + r(S), which is equivalent for integer
    monotone functions.  Exhaustive, so capped at EXHAUSTIVE_LIMIT.
    """
    g = m.ground_size
    if g > EXHAUSTIVE_LIMIT:
        raise GroundSetTooLarge(f"axiom check limited to ground size {EXHAUSTIVE_LIMIT}")
    full = 1 << g
    ranks = [m.rank_mask(s) for s in range(full)]
    if ranks[0] != 0:
        return False
    for s in range(full):
        rs = ranks[s]
        rest = [x for x in range(g) if not (s >> x) & 1]
        for ai, x in enumerate(rest):
            rsx = ranks[s | (1 << x)]
            if not (rs <= rsx <= rs + 1):
                return False
            for y in rest[ai + 1:]:
                if ranks[s | (1 << y)] + rsx < ranks[s | (1 << x) | (1 << y)] + rs:
                    return False
    return True


def minimize_rank_slack(m: Matroid, load: Sequence) -> Tuple[frozenset, "QQ"]:
    """Return the subset T minimizing rank(T) - sum(load[k] for k in T).

    The minimizer certifies whether loads fit the independence polytope:
    a negative slack exhibits a violated rank constraint.  Ties break toward
    smaller slack, then smaller cardinality, then lowest bitmask.  Exhaustive
    for ground <= EXHAUSTIVE_LIMIT (canonical); structured shortcuts handle
    larger free/uniform/partition grounds.
    """
    g = m.ground_size
    if len(load) != g:
        raise ValueError(f"load vector must have length {g}")
    loads = [qq(x) for x in load]
    if g <= EXHAUSTIVE_LIMIT:
        return _slack_exhaustive(m, loads)
    if m.kind == "free":
        return _slack_free(loads)
    if m.kind == "uniform":
        return _slack_uniform(m.uniform_rank, loads)
    if m.kind == "partition":
        return _slack_partition(m, loads)
    raise GroundSetTooLarge(
        f"minimize_rank_slack needs enumeration for kind {m.kind!r} "
        f"and ground size {g} > {EXHAUSTIVE_LIMIT}")


def _slack_exhaustive(m: Matroid, loads: List["QQ"]) -> Tuple[frozenset, "QQ"]:
    g = m.ground_size
    full = 1 << g
    # prefix-style accumulation: load(S) = load(S minus lowbit) + load(lowbit)
    acc: List["QQ"] = [Q0] * full
    single = [loads[k] for k in range(g)]
    best_mask, best_slack, best_count = 0, Q0, 0
    for mask in range(1, full):
        low = mask & -mask
        acc[mask] = acc[mask ^ low] + single[low.bit_length() - 1]
        slack = m.rank_mask(mask) - acc[mask]
        if slack < best_slack:
            best_mask, best_slack, best_count = mask, slack, mask.bit_count()
        elif slack == best_slack:
            c = mask.bit_count()
            if c < best_count or (c == best_count and mask < best_mask):
                best_mask, best_count = mask, c
    return _mask_to_set(best_mask), best_slack


def _slack_free(loads: List["QQ"]) -> Tuple[frozenset, "QQ"]:
    chosen = [k for k, x in enumerate(loads) if x > 1]
    slack = sum((1 - loads[k] for k in chosen), Q0)
    return frozenset(chosen), slack


def _slack_uniform(rank: int, loads: List["QQ"]) -> Tuple[frozenset, "QQ"]:
    order = sorted(range(len(loads)), key=lambda k: (-loads[k], k))
    best_j, best_slack = 0, Q0
    prefix = Q0
    for j, k in enumerate(order, start=1):
        prefix = prefix + loads[k]
        slack = min(j, rank) - prefix
        if slack < best_slack:
            best_j, best_slack = j, slack
    return frozenset(order[:best_j]), best_slack


def _slack_partition(m: PartitionMatroid, loads: List["QQ"]) -> Tuple[frozenset, "QQ"]:
    chosen: List[int] = []
    total = Q0
    for block, cap in zip(m.blocks, m.capacities):
        order = sorted(block, key=lambda k: (-loads[k], k))
        best_j, best_slack = 0, Q0
        prefix = Q0
        for j, k in enumerate(order, start=1):
            prefix = prefix + loads[k]
            slack = min(j, cap) - prefix
            if slack < best_slack:
                best_j, best_slack = j, slack
        chosen.extend(order[:best_j])
        total += best_slack
    return frozenset(chosen), total


BUILTIN_KINDS = ("free", "uniform", "partition", "graphic", "explicit")


def random_matroid(rng: random.Random, ground_size: int,
                   kinds: Optional[Sequence[str]] = None) -> Matroid:
    """Draw a random matroid over {0..ground_size-1}, nonzero rank."""
    if ground_size < 1:
        raise ValueError("need at least one ground element")
    kind = rng.choice(list(kinds) if kinds else list(BUILTIN_KINDS))
    if kind == "free":
        return FreeMatroid(ground_size)
    if kind == "uniform":
        return UniformMatroid(ground_size, rng.randint(1, ground_size))
    if kind == "partition":
        elems = list(range(ground_size))
        rng.shuffle(elems)
        n_blocks = rng.randint(1, ground_size)
        cuts = sorted(rng.sample(range(1, ground_size), n_blocks - 1)) if n_blocks > 1 else []
        blocks, start = [], 0
        for cut in cuts + [ground_size]:
            blocks.append(elems[start:cut])
            start = cut
        caps = [rng.randint(1, len(b)) for b in blocks]
        return PartitionMatroid(blocks, caps)
    if kind == "graphic":
        nv = rng.randint(2, ground_size + 1)
        edges = []
        for _ in range(ground_size):
            u = rng.randrange(nv)
            v = rng.randrange(nv - 1)
            if v >= u:
                v += 1
            edges.append((u, v))
        return GraphicMatroid(nv, edges)
    if kind == "explicit":
        inner = random_matroid(rng, ground_size,
                               kinds=("free", "uniform", "partition", "graphic"))
        return ExplicitMatroid(ground_size, inner.rank_table())
    raise ValueError(f"unknown matroid kind {kind!r}")
