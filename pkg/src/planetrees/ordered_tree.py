"""Ordered rooted trees, their parenthesis and contour codings, and tip operations.

Vertices are addressed with 1-based Ulam words: the root is the empty tuple,
``(2, 1)`` is the first child of the second child of the root.

All algorithms here are iterative so that deep trees (heights in the
thousands, as produced by critical Galton-Watson sampling) do not hit the
interpreter recursion limit.
"""
from __future__ import annotations

from typing import Iterator, Sequence

Address = tuple


class TreeError(ValueError):
    """Raised for invalid addresses, heights or contour paths."""


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class OrderedTree:
    """An immutable ordered rooted tree.

    Size and height are computed on construction from the children, so
    building a tree bottom-up never recurses.  Equality and hashing go
    through the balanced-parenthesis code, which is computed lazily.
    """

    __slots__ = ("children", "size", "height", "_code", "_hash")

    def __init__(self, children: Sequence["OrderedTree"] = ()):
        self.children = tuple(children)
        size = 1
        height = 0
        for c in self.children:
            size += c.size
            if c.height + 1 > height:
                height = c.height + 1
        self.size = size
        self.height = height
        self._code = None
        self._hash = None

    @property
    def code(self) -> str:
        if self._code is None:
            self._code = _serialize(self)
        return self._code

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, OrderedTree):
            return NotImplemented
        if self.size != other.size or self.height != other.height:
            return False
        return self.code == other.code

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.code)
        return self._hash

    def __lt__(self, other: "OrderedTree") -> bool:
        return self.code < other.code

    def __repr__(self):
        if self.size <= 40:
            return f"OrderedTree({self.code!r})"
        return f"OrderedTree(size={self.size}, height={self.height})"

    def __str__(self):
        return self.code

    def is_leaf(self) -> bool:
        return not self.children


LEAF = OrderedTree()


def _serialize(t: OrderedTree) -> str:
    out = []
    stack = [(t, 0)]
    while stack:
        node, i = stack.pop()
        if node._code is not None:
            out.append(node._code)
            continue
        if i == 0:
            out.append("(")
        if i < len(node.children):
            stack.append((node, i + 1))
            stack.append((node.children[i], 0))
        else:
            out.append(")")
    return "".join(out)


def serialize(t: OrderedTree) -> str:
    return t.code


def parse_tree(code: str) -> OrderedTree:
    """Parse a balanced-parenthesis word with a single outer pair."""
    if not code:
        raise ParseError("empty code", 0)
    stack: list[list] = []
    result = None
    for i, ch in enumerate(code):
        if result is not None:
            raise ParseError("trailing characters after the root", i)
        if ch == "(":
            stack.append([])
        elif ch == ")":
            if not stack:
                raise ParseError("unbalanced ')'", i)
            node = OrderedTree(stack.pop())
            if stack:
                stack[-1].append(node)
            else:
                result = node
        else:
            raise ParseError(f"unexpected character {ch!r}", i)
    if result is None:
        raise ParseError("unclosed '('", len(code))
    return result


def from_child_counts(counts: Sequence[int], order: str = "bfs") -> OrderedTree:
    """Build a tree from per-vertex child counts listed in BFS or DFS order."""
    n = len(counts)
    if n == 0:
        raise TreeError("empty child-count sequence")
    if order == "bfs":
        # children of vertex i occupy a contiguous block after all earlier blocks
        first = [0] * n
        nxt = 1
        for i in range(n):
            first[i] = nxt
            nxt += counts[i]
        if nxt != n:
            raise TreeError("child counts do not describe a single tree")
        nodes: list = [None] * n
        for i in range(n - 1, -1, -1):
            f = first[i]
            nodes[i] = OrderedTree(nodes[f:f + counts[i]])
        return nodes[0]
    if order == "dfs":
        stack: list[list] = []
        need: list[int] = []
        root = None
        for k in counts:
            if root is not None:
                raise TreeError("child counts do not describe a single tree")
            stack.append([])
            need.append(k)
            while stack and need[-1] == len(stack[-1]):
                node = OrderedTree(stack.pop())
                need.pop()
                if stack:
                    stack[-1].append(node)
                else:
                    root = node
        if root is None:
            raise TreeError("child counts do not describe a single tree")
        return root
    raise ValueError(f"unknown order {order!r}")


def height(t: OrderedTree) -> int:
    return t.height


def size(t: OrderedTree) -> int:
    return t.size


def nu(t: OrderedTree) -> int:
    """Number of root children whose subtree reaches height Γ(t) - 1."""
    if t.is_leaf():
        return 0
    target = t.height - 1
    return sum(1 for c in t.children if c.height == target)


def subtree_at(t: OrderedTree, u: Address) -> OrderedTree:
    node = t
    for depth, a in enumerate(u):
        if not (1 <= a <= len(node.children)):
            raise TreeError(f"address {tuple(u)} invalid at position {depth}")
        node = node.children[a - 1]
    return node


def first_tip(t: OrderedTree) -> Address:
    """Lexicographically smallest address among the vertices of maximal depth."""
    u = []
    node = t
    while node.children:
        for j, c in enumerate(node.children):
            if c.height == node.height - 1:
                u.append(j + 1)
                node = c
                break
    return tuple(u)


def theta_extract(t: OrderedTree, p: int):
    """Subtree of height p hanging from the ancestor of the first tip at depth Γ(t) - p.

    Returns ``(theta, address, lambda_size)`` where lambda_size counts the
    vertices of t outside theta plus the shared vertex.
    """
    n = t.height
    if p < 0 or p > n:
        raise TreeError(f"p={p} outside [0, {n}]")
    u = first_tip(t)[: n - p]
    theta = subtree_at(t, u)
    return theta, u, t.size - theta.size + 1


def addresses(t: OrderedTree) -> Iterator[Address]:
    """All vertex addresses in depth-first (lexicographic) order."""
    stack = [(t, ())]
    while stack:
        node, u = stack.pop()
        yield u
        for j in range(len(node.children), 0, -1):
            stack.append((node.children[j - 1], u + (j,)))


def tips(t: OrderedTree) -> list:
    return [u for u in addresses(t) if not subtree_at(t, u).children]


def child_counts(t: OrderedTree, order: str = "dfs") -> list:
    out = []
    if order == "dfs":
        stack = [t]
        while stack:
            node = stack.pop()
            out.append(len(node.children))
            stack.extend(reversed(node.children))
    elif order == "bfs":
        level = [t]
        while level:
            nxt = []
            for node in level:
                out.append(len(node.children))
                nxt.extend(node.children)
            level = nxt
    else:
        raise ValueError(f"unknown order {order!r}")
    return out


# ---------------------------------------------------------------- contours

def contour(t: OrderedTree) -> list:
    """Depth of the depth-first exploration particle at integer times."""
    values = [0]
    stack = [(t, 0)]
    depth = 0
    while stack:
        node, i = stack.pop()
        if i < len(node.children):
            stack.append((node, i + 1))
            stack.append((node.children[i], 0))
            depth += 1
            values.append(depth)
        elif stack:
            depth -= 1
            values.append(depth)
    return values


def check_contour(c: Sequence[int]) -> None:
    if len(c) == 0 or len(c) % 2 == 0:
        raise TreeError("contour must have odd length")
    if c[0] != 0 or c[-1] != 0:
        raise TreeError("contour must start and end at 0")
    for s in range(len(c) - 1):
        if abs(c[s + 1] - c[s]) != 1:
            raise TreeError(f"non-unit step at time {s}")
        if c[s + 1] < 0:
            raise TreeError(f"negative value at time {s + 1}")


def tree_from_contour(c: Sequence[int]) -> OrderedTree:
    check_contour(c)
    stack: list[list] = [[]]
    for s in range(len(c) - 1):
        if c[s + 1] > c[s]:
            stack.append([])
        else:
            node = OrderedTree(stack.pop())
            stack[-1].append(node)
    return OrderedTree(stack[0])


def contour_max(c: Sequence[int]) -> int:
    return max(c)


def contour_theta(c: Sequence[int], r: int) -> list:
    """Excursion of c above level Γ(c) - r that contains the first maximum, shifted to 0."""
    top = max(c)
    if r <= 0 or r > top:
        raise TreeError(f"r={r} outside (0, {top}]")
    s_max = c.index(top)
    level = top - r
    lo = 0
    for s in range(s_max, -1, -1):
        if c[s] < level:
            lo = s + 1
            break
    hi = len(c) - 1
    for s in range(s_max, len(c)):
        if c[s] < level:
            hi = s - 1
            break
    return [x - level for x in c[lo:hi + 1]]


def contour_distance(c: Sequence[int], p: int, q: int) -> int:
    """Graph distance between the vertices visited at times p and q."""
    if p > q:
        p, q = q, p
    if p < 0 or q >= len(c):
        raise TreeError(f"times ({p}, {q}) outside [0, {len(c) - 1}]")
    return c[p] + c[q] - 2 * min(c[p:q + 1])


def reroot_contour(c: Sequence[int], t0: int) -> list:
    """Contour of the same tree seen from the vertex visited at time t0.

    Value at s is the distance between the vertices visited at times
    t0 mod ζ and (t0 + s) mod ζ, for s = 0, ..., ζ.
    """
    zeta = len(c) - 1
    if t0 < 0 or t0 > zeta:
        raise TreeError(f"t0={t0} outside [0, {zeta}]")
    if zeta == 0:
        return [0]
    a = t0 % zeta
    # running minima from a outwards in both directions
    fwd = [0] * (zeta + 1)
    m = c[a]
    for b in range(a, zeta + 1):
        m = min(m, c[b])
        fwd[b] = m
    m = c[a]
    for b in range(a, -1, -1):
        m = min(m, c[b])
        fwd[b] = m
    out = []
    for s in range(zeta + 1):
        b = (a + s) % zeta
        out.append(c[a] + c[b] - 2 * fwd[b])
    return out


# ---------------------------------------------------------------- enumeration

def trees_with_degrees(max_height: int, degrees, max_size: int | None = None) -> list:
    """All trees of height ≤ max_height whose child counts lie in ``degrees``.

    With ``max_size`` only trees with at most that many vertices are kept;
    without it the degree set must be finite.
    """
    degrees = sorted(set(degrees))
    if 0 not in degrees:
        return []
    level = [LEAF]
    for _ in range(max_height):
        nxt = [LEAF]
        for d in degrees:
            if d == 0:
                continue
            budget = None if max_size is None else max_size - 1
            for seq in _sequences(level, d, budget):
                nxt.append(OrderedTree(seq))
        level = nxt
    return level


def _sequences(pool: list, length: int, budget):
    """Ordered length-tuples from pool with total size ≤ budget (None: no bound)."""
    if budget is not None:
        pool = [t for t in pool if t.size <= budget]
        smallest = min((t.size for t in pool), default=0)
    out = [((), 0)]
    for step in range(length):
        remaining = length - step - 1
        nxt = []
        for seq, used in out:
            for t in pool:
                total = used + t.size
                if budget is not None and total + remaining * smallest > budget:
                    continue
                nxt.append((seq + (t,), total))
        out = nxt
    return [seq for seq, _ in out]


def enumerate_ordered_trees_upto(max_size: int) -> list:
    """All ordered trees with at most max_size vertices, by increasing size."""
    by_size: list = [[], [LEAF]]
    for n in range(2, max_size + 1):
        # a tree of size n: first subtree of size j, the rest (a tree of size n - j)
        level = []
        for j in range(1, n):
            for first in by_size[j]:
                for rest in by_size[n - j]:
                    level.append(OrderedTree((first,) + rest.children))
        by_size.append(level)
    return [t for level in by_size for t in level]
