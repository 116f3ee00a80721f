"""Plane trees: canonical codes, centers, central edges and the center decomposition.

A plane tree is stored through one of its edge-rootings, an ordered tree whose
root is the tail of the marked oriented edge and whose first child is its
head.  The canonical code of a plane tree is the smallest parenthesis string
among all its edge-rootings ('(' sorts before ')').

Edge-rootings of a fixed tree are the cyclic shifts of its contour walk: the
walk around the tree started at the k-th step is the depth-first exploration
of the tree rooted at the oriented edge traversed at that step.  Re-reading
the shifted walk as a parenthesis word (an edge is opened the first time it
is crossed) gives the code of that rooting.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import comb
from typing import Iterable, Optional

import numpy as np
from sympy import divisors, totient

from .offspring import OffspringDistribution, OffspringError
from .ordered_tree import OrderedTree, nu, parse_tree, trees_with_degrees


class PlaneTreeError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class PlaneCode:
    canonical: OrderedTree
    n_vertices: int

    def __str__(self):
        return self.canonical.code


@dataclass(frozen=True)
class EdgeRootedCode:
    code: OrderedTree
    is_central: bool

    def __str__(self):
        return self.code.code


# ---------------------------------------------------------------- graph view

class PlaneGraph:
    """Vertices 0..n-1 (preorder of the source tree) with cyclically ordered neighbours.

    For a non-root vertex the cyclic order is (parent, children...); for the
    root it is (children...).  This is the rotation system of the embedding.
    """

    def __init__(self, t: OrderedTree):
        adj: list[list[int]] = []
        stack = [(t, -1)]
        while stack:
            node, parent = stack.pop()
            v = len(adj)
            adj.append([] if parent < 0 else [parent])
            if parent >= 0:
                adj[parent].append(v)
            for c in reversed(node.children):
                stack.append((c, v))
        self.adj = adj
        self.n = len(adj)

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def edges(self) -> list:
        """All oriented edges (tail, head)."""
        return [(a, b) for a in range(self.n) for b in self.adj[a]]

    def root_at(self, a: int, b: int) -> OrderedTree:
        """The ordered tree (t, ε)_o for ε = (a, b)."""
        adj = self.adj
        i = adj[a].index(b)
        kids = {a: adj[a][i:] + adj[a][:i]}
        order = [a]
        stack = [(a, -1)]
        parent = {a: -1}
        while stack:
            v, _ = stack.pop()
            for w in reversed(kids[v]):
                parent[w] = v
                nb = adj[w]
                j = nb.index(v)
                kids[w] = nb[j + 1:] + nb[:j]
                order.append(w)
                stack.append((w, v))
        built: dict[int, OrderedTree] = {}
        for v in reversed(order):
            built[v] = OrderedTree([built[w] for w in kids[v]])
        return built[a]

    def distances(self, src: int) -> list:
        dist = [-1] * self.n
        dist[src] = 0
        queue = [src]
        for v in queue:
            for w in self.adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        return dist

    def diametral_path(self) -> list:
        d0 = self.distances(0)
        x = max(range(self.n), key=lambda v: d0[v])
        dist = [-1] * self.n
        prev = [-1] * self.n
        dist[x] = 0
        queue = [x]
        for v in queue:
            for w in self.adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    prev[w] = v
                    queue.append(w)
        y = max(range(self.n), key=lambda v: dist[v])
        path = [y]
        while path[-1] != x:
            path.append(prev[path[-1]])
        return path

    def diameter_and_centers(self):
        path = self.diametral_path()
        d = len(path) - 1
        if d % 2:
            centers = tuple(sorted((path[(d - 1) // 2], path[(d + 1) // 2])))
        else:
            centers = (path[d // 2],)
        return d, centers

    def central_edges(self) -> list:
        if self.n < 2:
            raise PlaneTreeError("a single vertex has no edges")
        d, centers = self.diameter_and_centers()
        if d % 2:
            c1, c2 = centers
            return sorted([(c1, c2), (c2, c1)])
        c = centers[0]
        # depth of the branch reached through each neighbour of c
        branch = [-1] * self.n
        dist = [-1] * self.n
        dist[c] = 0
        depth = {w: 0 for w in self.adj[c]}
        queue = []
        for w in self.adj[c]:
            dist[w] = 1
            branch[w] = w
            depth[w] = 1
            queue.append(w)
        for v in queue:
            for w in self.adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    branch[w] = branch[v]
                    depth[branch[w]] = max(depth[branch[w]], dist[w])
                    queue.append(w)
        return sorted((v, c) for v in self.adj[c] if depth[v] == d // 2)


def contour_steps(t: OrderedTree) -> list:
    """Oriented edge (tail, head) crossed at each step of the contour, in preorder ids."""
    steps = []
    counter = 0
    stack = [(t, 0, 0)]  # node, next child index, id
    while stack:
        node, i, v = stack.pop()
        if i < len(node.children):
            stack.append((node, i + 1, v))
            counter += 1
            w = counter
            steps.append((v, w))
            stack.append((node.children[i], 0, w))
        elif stack:
            steps.append((v, stack[-1][2]))
    return steps


# ---------------------------------------------------------------- canonical codes

def rotation_codes(t: OrderedTree) -> list:
    """Codes of the edge-rootings obtained from each cyclic shift of the contour walk."""
    code = t.code
    inner = code[1:-1]
    size = len(inner)
    if size == 0:
        raise PlaneTreeError("a single vertex has no edge to root at")
    partner = [0] * size
    opened = []
    for i, ch in enumerate(inner):
        if ch == "(":
            opened.append(i)
        else:
            j = opened.pop()
            partner[i] = j
            partner[j] = i
    out = []
    for k in range(size):
        chars = []
        for i in range(size):
            j = k + i
            if j >= size:
                j -= size
            rel = partner[j] - k
            if rel < 0:
                rel += size
            chars.append("(" if rel > i else ")")
        out.append("(" + "".join(chars) + ")")
    return out


def canonicalize(t: OrderedTree) -> PlaneCode:
    if t.size < 2:
        raise PlaneTreeError("a single vertex has no edge to root at")
    best = min(rotation_codes(t))
    if best == t.code:
        return PlaneCode(t, t.size)
    return PlaneCode(parse_tree(best), t.size)


def rootings(pc) -> set:
    """All distinct edge-rooted codes (t, ε)_o of a plane tree, built from the rotation system."""
    t = pc.canonical if isinstance(pc, PlaneCode) else pc
    g = PlaneGraph(t)
    return {g.root_at(a, b) for a, b in g.edges()}


def marked_edge_index(pc: PlaneCode, rooted: OrderedTree) -> int:
    """Smallest contour step of the canonical code whose rooting equals ``rooted``."""
    for k, code in enumerate(rotation_codes(pc.canonical)):
        if code == rooted.code:
            return k
    raise PlaneTreeError("rooted code is not a rooting of this plane tree")


# ---------------------------------------------------------------- metric structure

def _tree(x) -> OrderedTree:
    if isinstance(x, PlaneCode):
        return x.canonical
    if isinstance(x, EdgeRootedCode):
        return x.code
    return x


def diameter(x) -> int:
    t = _tree(x)
    if t.size == 1:
        return 0
    return len(PlaneGraph(t).diametral_path()) - 1


def diameter_and_centers(x):
    """(D, centers) with centers given as preorder vertex ids of the stored code."""
    t = _tree(x)
    if t.size == 1:
        return 0, (0,)
    return PlaneGraph(t).diameter_and_centers()


def central_edges(x) -> list:
    return PlaneGraph(_tree(x)).central_edges()


def edge_rooted(x, edge) -> EdgeRootedCode:
    g = PlaneGraph(_tree(x))
    central = tuple(edge) in set(g.central_edges())
    return EdgeRootedCode(g.root_at(*edge), central)


def is_central(t: OrderedTree) -> bool:
    """Whether the root edge of t is central: Γ(T+) - Γ(T-) ∈ {0, 1}."""
    if not t.children:
        return False
    t_plus = t.children[0]
    t_minus_height = max((c.height + 1 for c in t.children[1:]), default=0)
    return t_plus.height - t_minus_height in (0, 1)


def decompose(s):
    """Split a centrally rooted code into (T-, T+)."""
    code = s.code if isinstance(s, EdgeRootedCode) else s
    if isinstance(s, EdgeRootedCode) and not s.is_central:
        raise PlaneTreeError("root edge is not central")
    if not is_central(code):
        raise PlaneTreeError("root edge is not central")
    return OrderedTree(code.children[1:]), code.children[0]


def compose(t1: OrderedTree, t2: OrderedTree) -> EdgeRootedCode:
    """Root t1 and t2 at the two ends of a new edge; t2 hangs from the head."""
    if t2.height - t1.height not in (0, 1):
        raise PlaneTreeError(f"heights {t1.height}, {t2.height} do not differ by 0 or 1")
    return EdgeRootedCode(OrderedTree((t2,) + t1.children), True)


def sym(s) -> int:
    """Number of central edges whose rooting gives the same ordered tree as s."""
    code = s.code if isinstance(s, EdgeRootedCode) else s
    if not is_central(code):
        raise PlaneTreeError("root edge is not central")
    g = PlaneGraph(code)
    return sum(1 for a, b in g.central_edges() if g.root_at(a, b) == code)


def minimal_period(items: list) -> int:
    n = len(items)
    for d in range(1, n + 1):
        if n % d == 0 and all(items[i] == items[(i + d) % n] for i in range(n)):
            return d
    return n


def sym_from_pair(t1: OrderedTree, t2: OrderedTree) -> int:
    """Central symmetry count of compose(t1, t2) from the pair alone.

    Odd diameter: 1 + 1{t1 = t2}.  Even diameter: deg(c)/d with d the minimal
    period of the cyclic list (children subtrees of t2, then t1) around the
    center c.
    """
    if t2.height == t1.height:
        return 2 if t1 == t2 else 1
    around = list(t2.children) + [t1]
    return len(around) // minimal_period(around)


def weight(x, mu: OffspringDistribution):
    """Product over vertices of μ(deg(v) - 1)."""
    t = _tree(x)
    if t.size < 2:
        raise PlaneTreeError("weight is defined for trees with an edge")
    w = mu.pmf(len(t.children) - 1)
    stack = list(t.children)
    while stack:
        node = stack.pop()
        w *= mu.pmf(len(node.children))
        if w == 0:
            return w
        stack.extend(node.children)
    return w


# ---------------------------------------------------------------- enumeration

MAX_ENUMERATION = 13


def dyck_words(m: int) -> np.ndarray:
    """All Dyck words of semilength m as rows of 0 ('(') and 1 (')'), lexicographic order."""
    rows = []
    word = [0] * (2 * m)

    def extend(pos, opened, closed):
        if pos == 2 * m:
            rows.append(word.copy())
            return
        if opened < m:
            word[pos] = 0
            extend(pos + 1, opened + 1, closed)
        if closed < opened:
            word[pos] = 1
            extend(pos + 1, opened, closed + 1)

    extend(0, 0, 0)
    return np.array(rows, dtype=np.int8).reshape(len(rows), 2 * m)


def _canonical_words(words: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Canonical code of each row (a Dyck word) packed into an int, most significant step first."""
    n_rows, size = words.shape
    out = np.empty(n_rows, dtype=np.int64)
    weights = (1 << np.arange(size - 1, -1, -1)).astype(np.int64)
    idx = np.arange(size)
    for lo in range(0, n_rows, chunk):
        w = words[lo:lo + chunk]
        rows = w.shape[0]
        # matching step of each step, via a vectorised stack
        partner = np.zeros((rows, size), dtype=np.int64)
        stack = np.zeros((rows, size), dtype=np.int64)
        top = np.zeros(rows, dtype=np.int64)
        r = np.arange(rows)
        for i in range(size):
            opening = w[:, i] == 0
            stack[r[opening], top[opening]] = i
            top[opening] += 1
            closing = ~opening
            top[closing] -= 1
            j = stack[r[closing], top[closing]]
            partner[r[closing], i] = j
            partner[r[closing], j] = i
        best = None
        for k in range(size):
            j = (idx + k) % size
            rel = (partner[:, j] - k) % size
            bits = (rel < idx).astype(np.int64)
            packed = bits @ weights
            best = packed if best is None else np.minimum(best, packed)
        out[lo:lo + rows] = best
    return out


def _unpack(value: int, size: int) -> str:
    return "(" + "".join(")" if (value >> (size - 1 - i)) & 1 else "(" for i in range(size)) + ")"


def plane_tree_codes(n: int, max_n: int = MAX_ENUMERATION) -> list:
    """Sorted canonical codes of all plane trees with n vertices."""
    if n < 2:
        raise PlaneTreeError("plane trees need at least 2 vertices")
    if n > max_n:
        raise PlaneTreeError(f"n={n} above the enumeration budget {max_n}")
    m = n - 1
    canon = np.unique(_canonical_words(dyck_words(m)))
    return sorted(_unpack(int(v), 2 * m) for v in canon)


def enumerate_plane_trees(n: int, max_n: int = MAX_ENUMERATION) -> set:
    return {PlaneCode(parse_tree(c), n) for c in plane_tree_codes(n, max_n)}


def enumerate_ordered_trees(n: int) -> Iterable[OrderedTree]:
    """All ordered trees with n vertices."""
    if n < 1:
        return
    for row in dyck_words(n - 1):
        yield parse_tree("(" + "".join(")" if x else "(" for x in row) + ")")


def walkup_count(n: int) -> int:
    """Number of plane trees with n edges.

    The four-term expression counts the single-edge tree twice (it evaluates
    to 2 at n = 1), so n = 1 is answered directly.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n == 1:
        return 1
    value = walkup_expression(n)
    if value.denominator != 1:
        raise ArithmeticError(f"Walkup expression not integral at n={n}: {value}")
    return int(value)


def walkup_expression(n: int) -> Fraction:
    total = Fraction(comb(2 * n, n), 2 * n * (n + 1))
    if n % 2:
        total += Fraction(comb(n + 1, (n + 1) // 2), 4 * n)
    total += Fraction(int(totient(n)), n)
    inner = sum(int(totient(n // d)) * comb(2 * d, d) for d in divisors(n) if 1 < d < n)
    total += Fraction(inner, 2 * n)
    return total


# ---------------------------------------------------------------- partition function

def _finite_support(mu: OffspringDistribution) -> list:
    if mu.max_offspring is None:
        raise OffspringError("exact enumeration needs a finitely supported law")
    return mu.support()


def plane_trees_of_diameter(k: int, mu: OffspringDistribution, max_size: Optional[int] = None) -> dict:
    """All plane trees of diameter k with positive μ-weight, mapped to their weight.

    Candidates are built around the center (a vertex for even k, an edge for
    odd k) and deduplicated through their canonical codes.  With max_size
    only trees with at most that many vertices are listed, which also makes
    infinitely supported laws usable.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if max_size is None:
        support = _finite_support(mu)
    else:
        support = [j for j in range(max_size) if mu.pmf(j) > 0]
    found: dict = {}

    def add(t: OrderedTree):
        if max_size is not None and t.size > max_size:
            return
        pc = canonicalize(t)
        if pc not in found:
            if diameter(pc) != k:
                raise AssertionError(f"candidate {t.code} has diameter {diameter(pc)}")
            w = weight(pc, mu)
            if w > 0:
                found[pc] = w

    if k % 2:
        half = (k - 1) // 2
        pool = [t for t in trees_with_degrees(half, support, max_size) if t.height == half]
        for a in pool:
            for b in pool:
                add(OrderedTree(a.children + (b,)))
        return found
    half = k // 2
    pool = trees_with_degrees(half - 1, support, max_size)
    seen = set()
    for deg in sorted(j + 1 for j in support if j + 1 >= 2):
        if max_size is not None and deg + 1 > max_size:
            continue
        for branches in product(pool, repeat=deg):
            if max_size is not None and 1 + sum(b.size for b in branches) > max_size:
                continue
            if sum(1 for b in branches if b.height == half - 1) < 2:
                continue
            codes = tuple(b.code for b in branches)
            key = min(codes[i:] + codes[:i] for i in range(deg))
            if key in seen:
                continue
            seen.add(key)
            add(OrderedTree(branches))
    return found


def pair_sum(k: int, mu: OffspringDistribution):
    """Z_k as a sum over pairs of trees with heights ⌊(k-1)/2⌋ and ⌊k/2⌋.

    Each pair contributes P(t1) P(t2) Sym / |K|, where |K| = 2 for odd k and
    1 + ν(t2) for even k.
    """
    from .gw_sampler import gw_probability

    support = _finite_support(mu)
    h1, h2 = (k - 1) // 2, k // 2
    low = [t for t in trees_with_degrees(h1, support) if t.height == h1]
    high = low if h2 == h1 else [t for t in trees_with_degrees(h2, support) if t.height == h2]
    total = mu._num(0)
    for t1 in low:
        p1 = gw_probability(t1, mu)
        for t2 in high:
            s = sym(compose(t1, t2))
            k_size = 2 if k % 2 else 1 + nu(t2)
            total += p1 * gw_probability(t2, mu) * Fraction(s, k_size) if mu.exact else \
                p1 * gw_probability(t2, mu) * s / k_size
    return total


def partition_function(k: int, mu: OffspringDistribution, method: str = "both"):
    """Z_k(μ), the total μ-weight of plane trees with diameter k."""
    if method == "pair":
        return pair_sum(k, mu)
    direct = sum(plane_trees_of_diameter(k, mu).values(), mu._num(0))
    if method == "direct":
        return direct
    paired = pair_sum(k, mu)
    if mu.exact and direct != paired:
        raise ArithmeticError(f"Z_{k}: direct sum {direct} != pair sum {paired}")
    return direct
