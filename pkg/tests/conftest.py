from collections import deque

from hypothesis import strategies as st

from planetrees.ordered_tree import OrderedTree


def _build(children):
    return OrderedTree(children)


trees = st.recursive(
    st.just(OrderedTree()),
    lambda inner: st.lists(inner, min_size=1, max_size=4).map(_build),
    max_leaves=30,
)


def bfs_distances(t):
    """All-pairs graph distances of an ordered tree, vertices in preorder."""
    adj = []
    stack = [(t, None)]
    while stack:
        node, parent = stack.pop()
        v = len(adj)
        adj.append([])
        if parent is not None:
            adj[v].append(parent)
            adj[parent].append(v)
        for c in reversed(node.children):
            stack.append((c, v))
    # preorder ids come out in pop order, which is preorder
    n = len(adj)
    out = []
    for s in range(n):
        dist = [-1] * n
        dist[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for w in adj[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    q.append(w)
        out.append(dist)
    return out


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
