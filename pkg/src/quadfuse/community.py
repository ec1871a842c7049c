"""Hashtag co-occurrence graph, centralities, communities, sunburst export.

The graph algorithms are implemented directly (single-source BFS
accumulation for betweenness, triangle counting for clustering, greedy
agglomerative modularity maximization for communities) so they can be
checked against brute-force oracles on small graphs.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path


class CommunityError(ValueError):
    pass


class HashtagGraph:
    """Undirected weighted co-occurrence graph over unique hashtags."""

    def __init__(self):
        self.node_freq: Counter = Counter()
        self._adj: dict[str, dict[str, int]] = {}

    # -- construction ------------------------------------------------------
    def add_node(self, tag: str, freq: int = 0) -> None:
        self.node_freq[tag] += freq
        self._adj.setdefault(tag, {})

    def add_edge(self, a: str, b: str, weight: int = 1) -> None:
        if a == b:
            return  # no self-loops
        self.add_node(a)
        self.add_node(b)
        self._adj[a][b] = self._adj[a].get(b, 0) + weight
        self._adj[b][a] = self._adj[b].get(a, 0) + weight

    # -- queries -----------------------------------------------------------
    def nodes(self) -> list:
        return sorted(self._adj)

    def neighbors(self, tag: str) -> dict:
        return self._adj[tag]

    def edge_weight(self, a: str, b: str) -> int:
        return self._adj.get(a, {}).get(b, 0)

    def edges(self):
        """Unordered edges as (a, b, weight), a < b, sorted."""
        for a in sorted(self._adj):
            for b in sorted(self._adj[a]):
                if a < b:
                    yield a, b, self._adj[a][b]

    def degree(self, tag: str) -> int:
        return len(self._adj[tag])

    def n_nodes(self) -> int:
        return len(self._adj)

    def total_edge_weight(self) -> float:
        return sum(w for _, _, w in self.edges())


def build_graph(posts) -> HashtagGraph:
    """Nodes are unique hashtags; same-post co-mention adds 1 to the edge."""
    g = HashtagGraph()
    for tags in posts:
        tags = sorted(set(tags))
        for t in tags:
            g.add_node(t, freq=1)
        for i, a in enumerate(tags):
            for b in tags[i + 1:]:
                g.add_edge(a, b, 1)
    return g


def betweenness(g: HashtagGraph) -> dict:
    """Brandes' algorithm on unweighted shortest paths.

    Normalized by (n-1)(n-2)/2, the pair count for undirected graphs, so a
    pure bridge node scores 1.0.
    """
    nodes = g.nodes()
    score = {v: 0.0 for v in nodes}
    for source in nodes:
        # single-source shortest-path counts
        stack = []
        preds = {v: [] for v in nodes}
        sigma = {v: 0.0 for v in nodes}
        dist = {v: -1 for v in nodes}
        sigma[source] = 1.0
        dist[source] = 0
        queue = deque([source])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in g.neighbors(v):
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        # dependency accumulation in reverse topological order
        delta = {v: 0.0 for v in nodes}
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != source:
                score[w] += delta[w]
    n = len(nodes)
    if n > 2:
        norm = (n - 1) * (n - 2)  # ordered-pair accumulation / 2 / pair count
        for v in score:
            score[v] /= norm
    else:
        score = {v: 0.0 for v in nodes}
    return score


def clustering_coefficient(g: HashtagGraph) -> dict:
    """Local coefficient 2T / (deg (deg - 1)); 0 below degree 2."""
    out = {}
    for v in g.nodes():
        neigh = sorted(g.neighbors(v))
        d = len(neigh)
        if d < 2:
            out[v] = 0.0
            continue
        triangles = 0
        for i, a in enumerate(neigh):
            for b in neigh[i + 1:]:
                if g.edge_weight(a, b) > 0:
                    triangles += 1
        out[v] = 2.0 * triangles / (d * (d - 1))
    return out


@dataclass
class CommunityPartition:
    clusters: list          # list of frozensets, full membership
    modularity: float
    reported: list          # per cluster, <= max_nodes most frequent tags

    def cluster_of(self, tag: str) -> int:
        for i, cluster in enumerate(self.clusters):
            if tag in cluster:
                return i
        raise KeyError(tag)


def modularity(g: HashtagGraph, clusters) -> float:
    """Standard weighted modularity of a partition, computed from scratch."""
    m = g.total_edge_weight()
    if m == 0:
        return 0.0
    strength = {v: sum(g.neighbors(v).values()) for v in g.nodes()}
    q = 0.0
    for cluster in clusters:
        members = set(cluster)
        internal = sum(w for a, b, w in g.edges() if a in members and b in members)
        total_strength = sum(strength[v] for v in members)
        q += internal / m - (total_strength / (2.0 * m)) ** 2
    return q


def detect_communities(g: HashtagGraph, max_nodes_per_cluster: int = 10) -> CommunityPartition:
    """Greedy agglomerative modularity maximization.

    Starts from singletons and merges the connected community pair with the
    largest positive modularity gain; ties break on the lexicographically
    smallest representative pair, so the result is deterministic.
    """
    nodes = g.nodes()
    if not nodes:
        return CommunityPartition(clusters=[], modularity=0.0, reported=[])
    m = g.total_edge_weight()
    if m == 0:
        clusters = [frozenset([v]) for v in nodes]
        return CommunityPartition(clusters=clusters, modularity=0.0,
                                  reported=_report(g, clusters, max_nodes_per_cluster))

    # community state: representative -> members / total strength
    members = {v: {v} for v in nodes}
    strength = {v: float(sum(g.neighbors(v).values())) for v in nodes}
    # inter-community weights (representative pairs)
    between = {}
    for a, b, w in g.edges():
        between[(min(a, b), max(a, b))] = float(w)

    def gain(pair):
        e_ab = between[pair]
        return 2.0 * (e_ab / (2.0 * m) - (strength[pair[0]] * strength[pair[1]]) / (2.0 * m) ** 2)

    while between:
        best = max(between, key=lambda p: (gain(p), p[0], p[1]))
        if gain(best) <= 0:
            break
        keep, absorb = best
        members[keep] |= members.pop(absorb)
        strength[keep] += strength.pop(absorb)
        merged = {}
        for (a, b), w in between.items():
            if (a, b) == best:
                continue
            a = keep if a == absorb else a
            b = keep if b == absorb else b
            if a == b:
                continue
            key = (min(a, b), max(a, b))
            merged[key] = merged.get(key, 0.0) + w
        between = merged

    clusters = sorted((frozenset(s) for s in members.values()), key=lambda c: sorted(c)[0])
    return CommunityPartition(clusters=clusters, modularity=modularity(g, clusters),
                              reported=_report(g, clusters, max_nodes_per_cluster))


def _report(g: HashtagGraph, clusters, max_nodes: int) -> list:
    reported = []
    for cluster in clusters:
        ranked = sorted(cluster, key=lambda t: (-g.node_freq[t], t))
        reported.append(ranked[:max_nodes])
    return reported


# ---------------------------------------------------------------------------
# grouping lexicons + sunburst export

_DATA_PACKAGE = "quadfuse.data"
DRUG_TAXONOMY_FILE = "drug_types.txt"
PLACE_LEXICON_FILE = "places.txt"


def load_lexicon(path: str | Path | None = None, resource: str = DRUG_TAXONOMY_FILE) -> dict:
    """tag -> group mapping from an editable ``group: tag tag ...`` text file."""
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
    else:
        text = resources.files(_DATA_PACKAGE).joinpath(resource).read_text(encoding="utf-8")
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise CommunityError(f"lexicon line {lineno}: expected 'group: tags'")
        group, _, tags = line.partition(":")
        for tag in tags.split():
            mapping[tag.strip().lower()] = group.strip()
    return mapping


def sunburst_export(posts, grouping: str = "drug_type", seed_tag: str | None = None,
                    taxonomy_path: str | Path | None = None,
                    place_path: str | Path | None = None) -> dict:
    """Two-level JSON tree {name, value, children[]} of grouped tag counts.

    drug_type mode groups every hashtag by the drug taxonomy (unmatched tags
    fall into "other"). geography mode keeps only posts mentioning
    ``seed_tag`` and only place hashtags, grouped by region. Values are
    fractions of the level total, so each level sums to 1.
    """
    if grouping not in ("drug_type", "geography"):
        raise CommunityError(f"unknown grouping {grouping!r}")
    posts = [set(p) for p in posts]
    if grouping == "geography":
        if not seed_tag:
            raise CommunityError("geography grouping requires seed_tag")
        lexicon = load_lexicon(place_path, PLACE_LEXICON_FILE)
        seed = seed_tag.lstrip("#").lower()
        counts = Counter()
        groups = {}
        for tags in posts:
            if seed not in tags:
                continue
            for tag in tags:
                if tag in lexicon:
                    counts[tag] += 1
                    groups[tag] = lexicon[tag]
    else:
        lexicon = load_lexicon(taxonomy_path, DRUG_TAXONOMY_FILE)
        counts = Counter()
        groups = {}
        for tags in posts:
            for tag in tags:
                counts[tag] += 1
                groups[tag] = lexicon.get(tag, "other")
    total = sum(counts.values())
    if total == 0:
        raise CommunityError("empty corpus")

    by_group: dict[str, list] = {}
    for tag, count in counts.items():
        by_group.setdefault(groups[tag], []).append((tag, count))
    children = []
    for group in sorted(by_group, key=lambda gr: (-sum(c for _, c in by_group[gr]), gr)):
        tag_children = [
            {"name": tag, "value": count / total}
            for tag, count in sorted(by_group[group], key=lambda tc: (-tc[1], tc[0]))
        ]
        children.append({
            "name": group,
            "value": sum(c["value"] for c in tag_children),
            "children": tag_children,
        })
    return {"name": grouping, "value": 1.0, "children": children}


def save_sunburst(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def save_edge_list(g: HashtagGraph, path: str | Path) -> None:
    """Plain text export: tag, tag, weight per line, tab-separated."""
    lines = [f"{a}\t{b}\t{w}" for a, b, w in g.edges()]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
