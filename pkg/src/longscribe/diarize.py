"""
Clustering-based diarization on precomputed speaker embeddings.

Frames are windows of a recording (1.5 s long, every 0.75 s by default),
each with one embedding vector. They are clustered with HDBSCAN, clusters
whose centroids are too similar are merged, and the frame labels are turned
into speaker turns.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from longscribe.errors import BadParams, DimensionMismatch, LengthMismatch, SchemaError
from longscribe.transcript import Segment

__all__ = [
    'EmbeddingFrame',
    'ClusterResult',
    'CondensedTree',
    'make_windows',
    'hdbscan',
    'condensed_tree',
    'select_eom',
    'merge_clusters',
    'frames_to_turns',
    'cosine_similarity',
    'load_embeddings',
]

DEFAULT_WINDOW = 1.5
DEFAULT_HOP = 0.75
DEFAULT_MIN_CLUSTER_SIZE = 4
DEFAULT_MIN_SAMPLES = 2
DEFAULT_MERGE_THRESHOLD = 0.67


@dataclass(frozen=True, eq=False)
class EmbeddingFrame:
    start: float
    end: float
    vector: np.ndarray

    def __post_init__(self):
        vector = np.asarray(self.vector, dtype=np.float64)
        if vector.ndim != 1:
            raise ValueError('frame vector must be one-dimensional')
        if not np.all(np.isfinite(vector)):
            raise ValueError(f'frame [{self.start}, {self.end}] has non-finite values')
        if not (math.isfinite(self.start) and math.isfinite(self.end)) or self.end - self.start <= 0:
            raise ValueError(f'frame needs end > start, got [{self.start}, {self.end}]')
        object.__setattr__(self, 'vector', vector)


def make_windows(total_duration: float, window: float = DEFAULT_WINDOW, hop: float = DEFAULT_HOP):
    """Frame intervals ``[i*hop, i*hop + window]`` covering the recording.

    Windows running past ``total_duration`` are cut there when that leaves
    more than one hop of audio, otherwise they are dropped.

    >>> make_windows(3.0)
    [(0.0, 1.5), (0.75, 2.25), (1.5, 3.0)]
    """
    if not (window > 0 and 0 < hop <= window and total_duration >= 0):
        raise BadParams(f'need window > 0, 0 < hop <= window, duration >= 0 '
                        f'(got {window}, {hop}, {total_duration})')
    out = []
    i = 0
    while i * hop < total_duration:
        start = i * hop
        end = start + window
        if end > total_duration:
            if total_duration - start <= hop:
                break
            end = float(total_duration)
        out.append((start, end))
        i += 1
    return out


# --------------------------------------------------------------------------
# HDBSCAN

def _as_matrix(frames):
    if isinstance(frames, np.ndarray):
        X = np.asarray(frames, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch('data must be a 2-d array')
        return X
    dims = {len(f.vector) for f in frames}
    if len(dims) > 1:
        raise DimensionMismatch(f'frames have different dimensions: {sorted(dims)}')
    if not frames:
        return np.zeros((0, 0))
    return np.stack([f.vector for f in frames])


def _distances(X, metric):
    if metric == 'cosine':
        if np.any(np.linalg.norm(X, axis=1) == 0):
            raise ValueError('cosine distance is undefined for zero vectors')
        D = squareform(pdist(X, 'cosine'))
        np.clip(D, 0.0, 2.0, out=D)
    elif metric == 'euclidean':
        D = squareform(pdist(X, 'euclidean'))
    else:
        raise ValueError(f'unknown metric {metric!r}')
    return D


def _mutual_reachability(D, min_samples):
    n = len(D)
    # The point itself counts as its first neighbour.
    k = min(min_samples, n) - 1
    core = np.partition(D, k, axis=1)[:, k]
    return np.maximum(D, np.maximum(core[:, None], core[None, :]))


def _minimum_spanning_tree(M):
    """Prim on a dense matrix. Edges come back as (weight, lo, hi), sorted."""
    n = len(M)
    if n < 2:
        return []
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = M[0].copy()
    parent = np.zeros(n, dtype=np.int64)
    best[0] = np.inf
    edges = []
    for _ in range(n - 1):
        candidates = np.where(in_tree, np.inf, best)
        v = int(np.argmin(candidates))
        u = int(parent[v])
        edges.append((float(M[u, v]), min(u, v), max(u, v)))
        in_tree[v] = True
        closer = (~in_tree) & (M[v] < best)
        best[closer] = M[v][closer]
        parent[closer] = v
    edges.sort()
    return edges


@dataclass
class _Node:
    distance: float
    children: list
    size: int


def _linkage(n, edges):
    """Single-linkage tree; edges of equal weight merge at once (multi-way nodes).

    Returns the list of internal nodes (ids n, n+1, ...) and the root id.
    Grouping ties makes the tree depend only on the threshold graphs, not
    on which of several equally light spanning trees was found.
    """
    parent = list(range(n))
    comp_node = list(range(n))
    sizes = [1] * n

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    nodes = []
    k = 0
    while k < len(edges):
        w = edges[k][0]
        group = []
        while k < len(edges) and edges[k][0] == w:
            group.append(edges[k])
            k += 1
        local = {}

        def lfind(x):
            while local.get(x, x) != x:
                x = local[x]
            return x

        for _, u, v in group:
            a, b = lfind(find(u)), lfind(find(v))
            if a != b:
                local[max(a, b)] = min(a, b)
        members = {}
        for r in {find(u) for _, u, _ in group} | {find(v) for _, _, v in group}:
            members.setdefault(lfind(r), []).append(r)
        for top in sorted(members):
            roots = sorted(members[top])
            if len(roots) < 2:
                continue
            node_id = n + len(nodes)
            size = sum(sizes[r] for r in roots)
            nodes.append(_Node(w, [comp_node[r] for r in roots], size))
            for r in roots[1:]:
                parent[r] = roots[0]
            sizes[roots[0]] = size
            comp_node[roots[0]] = node_id
    root = n + len(nodes) - 1 if nodes else 0
    return nodes, root


@dataclass
class CondensedCluster:
    id: int
    parent: int
    birth: float
    node: int
    points: list = field(default_factory=list)
    fallen: list = field(default_factory=list)
    children: list = field(default_factory=list)
    stability: float = 0.0


@dataclass
class CondensedTree:
    """Clusters of the condensed hierarchy; ``clusters[0]`` is the root (if any)."""
    n: int
    clusters: list

    def is_ancestor(self, a, b):
        while b != -1:
            b = self.clusters[b].parent
            if b == a:
                return True
        return False


def _lambda(distance):
    return math.inf if distance == 0 else 1.0 / distance


def condensed_tree(frames, min_cluster_size: int = DEFAULT_MIN_CLUSTER_SIZE,
                   min_samples: int = DEFAULT_MIN_SAMPLES, metric: str = 'cosine') -> CondensedTree:
    if min_cluster_size < 2 or min_samples < 1:
        raise BadParams('need min_cluster_size >= 2 and min_samples >= 1')
    X = _as_matrix(frames)
    n = len(X)
    if n < min_cluster_size:
        return CondensedTree(n, [])
    M = _mutual_reachability(_distances(X, metric), min_samples)
    nodes, root = _linkage(n, _minimum_spanning_tree(M))

    def size(x):
        return 1 if x < n else nodes[x - n].size

    def leaves(x):
        out, stack = [], [x]
        while stack:
            y = stack.pop()
            if y < n:
                out.append(y)
            else:
                stack.extend(nodes[y - n].children)
        return out

    clusters = [CondensedCluster(0, -1, 0.0, root, sorted(leaves(root)))]
    queue = [(0, root)]
    while queue:
        cid, x = queue.pop()
        c = clusters[cid]
        while True:
            if x < n:
                c.fallen.append((x, math.inf))
                break
            node = nodes[x - n]
            lam = _lambda(node.distance)
            big = [ch for ch in node.children if size(ch) >= min_cluster_size]
            for ch in node.children:
                if size(ch) < min_cluster_size or len(big) == 0:
                    c.fallen.extend((p, lam) for p in leaves(ch))
            if len(big) >= 2:
                for ch in big:
                    child = CondensedCluster(len(clusters), cid, lam, ch, sorted(leaves(ch)))
                    clusters.append(child)
                    c.children.append(child.id)
                    queue.append((child.id, ch))
                break
            if len(big) == 1:
                x = big[0]
                continue
            break

    for c in clusters:
        stability = sum(lam - c.birth for _, lam in c.fallen)
        for child in c.children:
            stability += len(clusters[child].points) * (clusters[child].birth - c.birth)
        c.stability = stability
    return CondensedTree(n, clusters)


def select_eom(tree: CondensedTree) -> list:
    """Excess-of-mass selection; on ties the children win over their parent."""
    value = {}
    chosen = {}
    for c in reversed(tree.clusters):
        if not c.children:
            value[c.id], chosen[c.id] = c.stability, [c.id]
            continue
        below = sum(value[ch] for ch in c.children)
        if below >= c.stability:
            value[c.id] = below
            chosen[c.id] = [x for ch in c.children for x in chosen[ch]]
        else:
            value[c.id], chosen[c.id] = c.stability, [c.id]
    return sorted(chosen[0]) if tree.clusters else []


@dataclass(frozen=True, eq=False)
class ClusterResult:
    """Per-frame labels (-1 = noise), per-cluster mean vectors, and the clustered data."""
    labels: np.ndarray
    centroids: np.ndarray
    data: np.ndarray

    @property
    def k(self) -> int:
        return len(self.centroids)

    @property
    def noise_fraction(self) -> float:
        return float(np.mean(self.labels < 0)) if len(self.labels) else 0.0


def _canonical(labels, data):
    """Relabel clusters 0..k-1 by first member index and recompute centroids."""
    labels = np.asarray(labels, dtype=np.int64)
    order = []
    for label in labels:
        if label >= 0 and label not in order:
            order.append(int(label))
    remap = {old: new for new, old in enumerate(order)}
    out = np.array([remap.get(int(x), -1) for x in labels], dtype=np.int64)
    dim = data.shape[1] if data.ndim == 2 else 0
    centroids = np.zeros((len(order), dim))
    for new in range(len(order)):
        centroids[new] = data[out == new].mean(axis=0)
    return ClusterResult(out, centroids, data)


def hdbscan(frames, min_cluster_size: int = DEFAULT_MIN_CLUSTER_SIZE,
            min_samples: int = DEFAULT_MIN_SAMPLES, metric: str = 'cosine') -> ClusterResult:
    """Density clustering of embedding frames.

    Core distance is the distance to the ``min_samples``-th nearest
    neighbour counting the point itself; the single-linkage tree over
    mutual reachability distances is condensed at ``min_cluster_size`` and
    clusters are picked by excess of mass. The root may be selected, so a
    single-speaker recording yields one cluster.
    """
    X = _as_matrix(frames)
    tree = condensed_tree(X, min_cluster_size, min_samples, metric)
    labels = np.full(len(X), -1, dtype=np.int64)
    for label, cid in enumerate(select_eom(tree)):
        labels[tree.clusters[cid].points] = label
    return _canonical(labels, X)


def cosine_similarity(a, b) -> float:
    """Cosine similarity; 0 when either vector is zero."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def merge_clusters(c: ClusterResult, threshold: float = DEFAULT_MERGE_THRESHOLD) -> ClusterResult:
    """Greedily merge the most similar centroid pair while its cosine similarity exceeds ``threshold``.

    After every merge the centroid is recomputed from all member vectors and
    labels are renumbered by first member. Ties go to the lowest label pair.
    Noise frames are left alone.
    """
    result = c
    while result.k >= 2:
        best, pair = -math.inf, None
        for i in range(result.k):
            for j in range(i + 1, result.k):
                sim = cosine_similarity(result.centroids[i], result.centroids[j])
                if sim > best:
                    best, pair = sim, (i, j)
        if not best > threshold:
            break
        i, j = pair
        labels = result.labels.copy()
        labels[labels == j] = i
        result = _canonical(labels, result.data)
    return result


def frames_to_turns(frames, labels) -> list:
    """Speaker turns from per-frame labels.

    Overlapping frames split their overlap at its midpoint, so each frame
    owns a disjoint span. Consecutive frames with the same non-noise label
    and touching spans form one turn named ``Speaker <label + 1>``.
    """
    labels = list(labels)
    if len(labels) != len(frames):
        raise LengthMismatch(f'{len(frames)} frames but {len(labels)} labels')
    n = len(frames)
    spans = []
    for i, f in enumerate(frames):
        lo, hi = f.start, f.end
        if i > 0 and frames[i - 1].end > f.start:
            lo = (frames[i - 1].end + f.start) / 2
        if i + 1 < n and frames[i + 1].start < f.end:
            hi = (f.end + frames[i + 1].start) / 2
        spans.append((lo, max(lo, hi)))

    turns = []
    current = None
    for (lo, hi), label in zip(spans, labels):
        label = int(label)
        if label < 0:
            current = None
            continue
        if current is not None and current[0] == label and current[2] == lo:
            current[2] = hi
            continue
        current = [label, lo, hi]
        turns.append(current)
    return [Segment(f'Speaker {label + 1}', lo, hi) for label, lo, hi in turns]


def load_embeddings(text: str):
    """Parse an embeddings document into ``(recording_id, frames)``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f'invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}') from None
    if not isinstance(doc, dict) or not isinstance(doc.get('frames'), list):
        raise SchemaError('embeddings document needs a "frames" list')
    recording_id = doc.get('recording_id', '')
    dim = doc.get('dim')
    if not isinstance(recording_id, str):
        raise SchemaError('"recording_id" must be a string')
    if dim is not None and (not isinstance(dim, int) or isinstance(dim, bool) or dim < 1):
        raise SchemaError('"dim" must be a positive integer')
    frames = []
    for index, record in enumerate(doc['frames']):
        if not isinstance(record, dict):
            raise SchemaError('frame must be an object', index)
        try:
            start, end, vector = record['start'], record['end'], record['vector']
        except KeyError as e:
            raise SchemaError(f'missing field {e.args[0]!r}', index) from None
        if not isinstance(vector, list) or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in [start, end, *vector]):
            raise SchemaError('start, end and vector entries must be numbers', index)
        if dim is not None and len(vector) != dim:
            raise DimensionMismatch(f'record {index}: vector has {len(vector)} entries, expected {dim}')
        try:
            frames.append(EmbeddingFrame(float(start), float(end), vector))
        except ValueError as e:
            raise SchemaError(str(e), index) from None
    frames.sort(key=lambda f: (f.start, f.end))
    return recording_id, frames
