"""Bipartite expander families and discrepancy checks.

A graph here is a d-regular bipartite multigraph with N vertices per side.
It is stored as an ``(N, d)`` slot table: ``adj[u, e]`` is the right vertex
reached from left vertex ``u`` through slot ``e``.  Every right vertex also
has degree d, so the biadjacency matrix has top singular value d and the
quantity of interest is the second singular value ``lam``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from numba import njit


class ExpanderError(ValueError):
    pass


@dataclass(frozen=True)
class ExpanderGraph:
    adj: np.ndarray
    name: str = "graph"
    lam_bound: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return int(self.adj.shape[0])

    @property
    def d(self) -> int:
        return int(self.adj.shape[1])

    def biadjacency(self) -> np.ndarray:
        """Dense edge-count matrix, rows are left vertices."""
        m = np.zeros((self.n, self.n), dtype=np.float64)
        np.add.at(m, (np.repeat(np.arange(self.n), self.d), self.adj.ravel()), 1.0)
        return m

    def right_degrees(self) -> np.ndarray:
        return np.bincount(self.adj.ravel(), minlength=self.n)

    def reverse(self) -> np.ndarray:
        """``(N, d)`` table of left neighbours of each right vertex, in slot order."""
        flat = self.adj.ravel()
        order = np.argsort(flat, kind="stable")
        return (order // self.d).astype(np.int64).reshape(self.n, self.d)


def _check_regular(adj: np.ndarray) -> None:
    n, d = adj.shape
    if adj.min(initial=0) < 0 or adj.max(initial=0) >= n:
        raise ExpanderError("slot target out of range")
    if not np.all(np.bincount(adj.ravel(), minlength=n) == d):
        raise ExpanderError("graph is not regular on the right side")


# base graphs ----------------------------------------------------------------

def complete_graph(n: int) -> ExpanderGraph:
    adj = np.tile(np.arange(n, dtype=np.int64), (n, 1))
    return ExpanderGraph(adj, f"complete-{n}", lam_bound=0.0, meta={"base": "complete"})


def affine_graph(n: int) -> ExpanderGraph:
    """8-regular affine-map graph on a square torus Z_m x Z_m.

    Slots 0..3 follow the four maps (x,y) -> (x+2y, y), (x+2y+1, y),
    (x, y+2x), (x, y+2x+1); slots 4..7 follow their inverses, so the
    biadjacency is symmetric.  Its second singular value is at most 5*sqrt(2).
    """
    m = math.isqrt(n)
    if m * m != n or m < 2:
        raise ExpanderError(f"affine base needs a square size, got {n}")
    x, y = np.divmod(np.arange(n, dtype=np.int64), m)
    fwd = [
        ((x + 2 * y) % m) * m + y,
        ((x + 2 * y + 1) % m) * m + y,
        x * m + (y + 2 * x) % m,
        x * m + (y + 2 * x + 1) % m,
    ]
    inv = []
    for p in fwd:
        q = np.empty_like(p)
        q[p] = np.arange(n)
        inv.append(q)
    adj = np.stack(fwd + inv, axis=1)
    return ExpanderGraph(adj, f"affine-{n}", lam_bound=5 * math.sqrt(2), meta={"base": "affine"})


@njit(cache=True)
def _repair_swaps(perm, taken, k, idx, partners):
    for x in range(idx.size):
        i, j = idx[x], partners[x]
        pi, pj = perm[i], perm[j]
        ok = True
        for t in range(k):
            if taken[t, i] == pj or taken[t, j] == pi:
                ok = False
                break
        if ok:
            perm[i] = pj
            perm[j] = pi


@njit(cache=True)
def _clashes(perm, taken, k):
    bad = np.zeros(perm.size, np.bool_)
    for t in range(k):
        for i in range(perm.size):
            if taken[t, i] == perm[i]:
                bad[i] = True
    return bad


def _repair_permutation(perm: np.ndarray, taken: np.ndarray, k: int, rng) -> np.ndarray:
    """Swap entries of ``perm`` until no left vertex repeats a neighbour.

    ``taken[:k]`` holds the permutations already chosen.
    """
    n = perm.size
    for _ in range(64):
        idx = np.flatnonzero(_clashes(perm, taken, k))
        if idx.size == 0:
            return perm
        partners = rng.integers(0, n, size=idx.size)
        _repair_swaps(perm, taken, k, idx.astype(np.int64), partners.astype(np.int64))
    return perm


def permutation_graph(n: int, d: int, seed: int = 0) -> ExpanderGraph:
    """Seeded union of d permutations.

    When ``d >= n`` the first ``n * (d // n)`` slots run through all right
    vertices cyclically, which contributes nothing to the second singular
    value.  The remaining slots are random permutations, repaired so that a
    left vertex does not meet the same right vertex twice when that can be
    avoided.
    """
    if n < 1 or d < 1:
        raise ExpanderError("n and d must be positive")
    rng = np.random.default_rng([seed, n, d])
    u = np.arange(n, dtype=np.int64)
    cols = [(u + i) % n for i in range((d // n) * n)]
    extra = d - len(cols)
    taken = np.empty((extra, n), dtype=np.int64)
    for k in range(extra):
        p = rng.permutation(n).astype(np.int64)
        if k < n - 1:
            p = _repair_permutation(p, taken, k, rng)
        taken[k] = p
        cols.append(p)
    adj = np.stack(cols, axis=1)
    return ExpanderGraph(adj, f"perm-{n}x{d}-s{seed}", meta={"base": "permutation", "seed": seed})


def symmetric_permutation_graph(n: int, half_degree: int, seed: int = 0) -> ExpanderGraph:
    """Random permutations together with their inverses (symmetric biadjacency)."""
    rng = np.random.default_rng([seed, n, half_degree, 1])
    cols = []
    for _ in range(half_degree):
        p = rng.permutation(n).astype(np.int64)
        q = np.empty_like(p)
        q[p] = np.arange(n)
        cols += [p, q]
    return ExpanderGraph(np.stack(cols, axis=1), f"symperm-{n}x{2 * half_degree}-s{seed}",
                         meta={"base": "symmetric", "seed": seed})


def build_base(n: int, kind: str = "permutation", degree: int | None = None, seed: int = 0) -> ExpanderGraph:
    if kind == "complete":
        return complete_graph(n)
    if kind == "affine":
        return affine_graph(n)
    if kind == "permutation":
        return permutation_graph(n, degree or 8, seed)
    if kind == "symmetric":
        return symmetric_permutation_graph(n, (degree or 8) // 2, seed)
    raise ExpanderError(f"unknown base {kind!r}")


# operations -----------------------------------------------------------------

def boost_power(g: ExpanderGraph, k: int) -> ExpanderGraph:
    """k-step walks: degree d -> d**k.

    Slot ``(e1, ..., ek)`` of u leads to ``adj[...adj[adj[u, e1], e2]..., ek]``
    (mixed-radix order, ``e1`` most significant).  The second singular value
    is at most ``lam**k``, with equality for symmetric biadjacency.
    """
    if k < 1:
        raise ExpanderError("power must be at least 1")
    cur = np.arange(g.n, dtype=np.int64)[:, None]
    for _ in range(k):
        cur = g.adj[cur].reshape(g.n, -1)
    lam = None if g.lam_bound is None else g.lam_bound ** k
    return ExpanderGraph(cur, f"{g.name}^{k}", lam_bound=lam, meta={**g.meta, "power": k})


def pad_same_size(g: ExpanderGraph) -> ExpanderGraph:
    """Duplicate every edge in place: (N, d, lam) -> (N, 2d, 2 lam)."""
    adj = np.repeat(g.adj, 2, axis=1)
    lam = None if g.lam_bound is None else 2 * g.lam_bound
    return ExpanderGraph(adj, f"{g.name}+dup", lam_bound=lam, meta={**g.meta, "pad": "same"})


def pad_double_size(g: ExpanderGraph) -> ExpanderGraph:
    """Four-block lift [[A, A], [A, A]]: (N, d, lam) -> (2N, 2d, 2 lam)."""
    base = np.concatenate([g.adj, g.adj + g.n], axis=1)
    adj = np.concatenate([base, base], axis=0)
    lam = None if g.lam_bound is None else 2 * g.lam_bound
    return ExpanderGraph(adj, f"{g.name}+lift", lam_bound=lam, meta={**g.meta, "pad": "double"})


def e_count(g: ExpanderGraph, U, V) -> int:
    """Number of edges (with multiplicity) from left set U to right set V."""
    inu = np.zeros(g.n, dtype=bool)
    inv = np.zeros(g.n, dtype=bool)
    inu[np.asarray(list(U), dtype=np.int64)] = True
    inv[np.asarray(list(V), dtype=np.int64)] = True
    return int(np.count_nonzero(inv[g.adj[inu]]))


# discrepancy ----------------------------------------------------------------

EXHAUSTIVE_CAP = 10


@dataclass(frozen=True)
class DiscReport:
    passed: bool
    worst_ratio: float
    witness: tuple | None = None


def verify_disc_exhaustive(g: ExpanderGraph, epsilon: float) -> DiscReport:
    """Check |e(U,V) - d|U||V|/N| <= eps d sqrt(|U||V|) over all nonempty U, V.

    Subsets U are visited in Gray-code order so the per-right-vertex edge
    counts are updated with one row per step.
    """
    n, d = g.n, g.d
    if n > EXHAUSTIVE_CAP:
        raise ExpanderError(f"exhaustive check is capped at N <= {EXHAUSTIVE_CAP}")
    m = g.biadjacency()
    masks = np.arange(1, 1 << n)
    vind = ((masks[:, None] >> np.arange(n)) & 1).astype(np.float64)
    vsize = vind.sum(axis=1)
    counts = np.zeros(n)
    usize = 0
    worst, witness = 0.0, None
    prev = 0
    for i in range(1, 1 << n):
        gray = i ^ (i >> 1)
        bit = (gray ^ prev).bit_length() - 1
        if gray & (1 << bit):
            counts += m[bit]
            usize += 1
        else:
            counts -= m[bit]
            usize -= 1
        prev = gray
        e = vind @ counts
        dev = np.abs(e - d * usize * vsize / n)
        ratio = dev / (d * np.sqrt(usize * vsize))
        j = int(np.argmax(ratio))
        if ratio[j] > worst:
            worst, witness = float(ratio[j]), (gray, int(masks[j]))
    return DiscReport(worst <= epsilon + 1e-12, worst, witness)


@dataclass(frozen=True)
class SpectralCertificate:
    lam: float
    lam_upper: float
    degree: int
    epsilon: float
    method: str
    iterations: int = 0

    @property
    def gap(self) -> float:
        return math.inf if self.lam_upper == 0 else self.degree / self.lam_upper

    @property
    def passed(self) -> bool:
        return self.lam_upper <= self.epsilon * self.degree * (1 + 1e-12)


DENSE_CAP = 64


def second_singular_dense(g: ExpanderGraph) -> float:
    m = g.biadjacency() - g.d / g.n
    return float(np.linalg.svd(m, compute_uv=False)[0]) if g.n > 1 else 0.0


@njit(cache=True)
def _gram_step(adj, x, y, z):
    n, d = adj.shape
    y[:] = 0.0
    for u in range(n):
        xu = x[u]
        for e in range(d):
            y[adj[u, e]] += xu
    for u in range(n):
        s = 0.0
        for e in range(d):
            s += y[adj[u, e]]
        z[u] = s


def second_singular_power(g: ExpanderGraph, tol: float = 1e-9, max_iter: int = 3000,
                          seed: int = 0) -> tuple[float, int, float]:
    """Deflated power iteration on M^T M, M the biadjacency.

    Returns ``(estimate, iterations, last relative change)``.
    """
    n = g.n
    if n == 1:
        return 0.0, 0, 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    adj = np.ascontiguousarray(g.adj, dtype=np.int64)
    y = np.empty(n)
    z = np.empty(n)
    est, change = 0.0, math.inf
    it = 0
    for it in range(1, max_iter + 1):
        x -= x.mean()
        nx = np.linalg.norm(x)
        if nx == 0.0:
            return 0.0, it, 0.0
        x /= nx
        _gram_step(adj, x, y, z)
        z -= z.mean()
        new = math.sqrt(max(float(x @ z), 0.0))
        change = abs(new - est) / max(new, 1e-300)
        est = new
        x, z = z, x
        if change < tol:
            break
    return est, it, change


def verify_disc_spectral(g: ExpanderGraph, epsilon: float, method: str = "auto",
                         tol: float = 1e-9, slack: float = 1e-2, max_iter: int = 3000) -> SpectralCertificate:
    """Certify DISC(eps) through the eigengap bound d / lam >= 1 / eps.

    Dense SVD is used (and is authoritative) for N <= 64.  Larger graphs use
    deflated power iteration; its estimate approaches lam from below, so it
    is inflated by ``slack`` plus the last relative change before comparing.
    """
    if method == "auto":
        method = "dense" if g.n <= DENSE_CAP else "power"
    if method == "dense":
        lam = second_singular_dense(g)
        return SpectralCertificate(lam, lam, g.d, epsilon, "dense")
    if method != "power":
        raise ExpanderError(f"unknown method {method!r}")
    lam, it, change = second_singular_power(g, tol=tol, max_iter=max_iter)
    return SpectralCertificate(lam, lam * (1 + slack + change), g.d, epsilon, "power", it)


# families -------------------------------------------------------------------

@dataclass(frozen=True)
class FamilySpec:
    """How to obtain a DISC(epsilon) graph at each power-of-two size."""

    epsilon: float
    base: str = "permutation"
    degree: int = 8
    seed: int = 0
    max_seed_tries: int = 8


def _pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def family(n: int, spec: FamilySpec, certify: bool = True) -> ExpanderGraph:
    """Graph with n vertices per side for the given family."""
    if not _pow2(n):
        raise ExpanderError(f"family sizes are powers of two, got {n}")
    return _family_cached(n, spec, certify)


@lru_cache(maxsize=64)
def _family_cached(n: int, spec: FamilySpec, certify: bool) -> ExpanderGraph:
    if spec.base == "affine":
        return _affine_family(n, spec)
    last = None
    for t in range(spec.max_seed_tries if certify else 1):
        g = build_base(n, spec.base, spec.degree, spec.seed + t)
        if not certify:
            return g
        cert = _cached_certificate(g, spec.epsilon)
        last = cert
        if cert.passed:
            return replace(g, lam_bound=cert.lam_upper, meta={**g.meta, "certificate": cert})
    raise ExpanderError(f"no certified graph for N={n}, eps={spec.epsilon}: gap {last.gap:.3f}")


def cache_dir() -> Path | None:
    """Directory for certificate caching; ``OBLIDIST_CACHE=0`` disables it."""
    env = os.environ.get("OBLIDIST_CACHE")
    if env == "0":
        return None
    return Path(env) if env else Path.home() / ".cache" / "oblidist"


def _cached_certificate(g: ExpanderGraph, epsilon: float) -> SpectralCertificate:
    """Spectral certificate, reusing a stored lam estimate keyed by the adjacency digest.

    Only graphs above the dense cap are cached; the digest covers the slot
    table, so a changed construction never reuses a stale value.
    """
    root = cache_dir()
    if g.n <= DENSE_CAP or root is None:
        return verify_disc_spectral(g, epsilon)
    key = hashlib.blake2b(np.ascontiguousarray(g.adj, dtype="<i8").tobytes(), digest_size=16).hexdigest()
    path = root / f"lam-{g.n}x{g.d}-{key}.json"
    try:
        rec = json.loads(path.read_text())
        return SpectralCertificate(rec["lam"], rec["lam_upper"], g.d, epsilon, rec["method"], rec["iterations"])
    except (OSError, ValueError, KeyError):
        pass
    cert = verify_disc_spectral(g, epsilon)
    try:
        root.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"lam": cert.lam, "lam_upper": cert.lam_upper,
                                    "method": cert.method, "iterations": cert.iterations}))
    except OSError:
        pass
    return cert


def affine_power_needed(epsilon: float, lam: float = 5 * math.sqrt(2), d: int = 8) -> int:
    return max(1, math.ceil(math.log(1 / epsilon) / math.log(d / lam)))


def _affine_family(n: int, spec: FamilySpec) -> ExpanderGraph:
    """Affine base on the largest square size <= n, boosted, then padded.

    Same-size padding is applied on square sizes and the four-block lift on
    the others, so every size in the family has degree 2 * 8**k.
    """
    j = (n.bit_length() - 1) // 2
    core = 4 ** j
    if core < 4:
        raise ExpanderError("affine family starts at N = 4")
    g = affine_graph(core)
    lam = second_singular_dense(g) if core <= 1024 else g.lam_bound
    k = affine_power_needed(spec.epsilon, lam)
    g = boost_power(replace(g, lam_bound=lam), k)
    return pad_same_size(g) if core == n else pad_double_size(g)


# file format ----------------------------------------------------------------

GRAPH_MAGIC = b"OBXG"
GRAPH_VERSION = 1
_GRAPH_HEADER = struct.Struct("<4sHQI")


def save_graph(g: ExpanderGraph, path) -> None:
    body = np.ascontiguousarray(g.adj, dtype="<u4").tobytes()
    Path(path).write_bytes(_GRAPH_HEADER.pack(GRAPH_MAGIC, GRAPH_VERSION, g.n, g.d) + body)


def load_graph(path) -> ExpanderGraph:
    raw = Path(path).read_bytes()
    if len(raw) < _GRAPH_HEADER.size:
        raise ExpanderError("truncated graph file")
    magic, version, n, d = _GRAPH_HEADER.unpack_from(raw)
    if magic != GRAPH_MAGIC or version != GRAPH_VERSION:
        raise ExpanderError("not a graph file")
    body = raw[_GRAPH_HEADER.size:]
    if len(body) != 4 * n * d:
        raise ExpanderError("graph body has the wrong length")
    adj = np.frombuffer(body, dtype="<u4").astype(np.int64).reshape(n, d)
    _check_regular(adj)
    return ExpanderGraph(adj, Path(path).stem)
