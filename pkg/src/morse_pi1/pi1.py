"""Presentations of the Morse fundamental group, abelianization and the word problem."""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .mscomplex import MorseComplexData, NotConsecutive, step_name, word_str

SCHEMA = "pi1/v1"


class DisconnectedComplex(Exception):
    pass


class NotDiskLike(Exception):
    pass


# -- words -----------------------------------------------------------------

def inverse(w):
    return tuple((s, -e) for s, e in reversed(w))


def free_reduce(w, data: Optional[MorseComplexData] = None):
    """Cancel adjacent inverse pairs to a fixpoint (single stack pass)."""
    w = tuple(w)
    if data is not None:
        data.check_consecutive(w)
    out = []
    for x in w:
        if out and out[-1][0] == x[0] and out[-1][1] == -x[1]:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def cyclic_reduce(w):
    w = free_reduce(w)
    i, j = 0, len(w)
    while j - i >= 2 and w[i][0] == w[j - 1][0] and w[i][1] == -w[j - 1][1]:
        i += 1
        j -= 1
    return w[i:j]


def rotations(r):
    r = tuple(r)
    out = []
    for base in (r, inverse(r)):
        for i in range(len(base)):
            out.append(base[i:] + base[:i])
    return sorted(set(out))


# -- presentations ---------------------------------------------------------

@dataclass
class Presentation:
    generators: tuple
    relators: tuple
    tree: tuple = ()
    base: int = 0
    names: dict = field(default_factory=dict)

    def name(self, g):
        return self.names.get(g, step_name(g))

    def rewrite(self, word):
        """Loop in steps -> word in generators (tree steps collapse)."""
        gens = set(self.generators)
        tree = set(self.tree)
        out = []
        for s, e in word:
            if s in gens:
                out.append((s, e))
            elif s not in tree:
                raise KeyError(f"step {s} is not part of this presentation")
        return free_reduce(out)

    def to_text(self):
        gens = ",".join(self.name(g) for g in self.generators)
        rels = ", ".join(word_str(r, {g: self.name(g) for g in self.generators}) for r in self.relators)
        return f"< {gens} | {rels} >"

    def to_json(self):
        return {"schema": SCHEMA, "base": self.base, "generators": list(self.generators),
                "tree": list(self.tree),
                "relators": [[[s, e] for s, e in r] for r in self.relators],
                "text": self.to_text()}

    @staticmethod
    def from_json(doc):
        return Presentation(tuple(doc["generators"]),
                            tuple(tuple((a, b) for a, b in r) for r in doc["relators"]),
                            tuple(doc.get("tree", ())), doc.get("base", 0))


def spanning_tree(data: MorseComplexData, base: Optional[int] = None):
    """BFS from base, smallest step id first.  Returns (tree step ids, path words from base)."""
    base = data.base if base is None else base
    adj = {}
    for s in sorted(data.steps, key=lambda s: s.id):
        adj.setdefault(s.start, []).append((s.id, 1, s.end))
        adj.setdefault(s.end, []).append((s.id, -1, s.start))
    paths = {base: ()}
    tree = []
    q = deque([base])
    while q:
        v = q.popleft()
        for sid, e, w in sorted(adj.get(v, ())):
            if w not in paths:
                paths[w] = paths[v] + ((sid, e),)
                tree.append(sid)
                q.append(w)
    return tuple(sorted(tree)), paths


def presentation(data: MorseComplexData, base: Optional[int] = None) -> Presentation:
    base = data.base if base is None else base
    tree, paths = spanning_tree(data, base)
    mins = [c.id for c in data.critical_points if c.index == 0]
    missing = [m for m in mins if m not in paths]
    if missing:
        raise DisconnectedComplex(f"minima {missing} are not connected to the base point {base}")
    gens = tuple(s.id for s in sorted(data.steps, key=lambda s: s.id) if s.id not in tree)
    pres = Presentation(gens, (), tree, base)
    rels = []
    for d in data.disk_boundaries:
        r = pres.rewrite(d.word)
        if r:
            rels.append(r)
    pres.relators = tuple(rels)
    return pres


def loop_word(pres: Presentation, data: MorseComplexData, word):
    """Check that `word` is a loop at the base and rewrite it in generators."""
    end = data.check_consecutive(word, start=pres.base)
    if word and end != pres.base:
        raise NotConsecutive(len(word), "(loop does not return to the base point)")
    return pres.rewrite(word)


# -- abelianization --------------------------------------------------------

def exponent_matrix(pres: Presentation):
    col = {g: i for i, g in enumerate(pres.generators)}
    rows = []
    for r in pres.relators:
        row = [0] * len(col)
        for s, e in r:
            row[col[s]] += e
        rows.append(row)
    return rows


def smith_normal_form(A):
    """Integer Smith normal form.  Returns (D, U, V) with U A V = D, U and V unimodular."""
    m = len(A)
    n = len(A[0]) if m else 0
    D = [list(r) for r in A]
    U = [[int(i == j) for j in range(m)] for i in range(m)]
    V = [[int(i == j) for j in range(n)] for i in range(n)]

    def swap_rows(M, i, j):
        M[i], M[j] = M[j], M[i]

    def swap_cols(M, i, j):
        for row in M:
            row[i], row[j] = row[j], row[i]

    def add_row(M, src, dst, k):      # row dst += k * row src
        M[dst] = [a + k * b for a, b in zip(M[dst], M[src])]

    def add_col(M, src, dst, k):
        for row in M:
            row[dst] += k * row[src]

    t = 0
    while t < min(m, n):
        nz = [(abs(D[i][j]), i, j) for i in range(t, m) for j in range(t, n) if D[i][j]]
        if not nz:
            break
        _, i, j = min(nz)
        swap_rows(D, t, i); swap_rows(U, t, i)
        swap_cols(D, t, j); swap_cols(V, t, j)
        done = False
        while not done:
            done = True
            p = D[t][t]
            for i in range(t + 1, m):
                if D[i][t]:
                    q = D[i][t] // p
                    add_row(D, t, i, -q); add_row(U, t, i, -q)
                    if D[i][t]:
                        swap_rows(D, t, i); swap_rows(U, t, i)
                        done = False
                        break
            if not done:
                continue
            p = D[t][t]
            for j in range(t + 1, n):
                if D[t][j]:
                    q = D[t][j] // p
                    add_col(D, t, j, -q); add_col(V, t, j, -q)
                    if D[t][j]:
                        swap_cols(D, t, j); swap_cols(V, t, j)
                        done = False
                        break
            if not done:
                continue
            # divisibility: the pivot must divide the rest of the block
            p = D[t][t]
            for i in range(t + 1, m):
                if any(D[i][j] % p for j in range(t + 1, n)):
                    add_row(D, i, t, 1); add_row(U, i, t, 1)
                    done = False
                    break
        if D[t][t] < 0:
            D[t] = [-v for v in D[t]]
            U[t] = [-v for v in U[t]]
        t += 1
    return D, U, V


@dataclass(frozen=True)
class Abelianization:
    rank: int
    torsion: tuple

    def __str__(self):
        parts = ["Z"] * self.rank + [f"Z/{d}" for d in self.torsion]
        return " + ".join(parts) if parts else "0"


def _snf_data(pres: Presentation):
    key = (pres.generators, pres.relators)
    cached = getattr(pres, "_snf_cache", None)
    if cached is not None and cached[0] == key:
        return cached[1]
    out = _snf_compute(pres)
    pres._snf_cache = (key, out)
    return out


def _snf_compute(pres: Presentation):
    n = len(pres.generators)
    A = exponent_matrix(pres)
    if not A or n == 0:
        return [], [[int(i == j) for j in range(n)] for i in range(n)], []
    D, U, V = smith_normal_form(A)
    diag = [D[i][i] for i in range(min(len(D), n)) if D[i][i]]
    return diag, V, D


def abelianization(pres: Presentation) -> Abelianization:
    n = len(pres.generators)
    diag, _, _ = _snf_data(pres)
    return Abelianization(n - len(diag), tuple(d for d in diag if d != 1))


def exponent_vector(pres: Presentation, word):
    col = {g: i for i, g in enumerate(pres.generators)}
    v = [0] * len(col)
    for s, e in word:
        if s in col:
            v[col[s]] += e
    return v


def abelian_image(pres: Presentation, word):
    """Image in Z^rank + torsion; all zeros iff the word dies in H1."""
    v = exponent_vector(pres, word)
    diag, V, _ = _snf_data(pres)
    n = len(v)
    w = [sum(v[i] * V[i][j] for i in range(n)) for j in range(n)]
    out = []
    for j in range(n):
        if j < len(diag):
            if diag[j] != 1:
                out.append(w[j] % diag[j])
        else:
            out.append(w[j])
    return tuple(out)


# -- word problem ----------------------------------------------------------

@dataclass
class TrivialityVerdict:
    kind: str                      # Trivial | Nontrivial | Unknown
    witness: tuple = ()            # ((conjugator, relator-variant), ...)
    certificate: tuple = ()
    explored: int = 0

    def to_json(self):
        d = {"kind": self.kind, "explored": self.explored}
        if self.kind == "Trivial":
            d["witness"] = [{"conjugator": [list(x) for x in c], "relator": [list(x) for x in r]}
                            for c, r in self.witness]
        if self.kind == "Nontrivial":
            d["certificate"] = list(self.certificate)
        return d


def expand_witness(witness):
    out = []
    for c, r in witness:
        out.extend(c)
        out.extend(r)
        out.extend(inverse(c))
    return free_reduce(out)


def replay(word, witness, relators) -> bool:
    """Independent check: word equals the product of conjugated relators freely."""
    allowed = set()
    for r in relators:
        allowed.update(rotations(cyclic_reduce(r)))
    for _, r in witness:
        if cyclic_reduce(r) not in allowed:
            return False
    return free_reduce(word) == expand_witness(witness)


def is_trivial(word, pres: Presentation, max_len: int = 64, max_states: int = 100_000,
               rewrite: bool = True) -> TrivialityVerdict:
    """Bounded best-first relator insertion; abelianization settles Nontrivial."""
    w = pres.rewrite(word) if rewrite else free_reduce(word)
    if not w:
        return TrivialityVerdict("Trivial", (), (), 0)
    img = abelian_image(pres, w)
    if any(img):
        return TrivialityVerdict("Nontrivial", (), img, 0)
    variants = []
    for r in pres.relators:
        variants.extend(rotations(r))
    # each state remembers how it was reached: cur = g cur_prev, g = c r c^-1
    parent = {w: None}
    heap = [(len(w), w)]
    explored = 0
    while heap:
        _, cur = heapq.heappop(heap)
        explored += 1
        if explored > max_states:
            break
        for i in range(len(cur) + 1):
            pre = cur[:i]
            for r in variants:
                nxt = free_reduce(pre + r + cur[i:])
                if len(nxt) > max_len or nxt in parent:
                    continue
                parent[nxt] = (cur, pre, r)
                if not nxt:
                    steps = []
                    node = nxt
                    while parent[node] is not None:
                        prev, c, rr = parent[node]
                        steps.append((c, rr))
                        node = prev
                    # empty = g_k ... g_1 w, hence w = g_1^-1 ... g_k^-1
                    wit = tuple((c, inverse(rr)) for c, rr in reversed(steps))
                    assert replay(w, wit, pres.relators)
                    return TrivialityVerdict("Trivial", wit, (), explored)
                heapq.heappush(heap, (len(nxt), nxt))
    return TrivialityVerdict("Unknown", (), (), explored)


# -- disk gluing ----------------------------------------------------------

def _rotate(L, wit, k):
    """Rotate a based loop L = X Y to Y X = X^-1 (X Y) X, carrying the witness along."""
    X = L[:k]
    Xi = inverse(X)
    return L[k:] + L[:k], tuple((free_reduce(Xi + c), r) for c, r in wit)


def _vertices(data, word):
    return [data.endpoints(ss)[0] for ss in word]


def _shared_arc(data, B, D):
    """Find the arc S with B = P S and D = S^-1 Q (after rotations).

    Returns (kB, kD, len) such that rotating B by kB puts S at the end and
    rotating D by kD puts S^-1 at the start; len 0 means a shared vertex only.
    """
    sb = {s for s, _ in B}
    sd = {s for s, _ in D}
    shared = sb & sd
    n, m = len(B), len(D)
    if not shared:
        vb, vd = _vertices(data, B), _vertices(data, D)
        common = sorted(set(vb) & set(vd))
        if not common:
            raise NotDiskLike("disks share no vertex")
        v = common[0]
        return vb.index(v), vd.index(v), 0
    pos_b = [i for i in range(n) if B[i][0] in shared]
    pos_d = [i for i in range(m) if D[i][0] in shared]
    k = len(pos_b)
    if len(pos_d) != k:
        raise NotDiskLike("shared steps appear a different number of times")
    # contiguous cyclic arc in B
    start_b = None
    for i in pos_b:
        if all(((i + t) % n) in pos_b for t in range(k)):
            start_b = i
            break
    start_d = None
    for i in pos_d:
        if all(((i + t) % m) in pos_d for t in range(k)):
            start_d = i
            break
    if start_b is None or start_d is None:
        raise NotDiskLike("the shared boundary is not connected")
    S = tuple(B[(start_b + t) % n] for t in range(k))
    Sd = tuple(D[(start_d + t) % m] for t in range(k))
    if Sd != inverse(S):
        raise NotDiskLike("shared segments do not match with opposite orientation")
    if k == n or k == m:
        raise NotDiskLike("a disk lies entirely on the shared boundary")
    return (start_b + k) % n, start_d, k


def glue_disks(data: MorseComplexData, disk_ids: Sequence[int], conjugator=(),
               pres: Optional[Presentation] = None):
    """Boundary of a disk-like union of unstable disks, shown trivial constructively.

    Returns (verdict, boundary loop).  The witness is assembled from the gluing
    itself: the union boundary P Q equals (P S)(S^-1 Q), a product of
    conjugated disk words.
    """
    pres = pres or presentation(data)
    disks = {d.of: d for d in data.disk_boundaries}
    if not disk_ids:
        raise ValueError("no disks given")
    d0 = tuple(disks[disk_ids[0]].word)
    data.check_consecutive(d0, closed=True)
    L, wit = d0, (((), d0),)
    for did in disk_ids[1:]:
        D = tuple(disks[did].word)
        data.check_consecutive(D, closed=True)
        try:
            kB, kD, k = _shared_arc(data, L, D)
        except NotDiskLike:
            D = inverse(D)
            kB, kD, k = _shared_arc(data, L, D)
        L, wit = _rotate(L, wit, kB)
        Dr, dwit = _rotate(D, (((), D),), kD)
        # L = P S, Dr = S^-1 Q: glued loop P Q, witness is the concatenation
        L = free_reduce(L + Dr)
        if not L:
            raise NotDiskLike("the union is a sphere, not a disk")
        wit = wit + dwit
    # bring the union boundary to the conjugator's end vertex, then conjugate to the base
    c = tuple(conjugator)
    v = data.check_consecutive(c, start=pres.base) if c else pres.base
    verts = _vertices(data, L)
    if v not in verts:
        raise NotDiskLike(f"boundary of the union does not pass through vertex {v}")
    L, wit = _rotate(L, wit, verts.index(v))
    loop = free_reduce(c + L + inverse(c))
    wit = tuple((free_reduce(c + cc), r) for cc, r in wit)
    # the same identity holds after collapsing tree steps; replay it there
    gw = pres.rewrite(loop)
    gwit = tuple((pres.rewrite(cc), pres.rewrite(r)) for cc, r in wit)
    gwit = tuple((cc, r) for cc, r in gwit if r)
    if not replay(gw, gwit, pres.relators):
        raise AssertionError("gluing witness failed to replay")
    return TrivialityVerdict("Trivial", gwit, (), len(disk_ids)), loop
