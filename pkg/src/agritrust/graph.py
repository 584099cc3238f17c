"""In-memory triple storage with set semantics and per-position indexes.

A Graph keeps three access paths (by subject, predicate, object) that are
updated atomically with the triple set under a readers-writer lock: any
number of concurrent readers, or a single writer.
"""
from __future__ import annotations

import itertools
import threading
from typing import Dict, Iterable, Iterator, List, Optional

from .terms import BlankNode, Iri, Term, Triple, make_triple


class RWLock:
    """Readers-writer lock; writers wait for active readers to drain."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self) -> None:
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self) -> None:
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self) -> None:
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_write(self) -> None:
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class _ReadGuard:
    __slots__ = ("_lock",)

    def __init__(self, lock: RWLock) -> None:
        self._lock = lock

    def __enter__(self):
        self._lock.acquire_read()
        return self

    def __exit__(self, *exc):
        self._lock.release_read()
        return False


class _WriteGuard:
    __slots__ = ("_lock",)

    def __init__(self, lock: RWLock) -> None:
        self._lock = lock

    def __enter__(self):
        self._lock.acquire_write()
        return self

    def __exit__(self, *exc):
        self._lock.release_write()
        return False


class Graph:
    """A set of triples in insertion order, with s/p/o indexes."""

    def __init__(self, name: Optional[Iri] = None, triples: Iterable[Triple] = ()) -> None:
        self.name = name
        self._triples: Dict[Triple, None] = {}
        self._by_s: Dict[Term, Dict[Triple, None]] = {}
        self._by_p: Dict[Term, Dict[Triple, None]] = {}
        self._by_o: Dict[Term, Dict[Triple, None]] = {}
        self._lock = RWLock()
        for t in triples:
            self.insert(t)

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(list(self._triples))

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triples

    def insert(self, triple: Triple) -> bool:
        """Add a triple; returns False if it was already present."""
        triple = make_triple(*triple)
        with _WriteGuard(self._lock):
            if triple in self._triples:
                return False
            self._triples[triple] = None
            self._by_s.setdefault(triple.subject, {})[triple] = None
            self._by_p.setdefault(triple.predicate, {})[triple] = None
            self._by_o.setdefault(triple.object, {})[triple] = None
            return True

    def add(self, subject: Term, predicate: Term, object: Term) -> bool:
        return self.insert(make_triple(subject, predicate, object))

    def remove(self, triple: Triple) -> bool:
        """Remove a triple; returns False if it was absent."""
        with _WriteGuard(self._lock):
            if triple not in self._triples:
                return False
            del self._triples[triple]
            for index, key in (
                (self._by_s, triple.subject),
                (self._by_p, triple.predicate),
                (self._by_o, triple.object),
            ):
                bucket = index[key]
                del bucket[triple]
                if not bucket:
                    del index[key]
            return True

    def match(
        self,
        subject: Optional[Term] = None,
        predicate: Optional[Term] = None,
        object: Optional[Term] = None,
    ) -> List[Triple]:
        """All triples agreeing with the bound positions.

        Scans the smallest index bucket among the bound positions; a fully
        unbound pattern returns every triple.
        """
        with _ReadGuard(self._lock):
            candidates: Optional[Dict[Triple, None]] = None
            for index, key in (
                (self._by_s, subject),
                (self._by_p, predicate),
                (self._by_o, object),
            ):
                if key is None:
                    continue
                bucket = index.get(key)
                if bucket is None:
                    return []
                if candidates is None or len(bucket) < len(candidates):
                    candidates = bucket
            if candidates is None:
                return list(self._triples)
            return [
                t
                for t in candidates
                if (subject is None or t.subject == subject)
                and (predicate is None or t.predicate == predicate)
                and (object is None or t.object == object)
            ]

    def subjects(self, predicate: Optional[Term] = None, object: Optional[Term] = None) -> List[Term]:
        seen: Dict[Term, None] = {}
        for t in self.match(None, predicate, object):
            seen[t.subject] = None
        return list(seen)

    def objects(self, subject: Optional[Term] = None, predicate: Optional[Term] = None) -> List[Term]:
        seen: Dict[Term, None] = {}
        for t in self.match(subject, predicate, None):
            seen[t.object] = None
        return list(seen)

    def object(self, subject: Term, predicate: Term) -> Optional[Term]:
        found = self.match(subject, predicate, None)
        return found[0].object if found else None

    def terms(self) -> List[Term]:
        """Every term occurring in any subject or object position."""
        seen: Dict[Term, None] = {}
        for t in self._triples:
            seen[t.subject] = None
            seen[t.object] = None
        return list(seen)

    def copy(self, name: Optional[Iri] = None) -> "Graph":
        return Graph(name=name if name is not None else self.name, triples=self._triples)

    def clear(self) -> None:
        with _WriteGuard(self._lock):
            self._triples.clear()
            self._by_s.clear()
            self._by_p.clear()
            self._by_o.clear()

    def update(self, other: Iterable[Triple]) -> int:
        added = 0
        for t in other:
            if self.insert(t):
                added += 1
        return added


class Dataset:
    """A default graph plus uniquely named graphs.

    Distinct named graphs may be mutated in parallel; the name map itself is
    guarded by a lock.
    """

    def __init__(self) -> None:
        self.default_graph = Graph()
        self.named_graphs: Dict[Iri, Graph] = {}
        self._lock = threading.Lock()

    def graph(self, name: Optional[Iri] = None) -> Graph:
        if name is None:
            return self.default_graph
        with self._lock:
            if name not in self.named_graphs:
                self.named_graphs[name] = Graph(name=name)
            return self.named_graphs[name]

    def graphs(self) -> List[Graph]:
        with self._lock:
            return [self.default_graph, *self.named_graphs.values()]

    def match(self, subject=None, predicate=None, object=None) -> List[Triple]:
        out: List[Triple] = []
        for g in self.graphs():
            out.extend(g.match(subject, predicate, object))
        return out

    def all_triples(self) -> List[Triple]:
        return self.match()

    def terms(self) -> List[Term]:
        seen: Dict[Term, None] = {}
        for g in self.graphs():
            for term in g.terms():
                seen[term] = None
        return list(seen)

    def union_graph(self) -> Graph:
        merged = Graph()
        for g in self.graphs():
            merged.update(g)
        return merged


def _ground_triples(graph: Graph) -> set:
    return {
        t
        for t in graph
        if not isinstance(t.subject, BlankNode) and not isinstance(t.object, BlankNode)
    }


def _bnode_signature(graph: Graph, rounds: int = 3) -> Dict[BlankNode, str]:
    """Iteratively refined neighborhood signatures for blank nodes."""
    import hashlib

    bnodes = [term for term in graph.terms() if isinstance(term, BlankNode)]
    sig: Dict[BlankNode, str] = {b: "" for b in bnodes}
    for _ in range(rounds):
        nxt: Dict[BlankNode, str] = {}
        for b in bnodes:
            edges = []
            for t in graph.match(b, None, None):
                o = t.object
                key = sig[o] if isinstance(o, BlankNode) else repr(o)
                edges.append(f"O|{t.predicate.value}|{key}")
            for t in graph.match(None, None, b):
                s = t.subject
                key = sig[s] if isinstance(s, BlankNode) else repr(s)
                edges.append(f"I|{key}|{t.predicate.value}")
            nxt[b] = hashlib.sha256("\n".join(sorted(edges)).encode()).hexdigest()
        sig = nxt
    return sig


def isomorphic(a: Graph, b: Graph) -> bool:
    """Graph equality up to a bijective renaming of blank nodes.

    Ground triples are compared directly; blank nodes are matched by
    signature refinement with backtracking over same-signature groups.
    Intended for desk-scale graphs (fixtures and ontology documents).
    """
    if len(a) != len(b):
        return False
    if _ground_triples(a) != _ground_triples(b):
        return False

    sig_a = _bnode_signature(a)
    sig_b = _bnode_signature(b)
    if sorted(sig_a.values()) != sorted(sig_b.values()):
        return False

    groups_a: Dict[tuple, List[BlankNode]] = {}
    groups_b: Dict[tuple, List[BlankNode]] = {}
    for node, s in sig_a.items():
        groups_a.setdefault(s, []).append(node)
    for node, s in sig_b.items():
        groups_b.setdefault(s, []).append(node)
    if set(groups_a) != set(groups_b):
        return False
    for s in groups_a:
        if len(groups_a[s]) != len(groups_b[s]):
            return False

    triples_b = set(b)

    def rename(t: Triple, mapping: Dict[BlankNode, BlankNode]) -> Triple:
        s = mapping.get(t.subject, t.subject) if isinstance(t.subject, BlankNode) else t.subject
        o = mapping.get(t.object, t.object) if isinstance(t.object, BlankNode) else t.object
        return Triple(s, t.predicate, o)

    def check(mapping: Dict[BlankNode, BlankNode]) -> bool:
        for t in a:
            if isinstance(t.subject, BlankNode) or isinstance(t.object, BlankNode):
                if rename(t, mapping) not in triples_b:
                    return False
        return True

    # Backtracking over candidate bijections within each signature group.
    ordered = sorted(groups_a, key=lambda s: len(groups_a[s]))
    group_perms = [
        [list(zip(groups_a[s], perm)) for perm in itertools.permutations(groups_b[s])]
        for s in ordered
    ]
    for combo in itertools.product(*group_perms):
        mapping: Dict[BlankNode, BlankNode] = {}
        for pairs in combo:
            mapping.update(dict(pairs))
        if check(mapping):
            return True
    return not groups_a
