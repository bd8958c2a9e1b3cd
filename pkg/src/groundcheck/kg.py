"""Typed knowledge graph with article provenance.

Covers loading, the temporal seen/unseen split, benchmark construction
with seeded negative sampling, multi-hop link-chain search, and the
both-endpoints context query used for claim verification. The graph is
immutable after load; all queries are read-only.
"""

from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping

from groundcheck.errors import (
    BenchmarkConstructionError,
    GraphLoadError,
    UnknownEntityError,
)

ENTITY_TYPES = ("Chemical", "Disease", "Gene", "Mutation")

NO_RELATION = "no_relation"


class Task(str, Enum):
    CHEMICAL_GENE = "chemical_gene"
    DISEASE_GENE = "disease_gene"
    GENE_GENE = "gene_gene"


TASK_TYPE_PAIRS: Mapping[Task, tuple[str, str]] = {
    Task.CHEMICAL_GENE: ("Chemical", "Gene"),
    Task.DISEASE_GENE: ("Disease", "Gene"),
    Task.GENE_GENE: ("Gene", "Gene"),
}

TASK_LABELS: Mapping[Task, tuple[str, ...]] = {
    Task.CHEMICAL_GENE: ("positive_correlate", "negative_correlate", NO_RELATION),
    Task.DISEASE_GENE: ("stimulate", "inhibit", NO_RELATION),
    Task.GENE_GENE: ("positive_correlate", "negative_correlate", NO_RELATION),
}

TASK_DISPLAY: Mapping[Task, str] = {
    Task.CHEMICAL_GENE: "Chemical & Gene",
    Task.DISEASE_GENE: "Disease & Gene",
    Task.GENE_GENE: "Gene & Gene",
}


def positive_labels(task: Task) -> tuple[str, ...]:
    return tuple(l for l in TASK_LABELS[task] if l != NO_RELATION)


@dataclass(frozen=True)
class Entity:
    entity_id: str
    entity_type: str
    canonical_name: str
    mentions: tuple[str, ...]


@dataclass(frozen=True)
class KgEdge:
    head: str
    relation: str
    tail: str
    pmids: tuple[int, ...]


@dataclass(frozen=True)
class BenchmarkInstance:
    task: Task
    head: str
    tail: str
    label: str

    @property
    def instance_id(self) -> str:
        return f"{self.task.value}|{self.head}|{self.tail}"


@dataclass(frozen=True)
class LinkChain:
    """A simple path of edges; consecutive edges share an endpoint."""

    edges: tuple[KgEdge, ...]
    endpoints: tuple[str, str]

    def entity_sequence(self) -> tuple[str, ...]:
        """Entities visited in path order; raises if the path is broken."""
        current = self.endpoints[0]
        seq = [current]
        for edge in self.edges:
            if edge.head == current:
                current = edge.tail
            elif edge.tail == current:
                current = edge.head
            else:
                raise ValueError("chain edges do not form a connected path")
            seq.append(current)
        if current != self.endpoints[1]:
            raise ValueError("chain does not end at its target endpoint")
        return tuple(seq)


def _pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def read_entities_jsonl(path) -> Iterator[Entity]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                entity = Entity(
                    entity_id=rec["id"],
                    entity_type=rec["type"],
                    canonical_name=rec["name"],
                    mentions=tuple(rec["mentions"]),
                )
                if entity.entity_type not in ENTITY_TYPES:
                    raise ValueError(f"unknown entity type {entity.entity_type!r}")
                if not entity.entity_id:
                    raise ValueError("empty entity id")
                if not entity.mentions:
                    raise ValueError("entity has no mentions")
            except (ValueError, KeyError, TypeError) as exc:
                raise GraphLoadError(f"{path}: line {lineno}: {exc}") from exc
            yield entity


def read_edges_jsonl(path) -> Iterator[KgEdge]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                yield _make_edge(rec["head"], rec["relation"], rec["tail"],
                                 rec["pmids"])
            except (ValueError, KeyError, TypeError) as exc:
                raise GraphLoadError(f"{path}: line {lineno}: {exc}") from exc


def _make_edge(head, relation, tail, pmids) -> KgEdge:
    clean = sorted({int(p) for p in pmids})
    if not clean:
        raise ValueError("edge has no supporting pmids")
    if any(p <= 0 for p in clean):
        raise ValueError("pmids must be positive")
    if head == tail:
        raise ValueError(f"self-loop edge on {head!r}")
    return KgEdge(head=head, relation=relation, tail=tail, pmids=tuple(clean))


class KnowledgeGraph:
    """Immutable multigraph over typed entities, queryable by entity and pair."""

    def __init__(self, entities: Mapping[str, Entity], edges: Iterable[KgEdge]):
        self.entities = dict(entities)
        self.edges = list(edges)
        self._adj: dict[str, list[int]] = defaultdict(list)
        self._pair_edges: dict[tuple[str, str], list[int]] = defaultdict(list)
        for i, edge in enumerate(self.edges):
            for eid in (edge.head, edge.tail):
                if eid not in self.entities:
                    raise GraphLoadError(
                        f"edge {i}: references undeclared entity {eid!r}")
            self._adj[edge.head].append(i)
            self._adj[edge.tail].append(i)
            self._pair_edges[_pair_key(edge.head, edge.tail)].append(i)

    @classmethod
    def from_files(cls, entity_path, edge_path) -> "KnowledgeGraph":
        entities = {}
        for ent in read_entities_jsonl(entity_path):
            if ent.entity_id in entities:
                raise GraphLoadError(f"duplicate entity id {ent.entity_id!r}")
            entities[ent.entity_id] = ent
        return cls(entities, read_edges_jsonl(edge_path))

    @property
    def entity_count(self) -> int:
        return len(self.entities)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def pair_keys(self) -> set[tuple[str, str]]:
        return set(self._pair_edges)

    def temporal_split(self, seen_max_pmid: int, unseen_min_pmid: int
                       ) -> tuple["KnowledgeGraph", "KnowledgeGraph"]:
        """Split edges into pre-cutoff knowledge and post-cutoff discoveries.

        An edge lands in the seen graph when any supporting pmid falls at or
        below seen_max_pmid, keeping only those pmids as provenance. It lands
        in the unseen graph only when it has support at or above
        unseen_min_pmid and none at or below seen_max_pmid. Mid-window pmids
        are discarded; edges supported only by them appear in neither graph.
        """
        if seen_max_pmid <= 0 or unseen_min_pmid <= 0:
            raise ValueError("pmid cutoffs must be positive")
        if seen_max_pmid >= unseen_min_pmid:
            raise ValueError("seen_max_pmid must be below unseen_min_pmid")
        seen_edges = []
        unseen_edges = []
        for edge in self.edges:
            old = tuple(p for p in edge.pmids if p <= seen_max_pmid)
            new = tuple(p for p in edge.pmids if p >= unseen_min_pmid)
            if old:
                seen_edges.append(KgEdge(edge.head, edge.relation, edge.tail, old))
            elif new:
                unseen_edges.append(KgEdge(edge.head, edge.relation, edge.tail, new))
        return (KnowledgeGraph(self.entities, seen_edges),
                KnowledgeGraph(self.entities, unseen_edges))

    def find_link_chains(self, source: str, target: str, max_hops: int = 3,
                         max_chains: int = 10) -> list[LinkChain]:
        """Simple paths between two entities, shortest first.

        Order is deterministic: by length, then the entity-id sequence, then
        the relation sequence (parallel edges yield distinct chains).
        """
        for eid in (source, target):
            if eid not in self.entities:
                raise UnknownEntityError(f"unknown entity {eid!r}")
        if source == target or max_hops < 1 or max_chains < 1:
            return []
        chains: list[LinkChain] = []
        for length in range(1, max_hops + 1):
            found: list[tuple[tuple, tuple, tuple, list[int]]] = []

            def walk(node, visited, edge_idxs):
                if len(edge_idxs) == length:
                    if node == target:
                        edges = [self.edges[i] for i in edge_idxs]
                        chain = LinkChain(tuple(edges), (source, target))
                        found.append((chain.entity_sequence(),
                                      tuple(e.relation for e in edges),
                                      tuple(edge_idxs), edge_idxs))
                    return
                if node == target:
                    return  # simple paths cannot leave and re-enter the target
                for i in self._adj[node]:
                    edge = self.edges[i]
                    nxt = edge.tail if edge.head == node else edge.head
                    if nxt in visited:
                        continue
                    visited.add(nxt)
                    edge_idxs.append(i)
                    walk(nxt, visited, edge_idxs)
                    edge_idxs.pop()
                    visited.discard(nxt)

            walk(source, {source}, [])
            found.sort(key=lambda rec: rec[:3])
            for _, _, _, edge_idxs in found:
                chains.append(LinkChain(
                    tuple(self.edges[i] for i in edge_idxs), (source, target)))
                if len(chains) >= max_chains:
                    return chains
        return chains

    def kg_context(self, entity_ids: Iterable[str]) -> list[KgEdge]:
        """Edges whose head AND tail both fall inside the given entity set."""
        ids = set(entity_ids)
        if not ids:
            return []
        out = [e for e in self.edges if e.head in ids and e.tail in ids]
        out.sort(key=lambda e: (e.head, e.relation, e.tail, e.pmids))
        return out

    def textualize_edge(self, edge: KgEdge) -> str:
        h = self.entities[edge.head]
        t = self.entities[edge.tail]
        return (f"{h.entity_type} {h.canonical_name} ({h.entity_id}) "
                f"{edge.relation} "
                f"{t.entity_type} {t.canonical_name} ({t.entity_id}).")

    def textualize_chain(self, chain: LinkChain) -> str:
        return " ".join(self.textualize_edge(e) for e in chain.edges)


def _instance_pair(task: Task, edge: KgEdge,
                   entities: Mapping[str, Entity]) -> tuple[str, str] | None:
    """Canonical (head, tail) for an edge under a task, or None if types differ.

    Cross-type tasks orient the pair as (first type, second type); the
    same-type task orders the pair by ascending entity id.
    """
    type_a, type_b = TASK_TYPE_PAIRS[task]
    th = entities[edge.head].entity_type
    tt = entities[edge.tail].entity_type
    if type_a == type_b:
        if th == type_a and tt == type_a:
            return _pair_key(edge.head, edge.tail)
        return None
    if (th, tt) == (type_a, type_b):
        return (edge.head, edge.tail)
    if (th, tt) == (type_b, type_a):
        return (edge.tail, edge.head)
    return None


def build_benchmark(seen: KnowledgeGraph, unseen: KnowledgeGraph,
                    tasks: Iterable[Task], seed: int
                    ) -> tuple[list[BenchmarkInstance], dict[Task, dict[str, int]]]:
    """Construct benchmark instances from the unseen graph.

    Per task: drop unseen edges whose unordered entity pair carries any seen
    edge; keep edges with at least two supporting pmids and a relation in the
    task's label set; pairs carrying more than one distinct surviving label
    are ambiguous and dropped. Negatives are floor(mean positive-label count)
    pairs drawn without replacement (random.Random(seed).sample, tasks in the
    given order) from the lexicographically sorted pool of same-typed pairs
    with no edge in either graph.
    """
    rng = random.Random(seed)
    seen_pairs = seen.pair_keys()
    unseen_pairs = unseen.pair_keys()
    all_pairs = seen_pairs | unseen_pairs
    instances: list[BenchmarkInstance] = []
    counts: dict[Task, dict[str, int]] = {}
    for task in tasks:
        task = Task(task)
        pos_set = set(positive_labels(task))
        labels_by_pair: dict[tuple[str, str], set[str]] = defaultdict(set)
        for edge in unseen.edges:
            if _pair_key(edge.head, edge.tail) in seen_pairs:
                continue
            if len(edge.pmids) < 2:
                continue
            if edge.relation not in pos_set:
                continue
            pair = _instance_pair(task, edge, unseen.entities)
            if pair is None:
                continue
            labels_by_pair[pair].add(edge.relation)
        positives = sorted(
            (pair, labels.pop())
            for pair, labels in labels_by_pair.items() if len(labels) == 1)
        if not positives:
            raise BenchmarkConstructionError(
                f"task {task.value}: no positive instances survive filtering")
        label_counts = {l: 0 for l in positive_labels(task)}
        for _, label in positives:
            label_counts[label] += 1
        n_negative = sum(label_counts.values()) // len(label_counts)

        type_a, type_b = TASK_TYPE_PAIRS[task]
        ids_a = sorted(e.entity_id for e in unseen.entities.values()
                       if e.entity_type == type_a)
        ids_b = sorted(e.entity_id for e in unseen.entities.values()
                       if e.entity_type == type_b)
        if type_a == type_b:
            pool = [(a, b) for i, a in enumerate(ids_a) for b in ids_a[i + 1:]
                    if _pair_key(a, b) not in all_pairs]
        else:
            pool = [(a, b) for a in ids_a for b in ids_b
                    if _pair_key(a, b) not in all_pairs]
        if len(pool) < n_negative:
            raise BenchmarkConstructionError(
                f"task {task.value}: negative pool has {len(pool)} pairs, "
                f"need {n_negative}")
        negatives = sorted(rng.sample(pool, n_negative))

        for (head, tail), label in positives:
            instances.append(BenchmarkInstance(task, head, tail, label))
        for head, tail in negatives:
            instances.append(BenchmarkInstance(task, head, tail, NO_RELATION))
        counts[task] = {**label_counts, NO_RELATION: n_negative}
    return instances, counts
