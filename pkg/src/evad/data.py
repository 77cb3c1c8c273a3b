"""Data model for attributed heterogeneous networks and their events.

An event is a star-schema instance: one center node plus typed context nodes,
equivalently a hyperedge over the involved nodes.  Node records carry a single
global-width feature vector; narrower raw features are zero-padded upstream.
Datasets are immutable after load and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

NODES_FILENAME = "nodes.tsv"
EVENTS_FILENAME = "events.tsv"
LABELS_FILENAME = "labels.tsv"


class DatasetError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclass(frozen=True)
class NodeType:
    name: str
    is_center: bool


@dataclass(frozen=True)
class Event:
    """One star-schema instance; the center node uniquely identifies it."""

    event_id: int
    center: int
    context: tuple[int, ...]

    @property
    def nodes(self) -> tuple[int, ...]:
        return (self.center,) + self.context

    @property
    def size(self) -> int:
        return 1 + len(self.context)


class Ahin:
    """Typed nodes with a dense feature matrix.

    Node ids in input files are arbitrary integers; internally nodes are
    indexed densely 0..n-1 in file order, with the id table kept for IO.
    Events reference internal indices.
    """

    def __init__(self, node_ids, type_names, features, center_type: str):
        self.node_ids = np.asarray(node_ids, dtype=np.int64)
        if len(set(self.node_ids.tolist())) != len(self.node_ids):
            raise DatasetError("duplicate node id")
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != len(self.node_ids):
            raise DatasetError("feature matrix must have one row per node")
        self.features = features
        self.type_names = sorted(set(type_names))
        if center_type not in self.type_names:
            raise DatasetError(f"center type {center_type!r} has no nodes")
        self.center_type = center_type
        name_to_tid = {t: i for i, t in enumerate(self.type_names)}
        self.type_ids = np.array([name_to_tid[t] for t in type_names], dtype=np.int32)
        self._id_to_index = {int(nid): i for i, nid in enumerate(self.node_ids)}
        self._type_indices = {
            t: np.flatnonzero(self.type_ids == name_to_tid[t]) for t in self.type_names
        }

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def feature_width(self) -> int:
        return self.features.shape[1]

    @property
    def schema(self) -> tuple[NodeType, ...]:
        return tuple(NodeType(t, t == self.center_type) for t in self.type_names)

    @property
    def context_types(self) -> list[str]:
        return [t for t in self.type_names if t != self.center_type]

    def type_name_of(self, index: int) -> str:
        return self.type_names[self.type_ids[index]]

    def indices_of_type(self, name: str) -> np.ndarray:
        return self._type_indices[name]

    def index_of(self, node_id: int) -> int:
        try:
            return self._id_to_index[int(node_id)]
        except KeyError:
            raise DatasetError(f"unknown node id {node_id}")


class EventDataset:
    """An AHIN plus its event set and optional evaluation-only labels."""

    def __init__(self, ahin: Ahin, events: list[Event], labels=None):
        self.ahin = ahin
        self.events = list(events)
        if not self.events:
            raise DatasetError("dataset contains no events")
        seen_eids: set[int] = set()
        seen_centers: set[int] = set()
        for ev in self.events:
            if ev.event_id in seen_eids:
                raise DatasetError(f"duplicate event id {ev.event_id}")
            seen_eids.add(ev.event_id)
            if ev.center in seen_centers:
                raise DatasetError(
                    f"duplicate center: node {int(ahin.node_ids[ev.center])} "
                    f"identifies more than one event"
                )
            seen_centers.add(ev.center)
            self._validate_event(ev)
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int8)
            if labels.shape != (len(self.events),):
                raise DatasetError("labels length must equal event count")
            if not np.isin(labels, (0, 1)).all():
                raise DatasetError("labels must be 0 or 1")
        self.labels = labels

    def _validate_event(self, ev: Event) -> None:
        ahin = self.ahin
        for idx in ev.nodes:
            if not 0 <= idx < ahin.n_nodes:
                raise DatasetError(f"event {ev.event_id}: node index {idx} out of range")
        if not ev.context:
            raise DatasetError(f"event {ev.event_id}: empty context")
        if len(set(ev.nodes)) != ev.size:
            raise DatasetError(f"event {ev.event_id}: duplicate node within event")
        if ahin.type_name_of(ev.center) != ahin.center_type:
            raise DatasetError(
                f"event {ev.event_id}: center node is of type "
                f"{ahin.type_name_of(ev.center)!r}, expected {ahin.center_type!r}"
            )
        for idx in ev.context:
            if ahin.type_name_of(idx) == ahin.center_type:
                raise DatasetError(
                    f"event {ev.event_id}: context node of center type breaks the star schema"
                )

    @property
    def m(self) -> int:
        return len(self.events)

    def with_labels(self, labels) -> "EventDataset":
        return EventDataset(self.ahin, self.events, labels)


def metapath_count(a: Event, b: Event) -> int:
    """Number of meta-path instances between two events.

    Under a star schema every meta-path between two centers passes through
    exactly one shared context node, so this is the shared-context count.
    """
    if a.event_id == b.event_id:
        raise ValueError("meta-path count requires two distinct events")
    return len(set(a.context) & set(b.context))


def shared_node_count(a: Event, b: Event) -> int:
    """Count of node ids present in both events, centers included."""
    if a.event_id == b.event_id:
        raise ValueError("shared-node count requires two distinct events")
    return len(set(a.nodes) & set(b.nodes))


# ---------------------------------------------------------------------------
# file IO
#
# nodes file:  node_id<TAB>type_name<TAB>f_1,f_2,...,f_k
# events file: event_id<TAB>center_node_id<TAB>ctx_id_1,ctx_id_2,...
# labels file: event_id<TAB>{0|1}


def load_dataset(nodes_path, events_path, labels_path=None) -> EventDataset:
    """Load and validate a dataset from its node/event (and optional label) files."""
    node_ids, type_names, features = _parse_nodes(Path(nodes_path))
    ahin_index = {int(nid): i for i, nid in enumerate(node_ids)}
    raw_events = _parse_events(Path(events_path), ahin_index)

    center_types = {type_names[center] for _, center, _ in raw_events}
    if len(center_types) > 1:
        raise DatasetError(f"inconsistent center types across events: {sorted(center_types)}")
    center_type = center_types.pop()

    ahin = Ahin(node_ids, type_names, features, center_type)
    events = [Event(eid, center, ctx) for eid, center, ctx in raw_events]
    labels = None
    if labels_path is not None:
        labels = _parse_labels(Path(labels_path), [e.event_id for e in events])
    return EventDataset(ahin, events, labels)


def load_dataset_dir(directory) -> EventDataset:
    """Load a dataset from a directory using the standard file names."""
    d = Path(directory)
    labels = d / LABELS_FILENAME
    return load_dataset(
        d / NODES_FILENAME,
        d / EVENTS_FILENAME,
        labels if labels.exists() else None,
    )


def save_dataset(dataset: EventDataset, directory) -> list[Path]:
    """Write a dataset to a directory; round-trips bit-exactly through load."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ahin = dataset.ahin
    written = []

    nodes_path = d / NODES_FILENAME
    with nodes_path.open("w", encoding="utf-8") as fh:
        for i in range(ahin.n_nodes):
            feats = ",".join(repr(float(x)) for x in ahin.features[i])
            fh.write(f"{int(ahin.node_ids[i])}\t{ahin.type_name_of(i)}\t{feats}\n")
    written.append(nodes_path)

    events_path = d / EVENTS_FILENAME
    with events_path.open("w", encoding="utf-8") as fh:
        for ev in dataset.events:
            ctx = ",".join(str(int(ahin.node_ids[i])) for i in ev.context)
            fh.write(f"{ev.event_id}\t{int(ahin.node_ids[ev.center])}\t{ctx}\n")
    written.append(events_path)

    if dataset.labels is not None:
        labels_path = d / LABELS_FILENAME
        with labels_path.open("w", encoding="utf-8") as fh:
            for ev, lab in zip(dataset.events, dataset.labels):
                fh.write(f"{ev.event_id}\t{int(lab)}\n")
        written.append(labels_path)
    return written


def _parse_nodes(path: Path):
    node_ids: list[int] = []
    type_names: list[str] = []
    rows: list[list[float]] = []
    width = None
    seen: set[int] = set()
    for lineno, line in _records(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetError(f"{path}:{lineno}: malformed record (expected 3 tab-separated fields)")
        raw_id, type_name, raw_feats = parts
        try:
            nid = int(raw_id)
            feats = [float(x) for x in raw_feats.split(",")]
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: malformed record")
        if not type_name:
            raise DatasetError(f"{path}:{lineno}: malformed record (empty type name)")
        if width is None:
            width = len(feats)
        elif len(feats) != width:
            raise DatasetError(
                f"{path}:{lineno}: feature-width mismatch (got {len(feats)}, expected {width})"
            )
        if nid in seen:
            raise DatasetError(f"{path}:{lineno}: duplicate node id {nid}")
        seen.add(nid)
        node_ids.append(nid)
        type_names.append(type_name)
        rows.append(feats)
    if not node_ids:
        raise DatasetError(f"{path}: no node records")
    return node_ids, type_names, np.array(rows, dtype=np.float64)


def _parse_events(path: Path, ahin_index: dict[int, int]):
    events = []
    for lineno, line in _records(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetError(f"{path}:{lineno}: malformed record (expected 3 tab-separated fields)")
        raw_eid, raw_center, raw_ctx = parts
        try:
            eid = int(raw_eid)
            center_id = int(raw_center)
            ctx_ids = [int(x) for x in raw_ctx.split(",")] if raw_ctx else []
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: malformed record")
        for nid in [center_id] + ctx_ids:
            if nid not in ahin_index:
                raise DatasetError(f"{path}:{lineno}: unknown node id {nid}")
        events.append((eid, ahin_index[center_id], tuple(ahin_index[c] for c in ctx_ids)))
    if not events:
        raise DatasetError(f"{path}: no event records")
    return events


def _parse_labels(path: Path, event_ids: list[int]) -> np.ndarray:
    by_id: dict[int, int] = {}
    known = set(event_ids)
    for lineno, line in _records(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetError(f"{path}:{lineno}: malformed record (expected 2 tab-separated fields)")
        try:
            eid = int(parts[0])
            lab = int(parts[1])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: malformed record")
        if lab not in (0, 1):
            raise DatasetError(f"{path}:{lineno}: label must be 0 or 1")
        if eid not in known:
            raise DatasetError(f"{path}:{lineno}: unknown event id {eid}")
        if eid in by_id:
            raise DatasetError(f"{path}:{lineno}: duplicate label for event {eid}")
        by_id[eid] = lab
    missing = known - set(by_id)
    if missing:
        raise DatasetError(f"{path}: missing labels for {len(missing)} events")
    return np.array([by_id[eid] for eid in event_ids], dtype=np.int8)


def _records(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            yield lineno, line
