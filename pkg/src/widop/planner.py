"""Algorithm selection and ordering for detection workflows.

Each registered algorithm declares what data kinds it consumes and
produces, which object characteristics it serves, and optionally which
algorithm it must run after.  Given the characteristics attached to a
target concept, the planner selects every algorithm serving one of
them, pulls in prerequisites (predecessor chains and producers of
consumed data kinds), and orders the result topologically.  Ties keep
registry order, so plans are stable across runs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .kb import ANY, KnowledgeBase


class PlanError(Exception):
    """Raised when a plan cannot be built: cycles, missing producers, gaps."""


class Characteristic(str, enum.Enum):
    VERTICAL_GEOMETRY = "VerticalGeometry"
    GEOMETRY_HEIGHT = "GeometryHeight"
    LINES_3D = "Lines3D"
    FRONT_FACE = "FrontFace"
    PERPENDICULAR_ELEMENTS = "PerpendicularElements"
    PARALLEL_ELEMENTS = "ParallelElements"
    HORIZONTAL_GEOMETRY = "HorizontalGeometry"

    def __str__(self) -> str:
        return self.value


class DataKind(str, enum.Enum):
    POINT_CLOUD = "PointCloud"
    POINT_2D = "Point_2D"
    SUB_POINT_CLOUD = "SubPointCloud"
    POINT_3D = "Point_3D"
    LINE_3D = "Line_3D"
    NUMBER = "number"
    BOOLEAN = "Boolean"
    ANGLE = "angle"

    def __str__(self) -> str:
        return self.value


#: The raw scene input; nothing in a registry has to produce it.
RAW_INPUT = DataKind.POINT_CLOUD


@dataclass(frozen=True)
class AlgorithmDescriptor:
    """One processing step.

    `successor` names the algorithm this one succeeds, i.e. must run
    after; None for entry points.
    """

    name: str
    inputs: tuple[DataKind, ...]
    outputs: tuple[DataKind, ...]
    designed_for: frozenset[Characteristic]
    successor: str | None = None


class Registry:
    """Ordered collection of algorithm descriptors."""

    def __init__(self) -> None:
        self._rows: list[AlgorithmDescriptor] = []
        self._by_name: dict[str, AlgorithmDescriptor] = {}

    def register(self, descriptor: AlgorithmDescriptor) -> None:
        if descriptor.name in self._by_name:
            raise PlanError(f"algorithm already registered: {descriptor.name}")
        if descriptor.successor is not None and descriptor.successor not in self._by_name:
            raise PlanError(f"algorithm {descriptor.name} succeeds unknown "
                            f"algorithm {descriptor.successor}")
        self._rows.append(descriptor)
        self._by_name[descriptor.name] = descriptor

    def __len__(self) -> int:
        return len(self._rows)

    def __iter__(self):
        return iter(self._rows)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def get(self, name: str) -> AlgorithmDescriptor:
        if name not in self._by_name:
            raise PlanError(f"unknown algorithm: {name}")
        return self._by_name[name]

    def row_index(self, name: str) -> int:
        return self._rows.index(self.get(name))

    def names(self) -> list[str]:
        return [d.name for d in self._rows]

    def producers_of(self, kind: DataKind) -> list[str]:
        return [d.name for d in self._rows if kind in d.outputs]


def default_registry() -> Registry:
    reg = Registry()
    rows = [
        AlgorithmDescriptor(
            "VerticalObjectsDetection",
            (DataKind.POINT_CLOUD,), (DataKind.POINT_2D,),
            frozenset({Characteristic.VERTICAL_GEOMETRY})),
        AlgorithmDescriptor(
            "Segmentation2D",
            (DataKind.POINT_2D, DataKind.POINT_CLOUD), (DataKind.SUB_POINT_CLOUD,),
            frozenset({Characteristic.VERTICAL_GEOMETRY}),
            successor="VerticalObjectsDetection"),
        AlgorithmDescriptor(
            "BoundingBox",
            (DataKind.SUB_POINT_CLOUD,), (DataKind.POINT_3D,),
            frozenset({Characteristic.VERTICAL_GEOMETRY}),
            successor="Segmentation2D"),
        AlgorithmDescriptor(
            "ApproximateHeight",
            (DataKind.SUB_POINT_CLOUD,), (DataKind.NUMBER,),
            frozenset({Characteristic.GEOMETRY_HEIGHT}),
            successor="Segmentation2D"),
        AlgorithmDescriptor(
            "RANSACLineDetection",
            (DataKind.SUB_POINT_CLOUD,), (DataKind.LINE_3D,),
            frozenset({Characteristic.LINES_3D}),
            successor="Segmentation2D"),
        AlgorithmDescriptor(
            "FrontFaceDetection",
            (DataKind.SUB_POINT_CLOUD,), (DataKind.BOOLEAN,),
            frozenset({Characteristic.FRONT_FACE}),
            successor="Segmentation2D"),
        AlgorithmDescriptor(
            "CheckPerpendicular",
            (DataKind.LINE_3D,), (DataKind.BOOLEAN, DataKind.ANGLE),
            frozenset({Characteristic.PERPENDICULAR_ELEMENTS}),
            successor="RANSACLineDetection"),
        AlgorithmDescriptor(
            "CheckParallel",
            (DataKind.LINE_3D,), (DataKind.BOOLEAN, DataKind.ANGLE),
            frozenset({Characteristic.PARALLEL_ELEMENTS}),
            successor="RANSACLineDetection"),
    ]
    for row in rows:
        reg.register(row)
    return reg


# -- selection -------------------------------------------------------------


def select_algorithms(registry: Registry,
                      characteristics: set[Characteristic]) -> list[str]:
    """Algorithms serving the characteristics, closed under prerequisites."""
    selected = {d.name for d in registry if d.designed_for & characteristics}
    while True:
        grown = set(selected)
        for name in selected:
            desc = registry.get(name)
            if desc.successor is not None:
                grown.add(desc.successor)
            for kind in desc.inputs:
                if kind is RAW_INPUT:
                    continue
                grown.update(registry.producers_of(kind))
        if grown == selected:
            break
        selected = grown
    return sorted(selected, key=registry.row_index)


# -- ordering ------------------------------------------------------------------


@dataclass(frozen=True)
class DataflowEdge:
    producer: str
    consumer: str
    kind: DataKind


@dataclass
class ExecutionPlan:
    steps: list[AlgorithmDescriptor]
    dataflow: list[DataflowEdge] = field(default_factory=list)

    def step_names(self) -> list[str]:
        return [s.name for s in self.steps]


def build_plan(registry: Registry, selected: list[str] | set[str]) -> ExecutionPlan:
    """Topologically order the selected algorithms and wire their dataflow."""
    chosen = sorted(set(selected), key=registry.row_index)
    chosen_set = set(chosen)
    for name in chosen:
        desc = registry.get(name)
        if desc.successor is not None and desc.successor not in chosen_set:
            raise PlanError(f"{name} must follow {desc.successor}, "
                            "which is not part of the selection")
        for kind in desc.inputs:
            if kind is RAW_INPUT:
                continue
            if not any(p in chosen_set for p in registry.producers_of(kind)):
                raise PlanError(f"no selected algorithm produces {kind} "
                                f"needed by {name}")

    edges: dict[str, set[str]] = {name: set() for name in chosen}
    indegree = {name: 0 for name in chosen}

    def add_edge(frm: str, to: str) -> None:
        if to not in edges[frm]:
            edges[frm].add(to)
            indegree[to] += 1

    for name in chosen:
        desc = registry.get(name)
        if desc.successor is not None:
            add_edge(desc.successor, name)
        for kind in desc.inputs:
            if kind is RAW_INPUT:
                continue
            for producer in registry.producers_of(kind):
                if producer in chosen_set and producer != name:
                    add_edge(producer, name)

    order: list[str] = []
    ready = sorted((n for n in chosen if indegree[n] == 0),
                   key=lambda n: (registry.row_index(n), n))
    while ready:
        node = ready.pop(0)
        order.append(node)
        released = []
        for to in edges[node]:
            indegree[to] -= 1
            if indegree[to] == 0:
                released.append(to)
        ready.extend(released)
        ready.sort(key=lambda n: (registry.row_index(n), n))
    if len(order) != len(chosen):
        stuck = sorted(set(chosen) - set(order))
        raise PlanError(f"dependency cycle involving: {', '.join(stuck)}")

    position = {name: i for i, name in enumerate(order)}
    dataflow: list[DataflowEdge] = []
    for name in order:
        desc = registry.get(name)
        for kind in desc.inputs:
            if kind is RAW_INPUT:
                continue
            earlier = [p for p in registry.producers_of(kind)
                       if p in position and position[p] < position[name]]
            if not earlier:
                raise PlanError(f"no producer of {kind} runs before {name}")
            earlier.sort(key=lambda p: position[p])
            dataflow.append(DataflowEdge(earlier[0], name, kind))
    return ExecutionPlan([registry.get(n) for n in order], dataflow)


def plan_for_characteristics(registry: Registry,
                             characteristics: set[Characteristic]) -> ExecutionPlan:
    return build_plan(registry, select_algorithms(registry, characteristics))


# -- knowledge-base integration ------------------------------------------------------


def characteristics_for_concept(kb: KnowledgeBase, concept: str) -> set[Characteristic]:
    """Characteristics attached to the concept or its nearest profiled ancestor."""
    for node in kb.ancestors(concept):
        found = set()
        for assertion in kb.query(node, "hasCharacteristics", ANY):
            try:
                found.add(Characteristic(assertion.object))
            except ValueError as exc:
                raise PlanError(f"unknown characteristic {assertion.object!r} "
                                f"on {node}") from exc
        if found:
            return found
    return set()


def registry_from_kb(kb: KnowledgeBase) -> Registry:
    """Rebuild a registry from Algorithm individuals in a knowledge base."""
    rows = []
    for ind in kb.instances_of("Algorithm"):
        orders = [a.object for a in kb.query(ind, "hasRegistryOrder", ANY)]
        rank = min(orders) if orders else float("inf")
        rows.append((rank, ind))
    rows.sort()
    reg = Registry()
    for _, ind in rows:
        inputs = tuple(_kind(a.object, ind)
                       for a in kb.query(ind, "hasInput", ANY))
        outputs = tuple(_kind(a.object, ind)
                        for a in kb.query(ind, "hasOutput", ANY))
        designed = frozenset(_characteristic(a.object, ind)
                             for a in kb.query(ind, "isDesignedFor", ANY))
        successors = [a.object for a in kb.query(ind, "hasSuccessor", ANY)]
        if len(successors) > 1:
            raise PlanError(f"{ind} succeeds more than one algorithm")
        reg.register(AlgorithmDescriptor(
            ind, inputs, outputs, designed,
            successors[0] if successors else None))
    return reg


def _kind(value, owner: str) -> DataKind:
    try:
        return DataKind(value)
    except ValueError as exc:
        raise PlanError(f"unknown data kind {value!r} on {owner}") from exc


def _characteristic(value, owner: str) -> Characteristic:
    try:
        return Characteristic(value)
    except ValueError as exc:
        raise PlanError(f"unknown characteristic {value!r} on {owner}") from exc
