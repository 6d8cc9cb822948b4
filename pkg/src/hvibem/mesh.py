"""Polygonal boundary meshes for rectangular domains and the contact dual mesh."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Raised for inconsistent geometry, part or load specifications."""


class Part(enum.IntEnum):
    DIRICHLET = 0
    NEUMANN = 1
    CONTACT = 2

    @classmethod
    def parse(cls, value: "Part | str") -> "Part":
        if isinstance(value, Part):
            return value
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ConfigurationError(f"unknown boundary part {value!r}") from None


# Counterclockwise side order of a rectangle, starting at the lower-left corner.
SIDES = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class BoundaryMesh:
    """Closed, counterclockwise polygonal boundary mesh.

    ``vertices`` are stored in working units; ``scale`` is the factor that maps
    physical coordinates to working coordinates (``vertices = scale * physical``).
    """

    vertices: np.ndarray
    elements: np.ndarray
    labels: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "elements", np.asarray(self.elements, dtype=int))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))
        if self.elements.ndim != 2 or self.elements.shape[1] != 2:
            raise ConfigurationError("elements must be an (E, 2) index array")
        if self.labels.shape != (len(self.elements),):
            raise ConfigurationError("need exactly one part label per element")
        _check_closed_loop(self.elements, len(self.vertices))

    @property
    def n_nodes(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def starts(self) -> np.ndarray:
        return self.vertices[self.elements[:, 0]]

    @property
    def ends(self) -> np.ndarray:
        return self.vertices[self.elements[:, 1]]

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.ends - self.starts, axis=1)

    @property
    def physical_lengths(self) -> np.ndarray:
        return self.lengths / self.scale

    @property
    def physical_vertices(self) -> np.ndarray:
        return self.vertices / self.scale

    @property
    def tangents(self) -> np.ndarray:
        d = self.ends - self.starts
        return d / np.linalg.norm(d, axis=1)[:, None]

    @property
    def normals(self) -> np.ndarray:
        # outward for a counterclockwise loop
        t = self.tangents
        return np.column_stack([t[:, 1], -t[:, 0]])

    @property
    def h(self) -> float:
        """Largest physical element length."""
        return float(self.physical_lengths.max())

    def signed_area(self) -> float:
        a, b = self.starts, self.ends
        return 0.5 * float(np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]))

    def part_nodes(self, part: Part) -> np.ndarray:
        """Sorted node indices lying on the closure of ``part``."""
        mask = self.labels == Part.parse(part)
        return np.unique(self.elements[mask])

    @property
    def dirichlet_nodes(self) -> np.ndarray:
        return self.part_nodes(Part.DIRICHLET)

    @property
    def constrained(self) -> np.ndarray:
        flag = np.zeros(self.n_nodes, dtype=bool)
        flag[self.dirichlet_nodes] = True
        return flag

    @property
    def free_contact_nodes(self) -> np.ndarray:
        """Nodes of the closed contact part that are not Dirichlet-constrained."""
        nodes = self.part_nodes(Part.CONTACT)
        return nodes[~self.constrained[nodes]]

    @property
    def free_neumann_nodes(self) -> np.ndarray:
        """Free Neumann nodes, excluding nodes already counted as contact nodes."""
        nodes = self.part_nodes(Part.NEUMANN)
        contact = np.zeros(self.n_nodes, dtype=bool)
        contact[self.part_nodes(Part.CONTACT)] = True
        return nodes[~self.constrained[nodes] & ~contact[nodes]]

    @property
    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.constrained)

    @property
    def node_parts(self) -> np.ndarray:
        """Per-node part with priority Dirichlet > contact > Neumann."""
        out = np.full(self.n_nodes, int(Part.NEUMANN))
        out[self.part_nodes(Part.CONTACT)] = Part.CONTACT
        out[self.dirichlet_nodes] = Part.DIRICHLET
        return out

    def part_length(self, part: Part) -> float:
        mask = self.labels == Part.parse(part)
        return float(self.physical_lengths[mask].sum())

    def node_elements(self) -> list[list[int]]:
        """Elements incident to each node."""
        incident: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for e, (a, b) in enumerate(self.elements):
            incident[a].append(e)
            incident[b].append(e)
        return incident

    def with_vertices(self, vertices: np.ndarray, scale: float) -> "BoundaryMesh":
        return BoundaryMesh(vertices, self.elements, self.labels, scale)

    def summary(self) -> dict:
        return {
            "nodes": self.n_nodes,
            "elements": self.n_elements,
            "dirichlet_nodes": int(len(self.dirichlet_nodes)),
            "free_contact_nodes": int(len(self.free_contact_nodes)),
            "free_neumann_nodes": int(len(self.free_neumann_nodes)),
            "displacement_unknowns": int(2 * len(self.free_nodes)),
        }

    def to_csv(self, path: str | Path) -> None:
        """Write ``node, x, y, part, constrained`` rows in physical units."""
        xy = self.physical_vertices
        parts = self.node_parts
        constrained = self.constrained
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "x", "y", "part", "constrained"])
            for i in range(self.n_nodes):
                w.writerow([i, f"{xy[i, 0]:.12g}", f"{xy[i, 1]:.12g}",
                            Part(parts[i]).name.lower(), int(constrained[i])])


def _check_closed_loop(elements: np.ndarray, n_nodes: int) -> None:
    if len(elements) < 3:
        raise ConfigurationError("a closed boundary needs at least three elements")
    starts = np.sort(elements[:, 0])
    ends = np.sort(elements[:, 1])
    if not (np.array_equal(starts, np.arange(n_nodes)) and np.array_equal(ends, np.arange(n_nodes))):
        raise ConfigurationError("elements must form a single closed loop over all nodes")
    succ = np.empty(n_nodes, dtype=int)
    succ[elements[:, 0]] = elements[:, 1]
    node, steps = 0, 0
    while True:
        node = succ[node]
        steps += 1
        if node == 0:
            break
    if steps != n_nodes:
        raise ConfigurationError("elements form more than one loop")


@dataclass(frozen=True)
class PartSpec:
    """Assignment of boundary parts to the four rectangle sides.

    Each side maps to a list of ``(s0, s1, part)`` pieces in side-local arc
    length, measured counterclockwise. The pieces of a side must tile it.
    """

    sides: Mapping[str, Sequence[tuple[float, float, Part]]]

    @classmethod
    def uniform(cls, **side_parts: "Part | str") -> "PartSpec":
        missing = set(SIDES) - set(side_parts)
        if missing:
            raise ConfigurationError(f"no part given for sides {sorted(missing)}")
        return cls({s: [(0.0, float("inf"), Part.parse(p))] for s, p in side_parts.items()})

    @classmethod
    def benchmark(cls) -> "PartSpec":
        """Clamped left edge, contact along the bottom, Neumann elsewhere."""
        return cls.uniform(bottom="contact", right="neumann", top="neumann", left="dirichlet")

    def pieces(self, side: str, length: float) -> list[tuple[float, float, Part]]:
        if side not in self.sides:
            raise ConfigurationError(f"no part given for side {side!r}")
        raw = sorted(((float(a), min(float(b), length), Part.parse(p)) for a, b, p in self.sides[side]),
                     key=lambda t: t[0])
        tol = 1e-12 * max(length, 1.0)
        cursor = 0.0
        for a, b, _ in raw:
            if abs(a - cursor) > tol:
                kind = "gap" if a > cursor else "overlap"
                raise ConfigurationError(f"part spec has a {kind} on side {side!r} at s={cursor:g}")
            if b <= a:
                raise ConfigurationError(f"empty part piece on side {side!r}")
            cursor = b
        if abs(cursor - length) > tol:
            raise ConfigurationError(f"part spec leaves side {side!r} uncovered beyond s={cursor:g}")
        return raw


def _split_counts(lengths: np.ndarray, total: int) -> np.ndarray:
    """Distribute ``total`` elements over pieces proportionally, at least one each."""
    if total < len(lengths):
        raise ConfigurationError("node budget smaller than the number of boundary pieces")
    exact = lengths / lengths.sum() * total
    counts = np.maximum(np.floor(exact).astype(int), 1)
    while counts.sum() < total:
        counts[np.argmax(exact - counts)] += 1
    while counts.sum() > total:
        idx = np.flatnonzero(counts > 1)
        counts[idx[np.argmin((exact - counts)[idx])]] -= 1
    return counts


def build_rectangle_boundary(width: float, height: float, *, h: float | None = None,
                             node_budget: int | None = None,
                             parts: PartSpec | None = None,
                             origin: tuple[float, float] = (0.0, 0.0)) -> BoundaryMesh:
    """Uniform boundary mesh of ``origin + [0, width] x [0, height]``.

    Give either a target element length ``h`` or a total ``node_budget``.
    Corners and part breakpoints are always mesh nodes.
    """
    if width <= 0 or height <= 0:
        raise ConfigurationError("width and height must be positive")
    if (h is None) == (node_budget is None):
        raise ConfigurationError("give exactly one of h or node_budget")
    parts = parts or PartSpec.benchmark()
    x0, y0 = origin
    corners = np.array([[x0, y0], [x0 + width, y0], [x0 + width, y0 + height], [x0, y0 + height]])
    side_len = {"bottom": width, "right": height, "top": width, "left": height}

    pieces = []  # (start point, end point, length, part)
    for k, side in enumerate(SIDES):
        p, q = corners[k], corners[(k + 1) % 4]
        L = side_len[side]
        for a, b, part in parts.pieces(side, L):
            pieces.append((p + (q - p) * a / L, p + (q - p) * b / L, b - a, part))

    lengths = np.array([pc[2] for pc in pieces])
    if h is not None:
        if h <= 0:
            raise ConfigurationError("h must be positive")
        counts = np.maximum(np.rint(lengths / h).astype(int), 1)
    else:
        counts = _split_counts(lengths, int(node_budget))

    vertices, labels = [], []
    for (p, q, _, part), n in zip(pieces, counts):
        s = np.arange(n) / n
        vertices.append(p + s[:, None] * (q - p))
        labels.extend([int(part)] * n)
    vertices = np.vstack(vertices)
    n = len(vertices)
    elements = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    return BoundaryMesh(vertices, elements, np.array(labels))


def refine_uniform(mesh: BoundaryMesh) -> BoundaryMesh:
    """Bisect every element; parent nodes keep their indices."""
    mid = 0.5 * (mesh.starts + mesh.ends)
    n = mesh.n_nodes
    new_ids = n + np.arange(mesh.n_elements)
    a, b = mesh.elements[:, 0], mesh.elements[:, 1]
    elements = np.empty((2 * mesh.n_elements, 2), dtype=int)
    elements[0::2] = np.column_stack([a, new_ids])
    elements[1::2] = np.column_stack([new_ids, b])
    labels = np.repeat(mesh.labels, 2)
    return BoundaryMesh(np.vstack([mesh.vertices, mid]), elements, labels, mesh.scale)


@dataclass(frozen=True)
class DualMesh:
    """Lumping cells on the contact part, one per free contact node.

    ``segments[i]`` lists the ``(element, s0, s1)`` pieces making up cell ``i``
    in element-local coordinates ``s`` in [0, 1]; ``weights`` are physical lengths.
    """

    owners: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    segments: list[list[tuple[int, float, float]]] = field(repr=False)

    @property
    def total_length(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.owners)


def build_dual_mesh(mesh: BoundaryMesh) -> DualMesh:
    """Midpoint dual cells on the contact part with the Dirichlet merge rule."""
    contact = np.flatnonzero(mesh.labels == Part.CONTACT)
    if len(contact) == 0:
        raise ConfigurationError("the contact part is empty")
    constrained = mesh.constrained
    plen = mesh.physical_lengths
    normals = mesh.normals
    cells: dict[int, list[tuple[int, float, float]]] = {}

    def add(node: int, piece: tuple[int, float, float]) -> None:
        cells.setdefault(node, []).append(piece)

    for e in contact:
        a, b = mesh.elements[e]
        halves = ((a, (e, 0.0, 0.5)), (b, (e, 0.5, 1.0)))
        for node, other, piece in ((a, b, halves[0][1]), (b, a, halves[1][1])):
            if not constrained[node]:
                add(int(node), piece)
            elif not constrained[other]:
                add(int(other), piece)
            else:
                raise ConfigurationError(f"contact element {e} has both ends Dirichlet-constrained")

    owners = np.array(sorted(cells), dtype=int)
    segments = []
    weights = np.empty(len(owners))
    cell_normals = np.empty((len(owners), 2))
    for i, node in enumerate(owners):
        pieces = sorted(cells[node], key=lambda t: (t[0], t[1]))
        segments.append(pieces)
        weights[i] = sum((s1 - s0) * plen[e] for e, s0, s1 in pieces)
        # owner element: the first contact element containing the node itself
        own = [e for e, _, _ in pieces if node in mesh.elements[e]]
        cell_normals[i] = normals[own[0] if own else pieces[0][0]]
    return DualMesh(owners, weights, cell_normals, segments)
