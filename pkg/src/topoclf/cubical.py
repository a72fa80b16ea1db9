"""Sublevel cubical filtrations of grayscale images and their persistence.

The pixel grid is read as a cubical complex in which each pixel is a closed
unit square (top cell): the square carries the pixel intensity and every
vertex and edge carries the minimum intensity over its incident squares. The
complex at threshold t is then exactly the union of the closed squares of
pixels with intensity <= t, i.e. the binary image at that threshold.

``compute_persistence`` pairs dimension-0 features with a union-find sweep
over squares (components of the closed-square union are the 8-connected
pixel components) and dimension-1 features by reducing the square-boundary
matrix over Z/2 in filtration order. ``oracle_persistence`` re-derives both
diagrams by naive left-to-right reduction of the full boundary matrix; it is
a cross-check for test-scale inputs only and refuses large complexes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "INF",
    "ORACLE_CELL_LIMIT",
    "CubicalFiltration",
    "PersistenceDiagram",
    "build_sublevel_filtration",
    "compute_persistence",
    "oracle_persistence",
    "diagrams_to_csv",
    "write_diagram_csv",
]

INF = math.inf

# naive full-matrix reduction is quadratic-ish; keep it to toy complexes
ORACLE_CELL_LIMIT = 1000

_PAD = 1 << 30  # above any 8-bit intensity, never survives the min-reduce

_NEIGHBORS8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class PersistenceDiagram:
    """Multiset of (birth, death) pairs for one homology dimension.

    Pairs are sorted by (birth, death); deaths are intensities, or
    ``math.inf`` for essential classes. Zero-persistence pairs are never
    stored.
    """

    dimension: int
    pairs: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        for birth, death in self.pairs:
            if not birth < death:
                raise ValueError(f"degenerate diagram pair ({birth}, {death})")

    def betti_at(self, t: float) -> int:
        """Number of features alive at threshold t: born <= t, dying after t."""
        return sum(1 for b, d in self.pairs if b <= t < d)


@dataclass(frozen=True, eq=False)
class CubicalFiltration:
    """Filtration values for every cell of an H x W pixel grid.

    square_values : (H, W)     pixel intensities (top cells)
    vertex_values : (H+1, W+1) min over incident squares
    hedge_values  : (H+1, W)   horizontal edges, min over squares above/below
    vedge_values  : (H, W+1)   vertical edges, min over squares left/right
    """

    height: int
    width: int
    square_values: np.ndarray
    vertex_values: np.ndarray
    hedge_values: np.ndarray
    vedge_values: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(
            self.vertex_values.size
            + self.hedge_values.size
            + self.vedge_values.size
            + self.square_values.size
        )


def build_sublevel_filtration(img) -> CubicalFiltration:
    """T-construction filtration of a grayscale image (or 2-D int array)."""
    px = np.asarray(getattr(img, "pixels", img), dtype=np.int64)
    if px.ndim != 2 or min(px.shape) < 1:
        raise ValueError(f"expected a 2-D image with positive size, got shape {px.shape}")
    if px.min() < 0 or px.max() > 255:
        raise ValueError("intensities must lie in [0, 255]")
    h, w = px.shape
    padded = np.full((h + 2, w + 2), _PAD, dtype=np.int64)
    padded[1:-1, 1:-1] = px
    vertex = np.minimum.reduce(
        [padded[:-1, :-1], padded[:-1, 1:], padded[1:, :-1], padded[1:, 1:]]
    )
    hedge = np.minimum(padded[:-1, 1:-1], padded[1:, 1:-1])
    vedge = np.minimum(padded[1:-1, :-1], padded[1:-1, 1:])
    for arr in (px, vertex, hedge, vedge):
        arr.setflags(write=False)
    return CubicalFiltration(
        height=h,
        width=w,
        square_values=px,
        vertex_values=vertex,
        hedge_values=hedge,
        vedge_values=vedge,
    )


def compute_persistence(
    filt: CubicalFiltration,
) -> tuple[PersistenceDiagram, PersistenceDiagram]:
    """Dimension-0 and dimension-1 persistence diagrams of the filtration.

    Deterministic: ties between equal-valued cells are broken by ascending
    row-major index, and the elder rule keeps the component with the smaller
    (birth value, creator index) key. The single essential component is
    reported with death = inf; the full grid has no essential loops.
    """
    return _dim0_union_find(filt), _dim1_square_reduction(filt)


def oracle_persistence(
    filt: CubicalFiltration,
) -> tuple[PersistenceDiagram, PersistenceDiagram]:
    """Diagrams by naive column reduction of the full boundary matrix.

    No clearing, no dimension restriction: every cell (vertices, edges,
    squares) contributes a column, sorted by (value, dimension, index), and
    columns are reduced strictly left to right. Intended as an independent
    cross-check; raises on complexes above ``ORACLE_CELL_LIMIT`` cells.
    """
    if filt.n_cells > ORACLE_CELL_LIMIT:
        raise ValueError(
            f"oracle_persistence is limited to {ORACLE_CELL_LIMIT} cells, "
            f"got {filt.n_cells}"
        )
    values, dims, boundaries = _enumerate_cells(filt)
    n = len(values)
    order = sorted(range(n), key=lambda k: (values[k], dims[k], k))
    pos_of = {cell: pos for pos, cell in enumerate(order)}

    columns: list[int] = []
    for cell in order:
        col = 0
        for face in boundaries[cell]:
            col ^= 1 << pos_of[face]
        columns.append(col)

    pivot_owner: dict[int, int] = {}
    for j in range(n):
        col = columns[j]
        while col:
            pivot = col.bit_length() - 1
            k = pivot_owner.get(pivot)
            if k is None:
                break
            col ^= columns[k]
        columns[j] = col
        if col:
            pivot_owner[col.bit_length() - 1] = j

    pairs0: list[tuple[int, float]] = []
    pairs1: list[tuple[int, float]] = []
    for pivot, j in pivot_owner.items():
        birth = values[order[pivot]]
        death = values[order[j]]
        if birth == death:
            continue
        dim = dims[order[pivot]]
        (pairs0 if dim == 0 else pairs1).append((birth, death))
    for pos in range(n):
        if columns[pos] == 0 and pos not in pivot_owner:
            dim = dims[order[pos]]
            if dim == 0:
                pairs0.append((values[order[pos]], INF))
            elif dim == 1:
                pairs1.append((values[order[pos]], INF))
    pairs0.sort()
    pairs1.sort()
    return PersistenceDiagram(0, tuple(pairs0)), PersistenceDiagram(1, tuple(pairs1))


def diagrams_to_csv(pd0: PersistenceDiagram, pd1: PersistenceDiagram) -> str:
    """CSV dump with columns dim,birth,death; essential deaths are ``inf``."""
    lines = ["dim,birth,death"]
    for pd in (pd0, pd1):
        for birth, death in pd.pairs:
            token = "inf" if math.isinf(death) else str(int(death))
            lines.append(f"{pd.dimension},{int(birth)},{token}")
    return "\n".join(lines) + "\n"


def write_diagram_csv(pd0: PersistenceDiagram, pd1: PersistenceDiagram, path) -> None:
    from pathlib import Path

    Path(path).write_text(diagrams_to_csv(pd0, pd1), encoding="utf-8")


def _dim0_union_find(filt: CubicalFiltration) -> PersistenceDiagram:
    # Components of the closed-square union at threshold t are the
    # 8-connected components of pixels <= t (diagonal squares meet at a
    # vertex), and a merge happens exactly when the later square enters.
    h, w = filt.height, filt.width
    values = filt.square_values.ravel()
    n = values.size
    order = np.lexsort((np.arange(n), values))
    rank_of = np.empty(n, dtype=np.int64)
    rank_of[order] = np.arange(n)

    vals = values.tolist()
    ranks = rank_of.tolist()
    parent = list(range(n))
    birth_value = list(vals)
    birth_index = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    pairs: list[tuple[int, float]] = []
    for pos, idx in enumerate(order.tolist()):
        v = vals[idx]
        row, col = divmod(idx, w)
        for dr, dc in _NEIGHBORS8:
            r = row + dr
            c = col + dc
            if not (0 <= r < h and 0 <= c < w):
                continue
            nb = r * w + c
            if ranks[nb] > pos:
                continue  # neighbour square not active yet
            ra = find(idx)
            rb = find(nb)
            if ra == rb:
                continue
            if (birth_value[ra], birth_index[ra]) <= (birth_value[rb], birth_index[rb]):
                elder, young = ra, rb
            else:
                elder, young = rb, ra
            if birth_value[young] != v:
                pairs.append((int(birth_value[young]), int(v)))
            parent[young] = elder
    root = find(0)
    pairs.append((int(birth_value[root]), INF))
    pairs.sort()
    return PersistenceDiagram(0, tuple(pairs))


def _dim1_square_reduction(filt: CubicalFiltration) -> PersistenceDiagram:
    # Z/2 reduction of the square-boundary columns in filtration order;
    # lowest-one pairs (edge, square) are exactly the dimension-1 pairs of
    # the full reduction because square columns only ever add to each other.
    h, w = filt.height, filt.width
    n_h = filt.hedge_values.size
    evals = np.concatenate([filt.hedge_values.ravel(), filt.vedge_values.ravel()])
    n_e = evals.size
    edge_order = np.lexsort((np.arange(n_e), evals))
    edge_rank_arr = np.empty(n_e, dtype=np.int64)
    edge_rank_arr[edge_order] = np.arange(n_e)
    edge_rank = edge_rank_arr.tolist()
    value_at_rank = evals[edge_order].tolist()

    svals_arr = filt.square_values.ravel()
    square_order = np.lexsort((np.arange(svals_arr.size), svals_arr)).tolist()
    svals = svals_arr.tolist()

    lookup: dict[int, int] = {}  # pivot rank -> reduced column bitmask
    pairs: list[tuple[int, float]] = []
    for idx in square_order:
        row, col = divmod(idx, w)
        top = row * w + col
        bottom = (row + 1) * w + col
        left = n_h + row * (w + 1) + col
        column = (
            (1 << edge_rank[top])
            ^ (1 << edge_rank[bottom])
            ^ (1 << edge_rank[left])
            ^ (1 << edge_rank[left + 1])
        )
        while True:
            pivot = column.bit_length() - 1
            other = lookup.get(pivot)
            if other is None:
                break
            column ^= other
        if column == 0:
            raise AssertionError("2-cycle in a planar cubical complex")
        lookup[column.bit_length() - 1] = column
        birth = value_at_rank[column.bit_length() - 1]
        death = svals[idx]
        if birth != death:
            pairs.append((int(birth), int(death)))
    pairs.sort()
    return PersistenceDiagram(1, tuple(pairs))


def _enumerate_cells(
    filt: CubicalFiltration,
) -> tuple[list[int], list[int], list[tuple[int, ...]]]:
    # canonical cell ids: vertices, then horizontal edges, then vertical
    # edges, then squares, each block row-major
    h, w = filt.height, filt.width
    n_v = (h + 1) * (w + 1)
    n_he = (h + 1) * w

    def vid(i: int, j: int) -> int:
        return i * (w + 1) + j

    def heid(i: int, j: int) -> int:
        return n_v + i * w + j

    def veid(i: int, j: int) -> int:
        return n_v + n_he + i * (w + 1) + j

    values: list[int] = []
    dims: list[int] = []
    boundaries: list[tuple[int, ...]] = []
    for i in range(h + 1):
        for j in range(w + 1):
            values.append(int(filt.vertex_values[i, j]))
            dims.append(0)
            boundaries.append(())
    for i in range(h + 1):
        for j in range(w):
            values.append(int(filt.hedge_values[i, j]))
            dims.append(1)
            boundaries.append((vid(i, j), vid(i, j + 1)))
    for i in range(h):
        for j in range(w + 1):
            values.append(int(filt.vedge_values[i, j]))
            dims.append(1)
            boundaries.append((vid(i, j), vid(i + 1, j)))
    for i in range(h):
        for j in range(w):
            values.append(int(filt.square_values[i, j]))
            dims.append(2)
            boundaries.append((heid(i, j), heid(i + 1, j), veid(i, j), veid(i, j + 1)))
    return values, dims, boundaries
