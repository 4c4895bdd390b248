"""Triangulated 2D geometry with tagged boundary facets.

Meshes are plain vertex/triangle arrays.  Boundary facets are extracted from
the triangulation, carry a string tag (``wall`` by default, ``inlet`` /
``outlet`` for open ends) and remember the triangle that owns them, which
fixes the outward normal orientation.  A mesh is immutable after
construction; retagging returns a new mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WALL = "wall"
INLET = "inlet"
OUTLET = "outlet"


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh with tagged boundary facets.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, positively oriented
    facets : (nf, 2) int array
        Boundary edges, ordered as traversed by the owning triangle so the
        outward normal is the right-hand rotation of the edge direction.
    facet_tags : (nf,) int array of indices into ``tag_names``
    tag_names : tuple of str
    facet_tri : (nf,) int array, owning triangle of each facet
    """

    vertices: np.ndarray
    triangles: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    tag_names: tuple[str, ...]
    facet_tri: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, dtype=float))
        object.__setattr__(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64))
        object.__setattr__(self, "facets", np.ascontiguousarray(self.facets, dtype=np.int64))
        object.__setattr__(self, "facet_tags", np.ascontiguousarray(self.facet_tags, dtype=np.int64))
        object.__setattr__(self, "facet_tri", np.ascontiguousarray(self.facet_tri, dtype=np.int64))
        for name in ("vertices", "triangles", "facets", "facet_tags", "facet_tri"):
            getattr(self, name).setflags(write=False)
        areas = self.areas
        if np.any(areas <= 0):
            raise ValueError("triangles must be positively oriented with nonzero area")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def facet_vectors(self) -> np.ndarray:
        """Edge vectors of boundary facets (first vertex to second)."""
        return self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]]

    @property
    def facet_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.facet_vectors, axis=1)

    @property
    def facet_normals(self) -> np.ndarray:
        """Unit outward normals of boundary facets."""
        t = self.facet_vectors
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def tag_id(self, tag: str) -> int:
        if tag not in self.tag_names:
            raise KeyError(f"unknown boundary tag {tag!r}; known: {self.tag_names}")
        return self.tag_names.index(tag)

    def facets_with_tag(self, tag: str) -> np.ndarray:
        """Indices of boundary facets carrying ``tag``."""
        return np.nonzero(self.facet_tags == self.tag_id(tag))[0]

    def retag(self, tag: str, predicate) -> "Mesh":
        """Return a mesh where facets whose midpoint satisfies ``predicate``
        carry ``tag``.  ``predicate`` receives (nf, 2) midpoints and returns
        a boolean mask."""
        mids = 0.5 * (self.vertices[self.facets[:, 0]] + self.vertices[self.facets[:, 1]])
        mask = np.asarray(predicate(mids), dtype=bool)
        names = self.tag_names if tag in self.tag_names else self.tag_names + (tag,)
        tags = self.facet_tags.copy()
        tags[mask] = names.index(tag)
        return Mesh(self.vertices, self.triangles, self.facets, tags, names, self.facet_tri)

    def extent(self) -> tuple[float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(hi[0] - lo[0]), float(hi[1] - lo[1])


def _boundary_facets(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Extract boundary edges (in owning-triangle orientation) and owners."""
    nt = triangles.shape[0]
    # directed edges per triangle, CCW order
    e = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=0
    )
    owner = np.tile(np.arange(nt), 3)
    key = np.sort(e, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    on_boundary = counts[inv] == 1
    if np.any(counts > 2):
        raise ValueError("non-manifold mesh: an edge is shared by more than two triangles")
    return e[on_boundary], owner[on_boundary]


def mesh_from_triangulation(
    vertices: np.ndarray,
    triangles: np.ndarray,
    tags: dict[str, np.ndarray] | None = None,
) -> Mesh:
    """Build a Mesh from raw arrays; all boundary facets default to wall.

    ``tags`` optionally maps tag names to boolean masks over facet midpoints
    (evaluated in insertion order, later tags win).
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    # enforce positive orientation
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    flip = signed < 0
    if np.any(flip):
        triangles = triangles.copy()
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
    facets, owner = _boundary_facets(triangles)
    mesh = Mesh(
        vertices,
        triangles,
        facets,
        np.zeros(facets.shape[0], dtype=np.int64),
        (WALL,),
        owner,
    )
    if tags:
        for name, predicate in tags.items():
            mesh = mesh.retag(name, predicate)
    return mesh


def build_rect_mesh(
    nx: int,
    ny: int,
    extent: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
    x_coords: np.ndarray | None = None,
    y_coords: np.ndarray | None = None,
) -> Mesh:
    """Structured crisscross triangulation of a rectangle.

    Each of the nx-by-ny cells is split into two triangles along alternating
    diagonals.  All outer facets are tagged wall; channel scenarios retag
    inlet/outlet afterwards.  Nonuniform grid lines can be passed explicitly
    through ``x_coords`` / ``y_coords`` (overriding nx/ny/extent).
    """
    if x_coords is None or y_coords is None:
        x0, x1, y0, y1 = extent
        if not (x1 > x0 and y1 > y0):
            raise ValueError("degenerate extent: need x1 > x0 and y1 > y0")
        if nx < 2 or ny < 2:
            raise ValueError("nx and ny must be at least 2")
        x_coords = np.linspace(x0, x1, nx + 1)
        y_coords = np.linspace(y0, y1, ny + 1)
    x_coords = np.asarray(x_coords, dtype=float)
    y_coords = np.asarray(y_coords, dtype=float)
    nx = len(x_coords) - 1
    ny = len(y_coords) - 1
    if np.any(np.diff(x_coords) <= 0) or np.any(np.diff(y_coords) <= 0):
        raise ValueError("grid coordinates must be strictly increasing")
    X, Y = np.meshgrid(x_coords, y_coords, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            # uniform diagonal direction: keeps interior nodes equivalent, so
            # interpolation truncation errors stay smooth instead of forming
            # parity checkerboards in the membrane field
            tris.append((a, b, c))
            tris.append((a, c, d))
    return mesh_from_triangulation(vertices, np.array(tris, dtype=np.int64))


def _block_grid(point_fn, ns: int, nt: int):
    """Vertices and triangles of a mapped structured (ns x nt)-cell block."""
    s = np.linspace(0.0, 1.0, ns + 1)
    t = np.linspace(0.0, 1.0, nt + 1)
    verts = np.array([point_fn(si, tj) for si in s for tj in t])

    def vid(i, j):
        return i * (nt + 1) + j

    tris = []
    for i in range(ns):
        for j in range(nt):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return verts, np.array(tris, dtype=np.int64)


def _merge_blocks(blocks, tol=1e-12):
    """Concatenate vertex/triangle blocks, merging coincident vertices."""
    all_v = np.concatenate([v for v, _ in blocks], axis=0)
    offs = np.cumsum([0] + [v.shape[0] for v, _ in blocks][:-1])
    all_t = np.concatenate([t + o for (_, t), o in zip(blocks, offs)], axis=0)
    quant = np.round(all_v / tol).astype(np.int64)
    _, first, inv = np.unique(quant, axis=0, return_index=True, return_inverse=True)
    verts = all_v[first]
    tris = inv[all_t]
    if np.any(tris[:, 0] == tris[:, 1]) or np.any(tris[:, 1] == tris[:, 2]) or np.any(tris[:, 0] == tris[:, 2]):
        raise ValueError("degenerate triangle produced while merging blocks")
    return verts, tris


def build_y_channel_mesh(
    main_width: float = 1.0,
    top_width: float = 0.7,
    bottom_width: float = 0.7,
    main_length: float = 1.5,
    branch_length: float = 1.5,
    branch_gap: float = 0.35,
    h: float = 0.05,
    tip_blunt: float = 0.0,
) -> Mesh:
    """Y-shaped channel: a straight main channel splitting into two straight
    branches separated by a wedge-shaped divider.

    The main channel occupies [0, main_length] x [-main_width/2, main_width/2].
    At the junction the exit face splits at the divider tip into two mouths
    whose sizes are proportional to the branch widths; each branch is a
    trapezoidal block ending in a vertical face of the requested width,
    displaced by ``branch_gap`` from the axis.  The inlet is the x=0 face and
    both branch ends are tagged outlet; everything else is wall.  ``h`` sets
    the target element size.
    """
    for name, w in (("main_width", main_width), ("top_width", top_width), ("bottom_width", bottom_width)):
        if w <= 0:
            raise ValueError(f"{name} must be positive")
    if main_length <= 0 or branch_length <= 0 or branch_gap < 0:
        raise ValueError("lengths must be positive and branch_gap nonnegative")
    H = 0.5 * main_width
    # split the exit face proportionally to the branch widths; an optional
    # blunt face of half-width tip_blunt turns the divider from a knife edge
    # into a flat-nosed wedge (kinder to phase fields squeezing past it)
    k = 2.0 * (H - tip_blunt) / (top_width + bottom_width)
    c = H - k * top_width - tip_blunt  # divider centerline y-coordinate
    if not (-H < c - tip_blunt and c + tip_blunt < H):
        raise ValueError("tip_blunt too large for the channel")
    n_top = max(2, int(round((H - c - tip_blunt) / h)))
    n_bot = max(2, int(round((c - tip_blunt + H) / h)))
    n_tip = max(1, int(round(2 * tip_blunt / h))) if tip_blunt > 0 else 0
    ns_main = max(2, int(round(main_length / h)))
    ns_branch = max(2, int(round(branch_length / h)))

    segs = [np.linspace(-H, c - tip_blunt, n_bot + 1)]
    if n_tip:
        segs.append(np.linspace(c - tip_blunt, c + tip_blunt, n_tip + 1)[1:])
    segs.append(np.linspace(c + tip_blunt, H, n_top + 1)[1:])
    y_grid = np.concatenate(segs)
    ny_main = len(y_grid) - 1
    x_grid = np.linspace(0.0, main_length, ns_main + 1)
    main_v, main_t = _block_grid(lambda s, t: (x_grid[0] + s * main_length, -H + t * 2 * H), ns_main, ny_main)
    # replace the uniform cross grid with the y_grid (block built in t in [0,1])
    main_v = main_v.reshape(ns_main + 1, ny_main + 1, 2)
    main_v[:, :, 1] = y_grid[None, :]
    main_v = main_v.reshape(-1, 2)

    xe = main_length + branch_length
    top_lo, top_hi = branch_gap, branch_gap + top_width
    bot_lo, bot_hi = -branch_gap - bottom_width, -branch_gap

    def top_map(s, t):
        mouth = (main_length, c + tip_blunt + t * (H - c - tip_blunt))
        end = (xe, top_lo + t * top_width)
        return ((1 - s) * mouth[0] + s * end[0], (1 - s) * mouth[1] + s * end[1])

    def bot_map(s, t):
        mouth = (main_length, -H + t * (c - tip_blunt + H))
        end = (xe, bot_lo + t * bottom_width)
        return ((1 - s) * mouth[0] + s * end[0], (1 - s) * mouth[1] + s * end[1])

    top_v, top_t = _block_grid(top_map, ns_branch, n_top)
    bot_v, bot_t = _block_grid(bot_map, ns_branch, n_bot)
    verts, tris = _merge_blocks([(main_v, main_t), (top_v, top_t), (bot_v, bot_t)])
    tol = 1e-9 * max(xe, main_width)
    return mesh_from_triangulation(
        verts,
        tris,
        tags={
            INLET: lambda m: m[:, 0] < tol,
            OUTLET: lambda m: m[:, 0] > xe - tol,
        },
    )


def write_mesh(path, mesh: Mesh) -> None:
    """Write the whitespace-separated ASCII mesh format.

    Header: ``n_vertices n_triangles n_facets``; then vertex lines ``x y``,
    triangle lines of 3 indices, facet lines of 2 indices plus a tag string.
    """
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} {mesh.facets.shape[0]}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        for (a, b), t in zip(mesh.facets, mesh.facet_tags):
            fh.write(f"{a} {b} {mesh.tag_names[t]}\n")


def read_mesh(path) -> Mesh:
    """Read the ASCII mesh format written by :func:`write_mesh`."""
    with open(path) as fh:
        tokens = fh.read().split()
    it = iter(tokens)
    nv, nt, nf = int(next(it)), int(next(it)), int(next(it))
    verts = np.array([[float(next(it)), float(next(it))] for _ in range(nv)])
    tris = np.array([[int(next(it)) for _ in range(3)] for _ in range(nt)], dtype=np.int64)
    facet_list, tag_list = [], []
    for _ in range(nf):
        a, b = int(next(it)), int(next(it))
        facet_list.append((a, b))
        tag_list.append(next(it))
    mesh = mesh_from_triangulation(verts, tris)
    names = tuple(dict.fromkeys([WALL] + tag_list))
    # match the stored facets against the extracted ones (orientation-agnostic)
    stored = {frozenset(f): t for f, t in zip(facet_list, tag_list)}
    tags = np.zeros(mesh.facets.shape[0], dtype=np.int64)
    for i, (a, b) in enumerate(mesh.facets):
        t = stored.get(frozenset((int(a), int(b))))
        if t is None:
            raise ValueError("facet list in file does not match mesh boundary")
        tags[i] = names.index(t)
    return Mesh(mesh.vertices, mesh.triangles, mesh.facets, tags, names, mesh.facet_tri)
