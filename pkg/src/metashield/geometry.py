"""Printable enclosure solid: parametric layout, watertight meshing, STL I/O.

Every cut in the enclosure is a vertical prism (a plan-view polygon over a
height interval), so the solid is a stack of horizontal slabs, each one
the outer rectangle minus the cuts active in it. Meshing works on the
planar arrangement of all slab outlines at once: the noded outlines are
polygonized into cells, each cell is solid or void per slab, and faces are
emitted wherever solid meets void. All faces draw their vertices from the
same noded outlines, which is what makes the mesh closed.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import LineString, MultiPolygon, Point, Polygon, box
from shapely.ops import polygonize, unary_union

from .amplifier import CoiledUnit
from .coupling import ArrayConfig
from .errors import GeometryError

SEGMENTS = 96
GRID_MM = 1e-6
MM = 1e3


@dataclass(frozen=True)
class Cut:
    """Void prism: ``outline`` (mm, plan view) between heights ``z0`` and ``z1``."""

    name: str
    outline: Polygon
    z0: float
    z1: float
    exact_area: float

    @property
    def exact_volume(self) -> float:
        return self.exact_area * (self.z1 - self.z0)


@dataclass(frozen=True)
class LayoutRules:
    """Vertical build-up and clearances in millimeters."""

    floor: float = 1.0
    skin: float = 1.0
    coil_height: float = 2.0
    recess_depth: float = 2.0
    recess_size: tuple = (10.0, 8.0)
    port_radius: float = 1.0
    plenum_margin: float = 1.0
    legs: int = 3


MOBILE_RULES = LayoutRules()
SPEAKER_RULES = LayoutRules(floor=0.6, skin=0.6, coil_height=1.0, recess_depth=0.0)


@dataclass(frozen=True)
class Solid:
    size: tuple
    cuts: tuple
    cavity_volumes: tuple
    metadata: dict = field(default_factory=dict)

    def analytic_volume(self) -> float:
        """Box volume minus the exact (true-circle) volume of every cut.

        Cuts never share volume: prisms in the same slab are disjoint and
        prisms that touch do so across a face.
        """
        sx, sy, sz = self.size
        return sx * sy * sz - sum(c.exact_volume for c in self.cuts)


def _circle(cx: float, cy: float, radius: float) -> Polygon:
    ang = 2.0 * np.pi * np.arange(SEGMENTS) / SEGMENTS
    return Polygon(np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)]))


def serpentine_centerline(start, stub: float, legs: int, leg: float, pitch: float):
    """Vertices of a path going +y by ``stub`` then zig-zagging along x."""
    x, y = start
    pts = [(x, y), (x, y + stub)]
    y += stub
    direction = 1.0
    for k in range(legs):
        x += direction * leg
        pts.append((x, y))
        if k < legs - 1:
            y += pitch
            pts.append((x, y))
        direction = -direction
    return pts


def _serpentine(start, path_length: float, width: float, stub: float, bounds: Polygon, rules: LayoutRules):
    pitch = 2.0 * width
    for legs in range(rules.legs, rules.legs + 12):
        leg = (path_length - stub - (legs - 1) * pitch) / legs
        if leg <= width:
            break
        line = LineString(serpentine_centerline(start, stub, legs, leg, pitch))
        outline = line.buffer(width / 2.0, cap_style="flat", join_style="mitre")
        if bounds.contains(outline):
            return outline, line.length
    raise GeometryError(f"a {path_length:.2f} mm coiled channel does not fit the enclosure")


def _unit_centers(preset, cfg: ArrayConfig, spacing: float):
    radii = [u.cavity_radius * MM for u in cfg.units]
    sx, sy = preset.length * MM, preset.width * MM
    if preset.kind.value == "mobile":
        xs = [radii[0]]
        for a, b in zip(radii[:-1], radii[1:]):
            xs.append(xs[-1] + a + b + spacing)
        x0 = (sx - (xs[-1] + radii[-1])) / 2.0
        return [(x0 + x, sy / 2.0) for x in xs]
    # staggered rows: alternate units sit dy apart so the row stays short
    dy = 8.0
    pts = [(0.0, 0.0)]
    for i, (a, b) in enumerate(zip(radii[:-1], radii[1:])):
        reach = a + b + spacing
        if reach <= dy:
            raise GeometryError("stagger offset exceeds unit pitch")
        pts.append((pts[-1][0] + math.sqrt(reach * reach - dy * dy), dy if i % 2 == 0 else 0.0))
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0 = (sx - (max(x + r for x, r in zip(xs, radii)) - min(x - r for x, r in zip(xs, radii)))) / 2.0
    x0 -= min(x - r for x, r in zip(xs, radii))
    y0 = (sy - (max(y + r for y, r in zip(ys, radii)) - min(y - r for y, r in zip(ys, radii)))) / 2.0
    y0 -= min(y - r for y, r in zip(ys, radii))
    return [(x0 + x, y0 + y) for x, y in zip(xs, ys)]


def build_solid(preset, cfg: ArrayConfig, coiled: CoiledUnit, spacing: float | None = None) -> Solid:
    """Lay out cavities, necks, inlet channel, coiled channel and mic port.

    Raises
    ------
    GeometryError
        For a non-positive spacing, intersecting cavities, or any cut that
        leaves the enclosure's skin.
    """
    s = cfg.spacing * MM if spacing is None else spacing * MM
    if not s > 0:
        raise GeometryError(f"unit spacing must be positive, got {s} mm")
    rules = MOBILE_RULES if preset.kind.value == "mobile" else SPEAKER_RULES
    sx, sy, sz = preset.length * MM, preset.width * MM, preset.height * MM
    inner = box(rules.skin, rules.skin, sx - rules.skin, sy - rules.skin)
    centers = _unit_centers(preset, cfg, s)
    units = cfg.units
    for i in range(len(units)):
        for j in range(i + 1, len(units)):
            gap = math.dist(centers[i], centers[j]) - (units[i].cavity_radius + units[j].cavity_radius) * MM
            if gap < s - 1e-9:
                raise GeometryError(f"units {i} and {j} intersect or sit closer than the spacing")

    depth = max(u.h for u in units) * MM
    z_cav = rules.floor + depth
    neck_len = max(u.neck_length for u in units) * MM
    z_neck = z_cav + neck_len
    z_chan = z_neck + preset.channel_height * MM
    z_coil = z_chan + rules.coil_height
    z_recess = sz - rules.recess_depth
    if z_coil + rules.skin > z_recess + 1e-9:
        raise GeometryError("layers do not fit the enclosure height")

    cuts = []
    cavity_volumes = []
    for i, (u, (cx, cy)) in enumerate(zip(units, centers)):
        rc, rn, h = u.cavity_radius * MM, u.r * MM, u.h * MM
        cuts.append(Cut(f"cavity{i}", _circle(cx, cy, rc), z_cav - h, z_cav, math.pi * rc * rc))
        cuts.append(Cut(f"neck{i}", _circle(cx, cy, rn), z_cav, z_neck, math.pi * rn * rn))
        cavity_volumes.append(math.pi * rc * rc * h)
        if not inner.contains(_circle(cx, cy, rc)):
            raise GeometryError(f"cavity {i} leaves the enclosure")

    cw = preset.channel_width * MM
    first, last = centers[0], centers[-1]
    inlet = box(0.0, first[1] - cw / 2.0, first[0], first[1] + cw / 2.0)
    if preset.kind.value == "mobile":
        chan = box(0.0, first[1] - cw / 2.0, last[0] + rules.plenum_margin + max(u.r for u in units) * MM, first[1] + cw / 2.0)
    else:
        necks = unary_union([Point(c).buffer(u.r * MM + rules.plenum_margin, 64) for u, c in zip(units, centers)])
        chan = shapely.union(necks.convex_hull, inlet)
    if not chan.difference(inlet).within(inner) or chan.geom_type != "Polygon":
        raise GeometryError("inlet channel does not fit the enclosure")
    for i, (u, c) in enumerate(zip(units, centers)):
        if not chan.contains(_circle(c[0], c[1], u.r * MM)):
            raise GeometryError(f"neck {i} is not covered by the channel")
    cuts.append(Cut("channel", chan, z_neck, z_chan, chan.area))

    g = coiled.g * MM
    stub = cw / 2.0 + 2.0 * g
    coil, coil_len = _serpentine(first, coiled.L_coiled * MM, g, stub, inner, rules)
    cuts.append(Cut("coil", coil, z_chan, z_coil, coil_len * g))

    port = _circle(last[0], last[1], rules.port_radius)
    if port.intersects(coil):
        raise GeometryError("microphone port collides with the coiled channel")
    port_top = z_recess if rules.recess_depth > 0 else sz
    cuts.append(Cut("port", port, z_chan, port_top, math.pi * rules.port_radius**2))
    if rules.recess_depth > 0:
        rx, ry = rules.recess_size
        recess = box(last[0] - rx / 2.0, last[1] - ry / 2.0, last[0] + rx / 2.0, last[1] + ry / 2.0)
        if not inner.contains(recess):
            raise GeometryError("device recess leaves the enclosure")
        cuts.append(Cut("recess", recess, z_recess, sz, recess.area))

    meta = {"layers_mm": {"floor": rules.floor, "cavity_top": z_cav, "neck_top": z_neck, "channel_top": z_chan, "coil_top": z_coil}}
    return Solid((sx, sy, sz), tuple(cuts), tuple(cavity_volumes), meta)


# --- meshing ---------------------------------------------------------------------


def _polygons(geom):
    if geom.is_empty:
        return []
    if isinstance(geom, Polygon):
        return [geom]
    if isinstance(geom, MultiPolygon):
        return list(geom.geoms)
    return [g for g in getattr(geom, "geoms", []) if isinstance(g, Polygon)]


def mesh_solid(solid: Solid):
    """Closed triangle mesh of ``solid``.

    Returns ``(vertices, triangles)``: float64 ``(n, 3)`` coordinates in mm
    and int ``(m, 3)`` vertex indices with outward (counter-clockwise)
    winding.
    """
    sx, sy, sz = solid.size
    outer = box(0.0, 0.0, sx, sy)
    levels = sorted({0.0, sz, *(c.z0 for c in solid.cuts), *(c.z1 for c in solid.cuts)})
    slabs = []
    for z0, z1 in zip(levels[:-1], levels[1:]):
        active = [c.outline for c in solid.cuts if c.z0 <= z0 and c.z1 >= z1]
        voids = unary_union(active) if active else Polygon()
        slabs.append((z0, z1, outer.difference(voids)))

    lines = [outer.exterior] + [c.outline.exterior for c in solid.cuts]
    # a fixed grid stops near-coincident crossings from spawning twin nodes
    noded = shapely.union_all(lines, grid_size=GRID_MM)
    cells = [shapely.orient_polygons(c) for c in polygonize(noded.geoms if hasattr(noded, "geoms") else [noded])]
    probes = [c.representative_point() for c in cells]
    solid_in = np.array(
        [[s[2].contains(p) for s in slabs] for p in probes], dtype=bool
    )  # cell x slab

    vert_index: dict = {}
    verts: list = []

    def vid(x, y, z):
        key = (x, y, z)
        i = vert_index.get(key)
        if i is None:
            i = len(verts)
            vert_index[key] = i
            verts.append(key)
        return i

    tris: list = []
    edge_owner: dict = {}
    for ci, cell in enumerate(cells):
        rings = [cell.exterior, *cell.interiors]
        for ring in rings:
            coords = list(ring.coords)[:-1]
            for a, b in zip(coords, coords[1:] + coords[:1]):
                edge_owner.setdefault(frozenset((a, b)), []).append((ci, a, b))

    # horizontal faces
    n_slabs = len(slabs)
    for ci, cell in enumerate(cells):
        ring_pts = set()
        for ring in (cell.exterior, *cell.interiors):
            ring_pts.update(list(ring.coords)[:-1])
        tri_geoms = None
        for k in range(n_slabs + 1):
            below = solid_in[ci, k - 1] if k > 0 else False
            above = solid_in[ci, k] if k < n_slabs else False
            if below == above:
                continue
            if tri_geoms is None:
                tri_geoms = []
                for t in shapely.constrained_delaunay_triangles(cell).geoms:
                    pts = list(t.exterior.coords)[:3]
                    if not all(p in ring_pts for p in pts):
                        raise GeometryError("triangulation introduced a vertex off the outline")
                    (x0, y0), (x1, y1), (x2, y2) = pts
                    if (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0) < 0:
                        pts = [pts[0], pts[2], pts[1]]
                    tri_geoms.append(pts)
            z = levels[k]
            for p0, p1, p2 in tri_geoms:
                i0, i1, i2 = vid(*p0, z), vid(*p1, z), vid(*p2, z)
                # solid below means the face looks up
                tris.append((i0, i1, i2) if below else (i0, i2, i1))

    # vertical walls
    for owners in edge_owner.values():
        for ci, a, b in owners:
            other = [o for o in owners if o[0] != ci]
            for k, (z0, z1, _) in enumerate(slabs):
                mine = solid_in[ci, k]
                theirs = solid_in[other[0][0], k] if other else False
                if mine and not theirs:
                    pa0, pb0, pb1, pa1 = vid(*a, z0), vid(*b, z0), vid(*b, z1), vid(*a, z1)
                    tris.append((pa0, pb0, pb1))
                    tris.append((pa0, pb1, pa1))

    return np.array(verts, dtype=np.float64), np.array(tris, dtype=np.int64)


def mesh_volume(vertices: np.ndarray, triangles: np.ndarray) -> float:
    """Enclosed volume by the divergence theorem (signed tetrahedra)."""
    a, b, c = (vertices[triangles[:, i]] for i in range(3))
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def is_watertight(triangles: np.ndarray) -> bool:
    """Every edge used by exactly two triangles, once in each direction."""
    t = np.asarray(triangles)
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    if np.any(directed[:, 0] == directed[:, 1]):
        return False
    d_keys, d_counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(d_counts != 1):
        return False
    undirected = np.sort(directed, axis=1)
    _, u_counts = np.unique(undirected, axis=0, return_counts=True)
    return bool(np.all(u_counts == 2))


def write_stl(path, vertices: np.ndarray, triangles: np.ndarray, header: bytes = b"metashield enclosure") -> None:
    """Binary little-endian STL."""
    tri = vertices[triangles]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, lengths, out=np.zeros_like(normals), where=lengths > 0)
    rec = np.zeros(len(triangles), dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]))
    rec["n"] = normals
    rec["v"] = tri
    with open(path, "wb") as fh:
        fh.write(header[:80].ljust(80, b"\0"))
        fh.write(struct.pack("<I", len(triangles)))
        fh.write(rec.tobytes())


def read_stl(path):
    """Read a binary STL into welded ``(vertices, triangles)``."""
    data = Path(path).read_bytes()
    if len(data) < 84:
        raise GeometryError(f"{path} is too short for a binary STL")
    (count,) = struct.unpack("<I", data[80:84])
    rec_t = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    if len(data) != 84 + count * rec_t.itemsize:
        raise GeometryError(f"{path} has an inconsistent triangle count")
    rec = np.frombuffer(data, dtype=rec_t, offset=84, count=count)
    flat = rec["v"].reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    return uniq.astype(np.float64), inverse.reshape(-1, 3)


def export_geometry(preset, cfg: ArrayConfig, coiled: CoiledUnit, path, spacing: float | None = None) -> dict:
    """Write the enclosure as binary STL plus a JSON sidecar next to it.

    The sidecar (same stem, ``.json``) holds the meshed solid volume, the
    exact per-cavity volumes in mm^3 and the preset name. The same record
    is returned, together with the analytic volume for comparison.
    """
    solid = build_solid(preset, cfg, coiled, spacing)
    vertices, triangles = mesh_solid(solid)
    if not is_watertight(triangles):
        raise GeometryError("mesh is not closed")
    path = Path(path)
    try:
        write_stl(path, vertices, triangles)
        sidecar = {
            "volume_mm3": mesh_volume(vertices, triangles),
            "cavity_volumes_mm3": list(solid.cavity_volumes),
            "preset": preset.kind.value,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write geometry to {path}: {exc}") from exc
    return {**sidecar, "analytic_volume_mm3": solid.analytic_volume(), "triangles": int(len(triangles))}
