"""Procedural triangle meshes: cube, UV sphere, cylinder, flat quad.

Used for distractor shapes and for building small self-contained demo
scenes without external CAD files.
"""
from __future__ import annotations

import numpy as np

from .meshio import Mesh, compute_vertex_normals


def make_cube(size: float = 1.0) -> Mesh:
    """Axis-aligned cube centered at the origin, flat-shaded faces."""
    s = float(size) * 0.5
    corners = np.array([
        [-s, -s, -s], [s, -s, -s], [s, s, -s], [-s, s, -s],
        [-s, -s, s], [s, -s, s], [s, s, s], [-s, s, s],
    ])
    # each face gets its own 4 vertices so normals stay flat
    faces = [
        ([0, 1, 2, 3], [0.0, 0.0, -1.0]),
        ([5, 4, 7, 6], [0.0, 0.0, 1.0]),
        ([4, 0, 3, 7], [-1.0, 0.0, 0.0]),
        ([1, 5, 6, 2], [1.0, 0.0, 0.0]),
        ([4, 5, 1, 0], [0.0, -1.0, 0.0]),
        ([3, 2, 6, 7], [0.0, 1.0, 0.0]),
    ]
    verts = []
    norms = []
    tris = []
    for idx, normal in faces:
        base = len(verts)
        for i in idx:
            verts.append(corners[i])
            norms.append(normal)
        tris.append([base, base + 1, base + 2])
        tris.append([base, base + 2, base + 3])
    return Mesh(np.array(verts, dtype=np.float64),
                np.array(tris, dtype=np.int32),
                np.array(norms, dtype=np.float64))


def make_box(sx: float, sy: float, sz: float) -> Mesh:
    """Axis-aligned box with the given full edge lengths."""
    cube = make_cube(1.0)
    scale = np.array([sx, sy, sz], dtype=np.float64)
    verts = cube.vertices * scale
    norms = cube.normals / scale
    norms = norms / np.linalg.norm(norms, axis=1, keepdims=True)
    return Mesh(verts, cube.triangles.copy(), norms)


def make_uv_sphere(radius: float = 1.0, rings: int = 16,
                   segments: int = 32) -> Mesh:
    """Latitude/longitude sphere with exact analytic vertex normals."""
    if rings < 2 or segments < 3:
        raise ValueError("sphere needs rings >= 2 and segments >= 3")
    r = float(radius)
    verts = [np.array([0.0, r, 0.0])]
    for i in range(1, rings):
        theta = np.pi * i / rings
        st, ct = np.sin(theta), np.cos(theta)
        for j in range(segments):
            phi = 2.0 * np.pi * j / segments
            verts.append(np.array([r * st * np.cos(phi), r * ct,
                                   r * st * np.sin(phi)]))
    verts.append(np.array([0.0, -r, 0.0]))
    verts = np.array(verts)

    tris = []
    def ring_start(i):            # first vertex index of interior ring i (1-based)
        return 1 + (i - 1) * segments

    # top cap
    for j in range(segments):
        a = ring_start(1) + j
        b = ring_start(1) + (j + 1) % segments
        tris.append([0, b, a])
    # interior bands
    for i in range(1, rings - 1):
        ra = ring_start(i)
        rb = ring_start(i + 1)
        for j in range(segments):
            j2 = (j + 1) % segments
            tris.append([ra + j, ra + j2, rb + j])
            tris.append([ra + j2, rb + j2, rb + j])
    # bottom cap
    south = len(verts) - 1
    rb = ring_start(rings - 1)
    for j in range(segments):
        a = rb + j
        b = rb + (j + 1) % segments
        tris.append([a, b, south])

    normals = verts / r
    return Mesh(verts, np.array(tris, dtype=np.int32), normals)


def make_cylinder(radius: float = 0.5, height: float = 1.0,
                  segments: int = 24) -> Mesh:
    """Closed cylinder along +y, centered at the origin.

    Side vertices carry radial normals; cap rims get duplicated vertices
    with axial normals so the caps shade flat.
    """
    if segments < 3:
        raise ValueError("cylinder needs segments >= 3")
    r = float(radius)
    hy = float(height) * 0.5
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ca, sa = np.cos(ang), np.sin(ang)

    side_top = np.stack([r * ca, np.full(segments, hy), r * sa], axis=1)
    side_bot = np.stack([r * ca, np.full(segments, -hy), r * sa], axis=1)
    radial = np.stack([ca, np.zeros(segments), sa], axis=1)

    verts = [side_top, side_bot, side_top, side_bot,
             np.array([[0.0, hy, 0.0]]), np.array([[0.0, -hy, 0.0]])]
    norms = [radial, radial,
             np.tile([0.0, 1.0, 0.0], (segments, 1)),
             np.tile([0.0, -1.0, 0.0], (segments, 1)),
             np.array([[0.0, 1.0, 0.0]]), np.array([[0.0, -1.0, 0.0]])]
    verts = np.concatenate(verts)
    norms = np.concatenate(norms)

    tris = []
    bot = segments
    for j in range(segments):
        j2 = (j + 1) % segments
        tris.append([j, j2, bot + j])
        tris.append([j2, bot + j2, bot + j])
    cap_top = 2 * segments
    cap_bot = 3 * segments
    c_top = 4 * segments
    c_bot = 4 * segments + 1
    for j in range(segments):
        j2 = (j + 1) % segments
        tris.append([c_top, cap_top + j2, cap_top + j])
        tris.append([c_bot, cap_bot + j, cap_bot + j2])
    return Mesh(verts, np.array(tris, dtype=np.int32), norms)


def make_quad(width: float = 1.0, height: float = 1.0) -> Mesh:
    """Flat quad in the xy plane facing +z."""
    hx, hy = float(width) * 0.5, float(height) * 0.5
    verts = np.array([[-hx, -hy, 0.0], [hx, -hy, 0.0],
                      [hx, hy, 0.0], [-hx, hy, 0.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    norms = np.tile([0.0, 0.0, 1.0], (4, 1))
    return Mesh(verts, tris, norms)


def distractor_mesh(shape: str, size: float) -> Mesh:
    """Primitive clutter mesh by name: 'cube', 'sphere', or 'cylinder'.

    ``size`` is the largest extent in meters.
    """
    if shape == "cube":
        return make_cube(size)
    if shape == "sphere":
        return make_uv_sphere(size * 0.5, rings=8, segments=12)
    if shape == "cylinder":
        return make_cylinder(size * 0.3, size, segments=12)
    raise ValueError(f"unknown distractor shape {shape!r}")
