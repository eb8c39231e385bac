"""Scene flattening and bounding-volume hierarchy construction.

The scene graph is lowered to flat numpy arrays (one row per triangle,
one row per part) that the compiled kernels consume, then a binary BVH
is built by median split on the longest centroid axis with at most four
triangles per leaf.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SceneError
from ..materials import MaterialSpec, PATTERN_KINDS
from .color import srgb_to_linear

MAX_LEAF_TRIS = 4

_DEFAULT_MATERIAL = MaterialSpec(base_color=(0.7, 0.7, 0.7), metalness=0.0,
                                 roughness=0.5, specular=0.5)


@dataclass(frozen=True)
class FlatScene:
    """Per-triangle and per-part arrays for the render kernels."""

    tv: np.ndarray             # (T, 9) triangle vertices, world space
    tn: np.ndarray             # (T, 9) per-corner shading normals
    tuv: np.ndarray            # (T, 6) per-corner uv (backplate only)
    tri_part: np.ndarray       # (T,) int32 part index
    part_instance: np.ndarray  # (P,) int32 instance id (0 = backplate)
    part_emissive: np.ndarray  # (P,) uint8
    part_labels: tuple         # (P,) class label or None
    mat_base: np.ndarray       # (P, 3)
    mat_metal: np.ndarray      # (P,)
    mat_rough: np.ndarray      # (P,)
    mat_spec: np.ndarray       # (P,)
    tex_kind: np.ndarray       # (P,) int8: 0 none, 1 checker, 2 stripe, 3 noise
    tex_a: np.ndarray          # (P, 3)
    tex_b: np.ndarray          # (P, 3)
    tex_freq: np.ndarray       # (P,)
    inv_rows: np.ndarray       # (P, 3, 4) world -> object transform rows
    bp_img: np.ndarray         # (Hb, Wb, 3) linear backplate or (1,1,3) zeros
    scene_eps: float           # ray-offset epsilon scaled to the scene

    @property
    def n_triangles(self) -> int:
        return self.tv.shape[0]

    @property
    def n_parts(self) -> int:
        return self.part_instance.shape[0]

    def full_mask(self) -> np.ndarray:
        return np.ones(self.n_parts, dtype=np.uint8)

    def mask_for_instance(self, instance_id: int) -> np.ndarray:
        """Visibility mask with only one instance present."""
        m = np.zeros(self.n_parts, dtype=np.uint8)
        hits = np.nonzero(self.part_instance == instance_id)[0]
        if hits.size == 0:
            raise SceneError(f"no part with instance id {instance_id}")
        m[hits] = 1
        return m


def flatten_scene(scene) -> FlatScene:
    """Lower a SceneGraph to kernel arrays.  Part order follows the
    scene's part list; the backplate, when present, becomes one extra
    emissive part with instance id 0."""
    tv_rows = []
    tn_rows = []
    tuv_rows = []
    tri_part = []
    part_instance = []
    part_emissive = []
    part_labels = []
    mats = []
    inv_rows = []

    for pi, part in enumerate(scene.parts):
        t = part.transform
        wv = t.apply_points(part.mesh.vertices)
        wn = t.apply_directions(part.mesh.normals)
        tris = part.mesh.triangles
        tv_rows.append(wv[tris].reshape(-1, 9))
        tn_rows.append(wn[tris].reshape(-1, 9))
        tuv_rows.append(np.zeros((tris.shape[0], 6)))
        tri_part.append(np.full(tris.shape[0], pi, dtype=np.int32))
        part_instance.append(part.instance_id)
        part_emissive.append(0)
        part_labels.append(part.class_label)
        mats.append(part.material if part.material is not None
                    else _DEFAULT_MATERIAL)
        r = t.rotation
        s = t.scale
        inv = np.zeros((3, 4))
        inv[:, :3] = r.T / s
        inv[:, 3] = -(r.T @ t.translation) / s
        inv_rows.append(inv)

    bp_img = np.zeros((1, 1, 3))
    if scene.backplate is not None:
        bp = scene.backplate
        c = bp.corners
        # two triangles (c0,c1,c2) and (c0,c2,c3) with uv corners
        # (0,0),(1,0),(1,1),(0,1) mapping the image across the quad
        tv_rows.append(np.array([
            np.concatenate([c[0], c[1], c[2]]),
            np.concatenate([c[0], c[2], c[3]]),
        ]))
        n = np.cross(c[1] - c[0], c[2] - c[0])
        n = n / np.linalg.norm(n)
        tn_rows.append(np.tile(np.concatenate([n, n, n]), (2, 1)))
        tuv_rows.append(np.array([
            [0.0, 0.0, 1.0, 0.0, 1.0, 1.0],
            [0.0, 0.0, 1.0, 1.0, 0.0, 1.0],
        ]))
        pi = len(part_instance)
        tri_part.append(np.full(2, pi, dtype=np.int32))
        part_instance.append(0)
        part_emissive.append(1)
        part_labels.append(None)
        mats.append(_DEFAULT_MATERIAL)
        inv_rows.append(np.zeros((3, 4)))
        bp_img = np.ascontiguousarray(srgb_to_linear(bp.image))

    tv = np.ascontiguousarray(np.concatenate(tv_rows))
    tn = np.ascontiguousarray(np.concatenate(tn_rows))
    tuv = np.ascontiguousarray(np.concatenate(tuv_rows))
    tri_part_arr = np.ascontiguousarray(np.concatenate(tri_part))

    n_parts = len(part_instance)
    mat_base = np.zeros((n_parts, 3))
    mat_metal = np.zeros(n_parts)
    mat_rough = np.full(n_parts, 0.5)
    mat_spec = np.zeros(n_parts)
    tex_kind = np.zeros(n_parts, dtype=np.int8)
    tex_a = np.zeros((n_parts, 3))
    tex_b = np.zeros((n_parts, 3))
    tex_freq = np.ones(n_parts)
    for i, m in enumerate(mats):
        mat_base[i] = m.base_color
        mat_metal[i] = m.metalness
        mat_rough[i] = m.roughness
        mat_spec[i] = m.specular
        if m.texture is not None:
            tex_kind[i] = 1 + PATTERN_KINDS.index(m.texture.kind)
            tex_a[i] = m.texture.color_a
            tex_b[i] = m.texture.color_b
            tex_freq[i] = m.texture.frequency

    diag = float(np.linalg.norm(tv.reshape(-1, 3).max(axis=0)
                                - tv.reshape(-1, 3).min(axis=0)))
    scene_eps = 1e-6 * max(1.0, diag)

    return FlatScene(
        tv=tv, tn=tn, tuv=tuv, tri_part=tri_part_arr,
        part_instance=np.array(part_instance, dtype=np.int32),
        part_emissive=np.array(part_emissive, dtype=np.uint8),
        part_labels=tuple(part_labels),
        mat_base=mat_base, mat_metal=mat_metal, mat_rough=mat_rough,
        mat_spec=mat_spec, tex_kind=tex_kind, tex_a=tex_a, tex_b=tex_b,
        tex_freq=tex_freq,
        inv_rows=np.ascontiguousarray(np.stack(inv_rows)),
        bp_img=bp_img, scene_eps=scene_eps)


@dataclass(frozen=True)
class Bvh:
    """Flattened binary BVH.  Interior nodes hold child indices; leaves
    hold a [start, start+count) slice of ``tri_order``."""

    node_min: np.ndarray    # (N, 3)
    node_max: np.ndarray    # (N, 3)
    left: np.ndarray        # (N,) int32, -1 for leaves
    right: np.ndarray       # (N,) int32, -1 for leaves
    start: np.ndarray       # (N,) int32
    count: np.ndarray       # (N,) int32, 0 for interior nodes
    tri_order: np.ndarray   # (T,) int32 permutation of triangle ids
    flat: FlatScene

    @property
    def n_nodes(self) -> int:
        return self.left.shape[0]

    def validate(self) -> None:
        """Structural invariants: each triangle referenced exactly once,
        leaves within size budget, child boxes inside parent boxes."""
        order = np.sort(self.tri_order)
        if not np.array_equal(order, np.arange(self.flat.n_triangles)):
            raise SceneError("BVH must reference every triangle exactly once")
        eps = 1e-9
        for n in range(self.n_nodes):
            if self.count[n] > 0:
                if self.count[n] > MAX_LEAF_TRIS:
                    raise SceneError(f"leaf {n} holds {self.count[n]} triangles")
            else:
                for c in (self.left[n], self.right[n]):
                    if not (np.all(self.node_min[c] >= self.node_min[n] - eps)
                            and np.all(self.node_max[c] <= self.node_max[n] + eps)):
                        raise SceneError(f"child {c} escapes parent {n} bounds")


def build_bvh(scene_or_flat) -> Bvh:
    """Build a BVH for a SceneGraph (flattened on the fly) or FlatScene."""
    flat = (scene_or_flat if isinstance(scene_or_flat, FlatScene)
            else flatten_scene(scene_or_flat))
    t = flat.n_triangles
    verts = flat.tv.reshape(t, 3, 3)
    tri_min = verts.min(axis=1)
    tri_max = verts.max(axis=1)
    cent = 0.5 * (tri_min + tri_max)

    node_min = []
    node_max = []
    left = []
    right = []
    start = []
    count = []
    order: list[np.ndarray] = []
    placed = 0

    def new_node():
        node_min.append(None)
        node_max.append(None)
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(left) - 1

    def build(idx: np.ndarray) -> int:
        nonlocal placed
        node = new_node()
        node_min[node] = tri_min[idx].min(axis=0)
        node_max[node] = tri_max[idx].max(axis=0)
        if idx.size <= MAX_LEAF_TRIS:
            start[node] = placed
            count[node] = idx.size
            order.append(idx)
            placed += idx.size
            return node
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        sorted_idx = idx[np.argsort(c[:, axis], kind="stable")]
        mid = idx.size // 2
        left[node] = build(sorted_idx[:mid])
        right[node] = build(sorted_idx[mid:])
        return node

    import sys
    limit = sys.getrecursionlimit()
    needed = 2 * int(np.ceil(np.log2(max(2, t)))) + 64
    if needed > limit:
        sys.setrecursionlimit(needed)
    build(np.arange(t, dtype=np.int64))

    return Bvh(
        node_min=np.ascontiguousarray(np.stack(node_min)),
        node_max=np.ascontiguousarray(np.stack(node_max)),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        start=np.array(start, dtype=np.int32),
        count=np.array(count, dtype=np.int32),
        tri_order=np.ascontiguousarray(np.concatenate(order).astype(np.int32)),
        flat=flat)
