import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thzroom.errors import ConfigError, InvalidGeometryError
from thzroom.materials import DEFAULT_MATERIALS, default_materials
from thzroom.propagation import AntennaSpec
from thzroom.scene import (
    Node, Obstacle, Scene, Surface, build_office_scene, is_occluded, occluded_mask, tessellate,
)


def square(size=1.0, **kw):
    return Surface("s", (0, 0, 0), (size, 0, 0), (0, size, 0), "concrete", **kw)


def test_unit_square_tenth():
    segs = tessellate(square(), 0.1)
    assert len(segs) == 100
    assert all(math.isclose(s.area, 0.01, rel_tol=1e-12) for s in segs)


def test_wall_count():
    wall = Surface("w", (0, 0, 0), (6, 0, 0), (0, 0, 3), "concrete")
    assert len(tessellate(wall, 0.05)) == 120 * 60


def test_shrunk_edge_cells_keep_area():
    segs = tessellate(square(), 0.3)
    assert len(segs) == 16
    # independent summation oracle: math.fsum over the individual areas
    assert math.isclose(math.fsum(s.area for s in segs), 1.0, rel_tol=1e-12)
    assert min(s.area for s in segs) == pytest.approx(0.1 * 0.1)


def test_segment_centres_on_plane_and_unit_normals():
    s = Surface("t", (1, 2, 0.5), (0.3, 0.4, 0), (0, 0, 1.2), "glass")
    n = s.normal
    for seg in tessellate(s, 0.07):
        assert abs(np.dot(np.subtract(seg.center, s.corner), n)) < 1e-12
        assert abs(np.linalg.norm(seg.normal) - 1.0) < 1e-12


def test_degenerate_surface_rejected():
    with pytest.raises(InvalidGeometryError):
        Surface("d", (0, 0, 0), (1, 0, 0), (2, 0, 0), "glass")
    with pytest.raises(InvalidGeometryError):
        tessellate(square(), 0.0)


def test_scene_bounds_checked():
    with pytest.raises(InvalidGeometryError):
        Scene(surfaces=(Surface("x", (5, 0, 0), (2, 0, 0), (0, 1, 0), "glass"),))
    with pytest.raises(InvalidGeometryError):
        Scene(nodes=(Node("n", (7, 1, 1), AntennaSpec()),))


finite = st.floats(-3, 3, allow_nan=False)
vec = st.tuples(finite, finite, finite)


@settings(max_examples=1000, deadline=None)
@given(u=vec, v=vec, size=st.floats(0.02, 2.0))
def test_area_conservation(u, v, size):
    if np.linalg.norm(np.cross(u, v)) < 1e-3:
        return
    s = Surface("p", (0, 0, 0), u, v, "glass")
    if math.ceil(np.linalg.norm(u) / size) * math.ceil(np.linalg.norm(v) / size) > 40000:
        return
    segs = tessellate(s, size)
    assert abs(math.fsum(x.area for x in segs) - s.area) <= 1e-9 * s.area


@settings(max_examples=200, deadline=None)
@given(lu=st.floats(0.05, 3), lv=st.floats(0.05, 3), size=st.floats(0.05, 1.0))
def test_halving_size_quadruples_count(lu, lv, size):
    s = Surface("p", (0, 0, 0), (lu, 0, 0), (0, lv, 0), "glass")
    n1 = math.ceil(lu / size - 1e-9), math.ceil(lv / size - 1e-9)
    n2 = math.ceil(lu / (size / 2) - 1e-9), math.ceil(lv / (size / 2) - 1e-9)
    assert len(tessellate(s, size)) == n1[0] * n1[1]
    assert len(tessellate(s, size / 2)) >= (2 * n1[0] - 1) * (2 * n1[1] - 1)
    assert len(tessellate(s, size / 2)) == n2[0] * n2[1]


def test_empty_room_never_occluded():
    scene = Scene()
    rng = np.random.default_rng(1)
    a = rng.uniform(0, 1, (100, 3)) * [6, 4, 3]
    b = rng.uniform(0, 1, (100, 3)) * [6, 4, 3]
    assert not occluded_mask(a, b, scene).any()


def box_scene():
    return Scene(obstacles=(Obstacle((2, 1, 0), (3, 2, 1), "crate"),))


def test_box_on_chord_blocks():
    assert is_occluded((1, 1.5, 0.5), (4, 1.5, 0.5), box_scene())


def test_grazing_box_face_and_corner_not_blocking():
    scene = box_scene()
    # sliding along the top face
    assert not is_occluded((1, 1.5, 1.0), (4, 1.5, 1.0), scene)
    # touching only the vertical edge x=2, y=1
    assert not is_occluded((1, 2, 0.5), (3, 0, 0.5), scene)
    # touching only the corner (2, 1, 1)
    assert not is_occluded((1, 0, 0), (3, 2, 2), scene)
    # nudged inward the same chords do cut the box
    assert is_occluded((1, 1.5, 0.999), (4, 1.5, 0.999), scene)
    assert is_occluded((1, 2.01, 0.5), (3, 0.01, 0.5), scene)


def slab_oracle(a, b, lo, hi):
    """Strict-inequality slab test written independently of the library."""
    t0, t1 = 0.0, 1.0
    for k in range(3):
        d = b[k] - a[k]
        if d == 0:
            if not lo[k] < a[k] < hi[k]:
                return False
            continue
        ta, tb = (lo[k] - a[k]) / d, (hi[k] - a[k]) / d
        t0, t1 = max(t0, min(ta, tb)), min(t1, max(ta, tb))
    return t0 < t1


@settings(max_examples=300, deadline=None)
@given(a=st.tuples(st.floats(0, 6), st.floats(0, 4), st.floats(0, 3)),
       b=st.tuples(st.floats(0, 6), st.floats(0, 4), st.floats(0, 3)))
def test_box_occlusion_matches_slab_oracle_and_is_symmetric(a, b):
    if a == b:
        return
    scene = box_scene()
    ob = scene.obstacles[0]
    expected = slab_oracle(a, b, ob.min_corner, ob.max_corner)
    assert is_occluded(a, b, scene) == expected
    assert is_occluded(b, a, scene) == expected


@settings(max_examples=300, deadline=None)
@given(a=st.tuples(st.floats(0, 6), st.floats(0, 4), st.floats(0, 3)),
       b=st.tuples(st.floats(0, 6), st.floats(0, 4), st.floats(0, 3)))
def test_surface_occlusion_symmetric_and_matches_sampling(a, b):
    if np.linalg.norm(np.subtract(a, b)) < 1e-6:
        return
    panel = Surface("p", (1, 1, 0.5), (3, 1, 0), (0, 0, 2), "glass")
    scene = Scene(surfaces=(panel,))
    got = is_occluded(a, b, scene)
    assert got == is_occluded(b, a, scene)
    # oracle: a sign change of the plane distance inside the panel outline
    n = panel.normal
    da = np.dot(np.subtract(a, panel.corner), n)
    db = np.dot(np.subtract(b, panel.corner), n)
    if abs(da) < 1e-6 or abs(db) < 1e-6 or da * db > 0:
        if da * db > 0:
            assert not got
        return
    t = da / (da - db)
    p = np.add(a, t * np.subtract(b, a)) - panel.corner
    u, v = np.asarray(panel.edge_u), np.asarray(panel.edge_v)
    alpha, beta = np.dot(p, u) / np.dot(u, u), np.dot(p, v) / np.dot(v, v)
    margin = 1e-6
    if margin < alpha < 1 - margin and margin < beta < 1 - margin:
        assert got
    elif alpha < -margin or alpha > 1 + margin or beta < -margin or beta > 1 + margin:
        assert not got


def test_ignore_list_skips_surface():
    panel = Surface("p", (1, 1, 0), (0, 2, 0), (0, 0, 2), "glass")
    scene = Scene(surfaces=(panel,))
    assert is_occluded((0.5, 2, 1), (2, 2, 1), scene)
    assert not is_occluded((0.5, 2, 1), (2, 2, 1), scene, ignore={"p"})


def test_is_occluded_needs_distinct_points():
    with pytest.raises(InvalidGeometryError):
        is_occluded((1, 1, 1), (1, 1, 1), Scene())


def test_office_presets():
    for preset in ("ieee", "thz"):
        scene = build_office_scene(preset)
        assert tuple(scene.room_dims) == (6.0, 4.0, 3.0)
        plug, laptop = scene.node("plug"), scene.node("laptop")
        d = np.subtract(plug.position, laptop.position)
        assert math.isclose(np.linalg.norm(d), math.sqrt(0.5 ** 2 + 0.1 ** 2), rel_tol=1e-12)
        assert math.isclose(d[2], 0.1, abs_tol=1e-12)
        assert math.isclose(math.hypot(d[0], d[1]), 0.5, abs_tol=1e-12)
        names = {s.name for s in scene.surfaces}
        assert {"window", "desk", "wall", "floor", "ceiling"} <= names
        mats = {s.name: s.material for s in scene.surfaces}
        assert mats["window"] == "glass" and mats["desk"] == "hardboard"
    geo = [[(s.corner, s.edge_u, s.edge_v) for s in build_office_scene(p).surfaces] for p in ("ieee", "thz")]
    assert geo[0] == geo[1]
    assert set(DEFAULT_MATERIALS) <= set(default_materials())


def test_unknown_preset():
    with pytest.raises(ConfigError):
        build_office_scene("office-xl")
    with pytest.raises(ConfigError):
        build_office_scene("office")
