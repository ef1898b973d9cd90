import io
import math

import numpy as np
import pytest

from thzroom.errors import ConfigError, NoPathError
from thzroom.propagation import SPEED_OF_LIGHT, RadioConfig
from thzroom.raytracer import (
    PathGainSpectrum, PathSet, PropagationPath, Tracer, best_path, build_pdp, reflection_groups, trace_paths,
)
from thzroom.scene import Node, Obstacle, Scene, build_office_scene

from oracles import ISO, RX, TX, group_power, image_method, mirror_trace


def test_empty_room_single_los():
    paths = trace_paths(Scene(), Node("a", (1, 1, 1), ISO), Node("b", (2, 1, 1), ISO), RadioConfig())
    assert len(paths) == 1
    assert paths[0].is_los and paths[0].surface_trace == ()
    assert paths[0].delay == pytest.approx(3.3356e-9, abs=1e-13)


def test_mirror_room_matches_image_method():
    paths = mirror_trace(0.05)
    oracle = image_method(TX.position, RX.position, 300.0)
    assert sum(paths.order == 0) == 1
    assert set(paths.surface_ids) == set(oracle)
    for name, ref in oracle.items():
        assert abs(10 * math.log10(group_power(paths, name) / ref)) < 1.0, name


def test_tessellation_convergence():
    coarse, fine = mirror_trace(0.05), mirror_trace(0.025)
    for name in coarse.surface_ids:
        change = 10 * math.log10(group_power(fine, name) / group_power(coarse, name))
        assert abs(change) < 0.5, name


@pytest.fixture(scope="module")
def office():
    scene = build_office_scene("ieee")
    return scene, scene.node("plug"), scene.node("laptop")


@pytest.fixture(scope="module")
def office_paths(office):
    scene, plug, laptop = office
    return trace_paths(scene, plug, laptop, RadioConfig(), 2, segment_size=0.1, second_order_segment_size=1.0)


def test_path_invariants(office_paths):
    los_delay = math.dist(office_paths.tx, office_paths.rx) / SPEED_OF_LIGHT
    for p in office_paths[::37]:
        hops = np.asarray(p.hops)
        length = np.linalg.norm(np.diff(hops, axis=0), axis=1).sum()
        assert p.length == pytest.approx(length, rel=1e-12)
        assert abs(p.delay - p.length / SPEED_OF_LIGHT) < 1e-12
        assert p.gain.delay == p.delay
    assert np.all(office_paths.delay >= los_delay - 1e-15)
    assert office_paths[0].is_los
    assert set(np.unique(office_paths.order)) == {0, 1, 2}


def test_sorted_by_delay(office_paths):
    assert np.all(np.diff(office_paths.delay) >= 0)


def test_reciprocity(office):
    scene, plug, laptop = office
    kw = dict(segment_size=0.1, second_order_segment_size=1.0)
    fwd = trace_paths(scene, plug, laptop, RadioConfig(), 2, -400, **kw)
    back = trace_paths(scene, laptop, plug, RadioConfig(), 2, -400, **kw)
    assert len(fwd) == len(back)
    a = np.sort(10 * np.log10(fwd.received_power_mw))
    b = np.sort(10 * np.log10(back.received_power_mw))
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_determinism_across_workers(office):
    scene, plug, laptop = office
    runs = [trace_paths(scene, plug, laptop, RadioConfig(), 2, workers=w) for w in (1, 2, 8)]
    pdps = [build_pdp(r, 1e-10) for r in runs]
    for r, pdp in zip(runs[1:], pdps[1:]):
        for attr in ("surf", "segment", "points", "length", "prop_lin", "antenna_lin"):
            np.testing.assert_array_equal(getattr(r, attr), getattr(runs[0], attr))
        np.testing.assert_array_equal(pdp.power_mw, pdps[0].power_mw)
        out_a, out_b = io.StringIO(), io.StringIO()
        pdp.write_csv(out_a)
        pdps[0].write_csv(out_b)
        assert out_a.getvalue() == out_b.getvalue()


def test_order_two_never_reduces_pdp(office):
    scene, plug, laptop = office
    kw = dict(segment_size=0.1, second_order_segment_size=1.0)
    one = build_pdp(trace_paths(scene, plug, laptop, RadioConfig(), 1, **kw))
    two = build_pdp(trace_paths(scene, plug, laptop, RadioConfig(), 2, **kw))
    lookup = dict(zip(two.bins.tolist(), two.power_mw.tolist()))
    for b, p in zip(one.bins.tolist(), one.power_mw.tolist()):
        assert lookup[b] >= p


def test_obstacle_blocks_los():
    scene = Scene(obstacles=(Obstacle((2.5, 0.5, 0.5), (3.5, 1.5, 1.5)),))
    a, b = Node("a", (1, 1, 1), ISO), Node("b", (5, 1, 1), ISO)
    assert len(trace_paths(scene, a, b, RadioConfig(), 0)) == 0
    assert len(trace_paths(Scene(), a, b, RadioConfig(), 0)) == 1


def test_max_order_limit():
    a, b = Node("a", (1, 1, 1), ISO), Node("b", (5, 1, 1), ISO)
    with pytest.raises(ConfigError):
        trace_paths(Scene(), a, b, RadioConfig(), 3)


def test_power_floor_prunes(office_paths):
    floor = float(np.median(10 * np.log10(office_paths.received_power_mw)))
    scene = build_office_scene("ieee")
    kept = trace_paths(scene, scene.node("plug"), scene.node("laptop"), RadioConfig(), 2, floor,
                       segment_size=0.1, second_order_segment_size=1.0)
    assert 0 < len(kept) < len(office_paths)
    assert np.all(10 * np.log10(kept.received_power_mw) >= floor)


def make_path(gain_db, length, trace=(), hops=None):
    hops = hops or ((0.0, 0.0, 0.0),) + tuple((1.0, float(i), 0.0) for i, _ in enumerate(trace)) + ((2.0, 0.0, 0.0),)
    g = np.full(4, float(gain_db))
    return PropagationPath(hops, tuple(trace), length, length / SPEED_OF_LIGHT, PathGainSpectrum(g, length / SPEED_OF_LIGHT))


def test_best_path_rules():
    los = make_path(-60, 2.0)
    desk = make_path(-70, 2.5, ("desk",))
    window = make_path(-75, 3.0, ("window",))
    assert best_path([los, desk, window]).is_los
    assert best_path([los, desk, window], exclude_los=True).surface_trace == ("desk",)
    assert best_path([window]).surface_trace == ("window",)
    # equal power: shorter delay wins, then the smaller surface trace
    a = make_path(-70, 3.0, ("a",))
    b = make_path(-70, 2.9, ("b",))
    assert best_path([a, b]).surface_trace == ("b",)
    c = make_path(-70, 3.0, ("c",))
    assert best_path([c, a]).surface_trace == ("a",)
    with pytest.raises(NoPathError):
        best_path([los], exclude_los=True)
    with pytest.raises(NoPathError):
        best_path([])


def test_best_path_exhaustive_on_office(office_paths):
    chosen = best_path(office_paths)
    assert chosen.is_los
    assert chosen.total_gain == pytest.approx(float(office_paths.total_gain.max()), rel=1e-12)
    assert np.argmax(office_paths.total_gain) == 0


def test_pdp_singleton_and_additivity():
    p = make_path(-60, 1.0)
    pdp = build_pdp([p], 1e-10)
    assert len(pdp.bins) == 1
    assert pdp.power_dbm[0] == pytest.approx(-60.0)
    q = make_path(-60, 1.0 + 1e-3, ("desk",))
    pdp2 = build_pdp([p, q], 1e-10)
    assert pdp2.power_mw[0] == pytest.approx(2e-6, rel=1e-12)
    with pytest.raises(ValueError):
        build_pdp([p], 0.0)


def test_pdp_aggregate_is_sum_of_series(office_paths):
    pdp = build_pdp(office_paths, 1e-10)
    total = dict.fromkeys(pdp.bins.tolist(), 0.0)
    for key in ["LOS", *pdp.per_surface]:
        for b, v in zip(*pdp.series(key)):
            total[int(b)] += v
    np.testing.assert_allclose([total[b] for b in pdp.bins.tolist()], pdp.power_mw, rtol=1e-9)


def test_pdp_csv(office_paths):
    pdp = build_pdp(office_paths, 1e-10)
    out = io.StringIO()
    pdp.write_csv(out)
    lines = out.getvalue().split("\n")
    assert lines[0] == "delay_ns,surface,power_dbm"
    rows = [line.split(",") for line in lines[1:] if line]
    keys = [(round(float(r[0]) * 10), r[1]) for r in rows]
    assert keys == sorted(keys)
    assert {r[1] for r in rows} >= {"ALL", "LOS", "desk", "window"}


def test_groups_sum_members_and_match_fast_route(office):
    scene, plug, laptop = office
    tracer = Tracer(scene, RadioConfig(), segment_size=0.1, second_order_segment_size=1.0)
    paths = tracer.trace(plug, laptop, 2)
    slow = reflection_groups(paths, plug.antenna, laptop.antenna)
    fast = tracer.group_gains(plug, laptop, 2)
    np.testing.assert_array_equal(slow.surf, fast.surf)
    np.testing.assert_allclose(fast.gain_lin, slow.gain_lin, rtol=1e-10)
    # one group per distinct surface trace
    traces = {tuple(r) for r in paths.surf.tolist()}
    assert len(slow) == len({(a, b) for a, b in traces})


def test_from_paths_round_trip(office_paths):
    sample = [office_paths[i] for i in range(0, len(office_paths), 101)]
    ps = PathSet.from_paths(sample)
    assert len(ps) == len(sample)
    for p, q in zip(sample, ps):
        assert p.surface_trace == q.surface_trace
        np.testing.assert_allclose(p.gain.gain_db, q.gain.gain_db, rtol=1e-12)
