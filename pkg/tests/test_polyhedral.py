import json

import numpy as np
import pytest

from stochdual.polyhedral import (ImproperFunctionError, Polyhedron, PolyhedralCone, PolyhedralFunction, conjugate,
                                  conjugate_value, epigraph_vertices_bruteforce, evaluate, partial_inf,
                                  partial_inf_value, polar_cone, recession_cone, support_function)

INF = np.inf


def test_evaluate_examples():
    ab = PolyhedralFunction.max_affine([[1.0], [-1.0]], [0.0, 0.0])
    assert evaluate(ab, [-3.0]) == 3.0
    ind = PolyhedralFunction.indicator(Polyhedron.box([0.0], [1.0]))
    assert evaluate(ind, [2.0]) == INF
    assert evaluate(ind, [0.5]) == 0.0
    assert evaluate(PolyhedralFunction.zero(1), [17.0]) == 0.0


def test_conjugate_abs_is_indicator_of_unit_interval():
    fs = conjugate(PolyhedralFunction.abs_sum(1))
    for y, want in [(-1.0, 0.0), (0.3, 0.0), (1.0, 0.0), (1.01, INF), (-2.0, INF)]:
        assert fs([y]) == pytest.approx(want)


def test_conjugate_of_indicator_of_origin_is_zero():
    fs = conjugate(PolyhedralFunction.indicator(Polyhedron.point([0.0])))
    for y in (-5.0, 0.0, 3.0):
        assert fs([y]) == pytest.approx(0.0)


def test_conjugate_hinge():
    f = PolyhedralFunction.max_affine([[0.0], [1.0]], [0.0, -1.0])     # max(0, z - 1)
    fs = conjugate(f)
    for y in (0.0, 0.25, 0.5, 1.0):
        assert fs([y]) == pytest.approx(y)
    assert fs([-0.1]) == INF and fs([1.1]) == INF
    fss = conjugate(fs)
    for z in np.linspace(-5, 5, 100):
        assert fss([z]) == pytest.approx(f([z]), abs=1e-9)


def test_partial_inf_examples():
    half = PolyhedralFunction.indicator(Polyhedron(2, [[-1.0, -1.0]], [0.0]))   # x + u >= 0
    # l(x, y) = inf_u { f(x, u) - u y }; at y = -1 the infimum of u over u >= -x is attained at u = -x
    l = partial_inf(half, [-1.0])
    for x in (-2.0, 0.0, 1.5):
        assert l([x]) == pytest.approx(-x)
        assert partial_inf_value(half, [x], [-1.0]) == pytest.approx(-x)
    lp = partial_inf(half, [1.0])
    assert lp.minus_inf and lp([0.0]) == -INF
    g = PolyhedralFunction.max_affine([[1.0, 0.0], [-2.0, 0.0]], [0.0, 1.0])   # independent of u
    l0 = partial_inf(g, [0.0])
    for x in (-1.0, 0.0, 2.0):
        assert l0([x]) == pytest.approx(g([x, 0.0]))


def test_recession_cones():
    assert recession_cone(Polyhedron.box([0.0], [1.0])).equals(PolyhedralCone(1, None, None, [[1.0]], None))
    orth = PolyhedralCone.nonneg_orthant(2)
    assert recession_cone(orth).equals(orth)
    S = Polyhedron(2, [[1.0, 1.0], [-1.0, 0.0]], [1.0, 0.0])
    assert recession_cone(S).equals(PolyhedralCone(2, [[1.0, 1.0], [-1.0, 0.0]]))


def test_polar_cones():
    neg = PolyhedralCone(1, [[1.0]])                     # z <= 0
    assert polar_cone(neg).equals(PolyhedralCone(1, [[-1.0]]))
    assert polar_cone(PolyhedralCone(3)).equals(PolyhedralCone(3, None, None, np.eye(3), None))
    s = 2.5
    C = PolyhedralCone(2, [[1.0, s]])
    ray = PolyhedralCone.from_generators(2, [[1.0, s]])
    assert polar_cone(C).equals(ray)
    with pytest.raises(ValueError):
        polar_cone(Polyhedron.box([0.0], [1.0]))


def test_support_function():
    assert support_function(Polyhedron.box([-1.0], [1.0]), [3.0]) == pytest.approx(3.0)
    K = PolyhedralCone(2, [[1.0, 2.0]])
    assert support_function(K, [1.0, 2.0]) == pytest.approx(0.0)
    assert support_function(PolyhedralCone.nonneg_orthant(1), [1.0]) == INF
    with pytest.raises(ValueError):
        support_function(Polyhedron(1, [[1.0], [-1.0]], [0.0, -1.0]), [1.0])


def test_vrep_round_trip(rng):
    for _ in range(30):
        d = int(rng.integers(1, 4))
        pts = rng.integers(-3, 4, (int(rng.integers(1, 5)), d)).astype(float)
        rays = rng.integers(-2, 3, (int(rng.integers(0, 3)), d)).astype(float)
        P = Polyhedron.from_vrep(d, pts, rays)
        V = P.vrep()
        Q = Polyhedron.from_vrep(d, V.points, V.rays, V.lineality)
        assert P.equals(Q)
        for p in pts:
            assert P.contains(p, 1e-9)


def _random_function(rng, d):
    k = int(rng.integers(1, 5))
    m = int(rng.integers(0, 4))
    A = rng.integers(-3, 4, (k, d)).astype(float)
    b = rng.integers(-3, 4, k).astype(float)
    G = rng.integers(-3, 4, (m, d)).astype(float)
    h = rng.integers(0, 4, m).astype(float)
    return PolyhedralFunction(d, A, b, Polyhedron(d, G, h))


def test_conjugate_matches_lp_and_biconjugate(rng):
    checked = 0
    for _ in range(80):
        d = int(rng.integers(1, 4))
        f = _random_function(rng, d)
        try:
            fs = conjugate(f)
        except ImproperFunctionError:
            continue
        checked += 1
        for _ in range(8):
            y = rng.normal(size=d) * 2
            a, b = fs(y), conjugate_value(f, y)
            assert (np.isinf(a) and a == b) or a == pytest.approx(b, abs=1e-7)
        fss = conjugate(fs)
        for _ in range(8):
            z = rng.normal(size=d) * 2
            a, b = f(z), fss(z)
            assert (np.isinf(a) and a == b) or a == pytest.approx(b, abs=1e-7)
    assert checked > 40


def test_partial_inf_matches_lp(rng):
    for _ in range(60):
        d = int(rng.integers(2, 4))
        f = _random_function(rng, d)
        nu = int(rng.integers(1, d))
        y = rng.integers(-2, 3, nu).astype(float)
        l = partial_inf(f, y)
        for _ in range(6):
            x = rng.normal(size=d - nu) * 2
            a, b = l(x), partial_inf_value(f, x, y)
            assert (np.isinf(a) and a == b) or a == pytest.approx(b, abs=1e-7)


def test_epigraph_vertices_agree_with_bruteforce(rng):
    for _ in range(30):
        d = int(rng.integers(1, 3))
        A = rng.integers(-3, 4, (3, d)).astype(float)
        b = rng.integers(-3, 4, 3).astype(float)
        f = PolyhedralFunction(d, A, b, Polyhedron.box(-np.ones(d) * 2, np.ones(d) * 2))
        brute = epigraph_vertices_bruteforce(f)
        V = f.epigraph().vrep()
        key = lambda M: sorted(map(tuple, np.round(M, 9)))
        assert key(brute) == key(V.points)


def test_json_round_trip():
    f = PolyhedralFunction(2, [[1.0, -1.0], [0.5, 2.0]], [0.0, 1.0], Polyhedron(2, [[1.0, 0.0]], [3.0], [[0.0, 1.0]], [1.0]))
    g = PolyhedralFunction.from_json(json.loads(json.dumps(f.to_json())))
    for z in ([0.0, 1.0], [2.0, 1.0], [4.0, 1.0], [0.0, 0.0]):
        assert f(z) == g(z)


def test_dimension_errors():
    with pytest.raises(ValueError):
        Polyhedron.box([0.0], [1.0]).contains([0.0, 0.0])
    with pytest.raises(ValueError):
        PolyhedralCone(1, [[1.0]], [1.0])
