import numpy as np
import pytest

from epimfg.trigrid import OUTSIDE, TriGrid


def test_node_count_and_coords():
    g = TriGrid(8)
    assert g.size == 9 * 10 // 2
    assert np.all(g.s + g.a <= 1.0 + 1e-15)
    assert g.h == pytest.approx(0.125)


def test_index_lookup_round_trip():
    g = TriGrid(6)
    for k in range(g.size):
        assert g.index(int(g.i[k]), int(g.j[k])) == k
    with pytest.raises(IndexError):
        g.index(4, 3)


def test_neighbors_point_where_expected():
    g = TriGrid(5)
    k = g.index(2, 1)
    assert g.ip[k] == g.index(3, 1)
    assert g.im[k] == g.index(1, 1)
    assert g.jp[k] == g.index(2, 2)
    assert g.jm[k] == g.index(2, 0)
    assert g.diag[k] == g.index(1, 2)
    assert g.adiag[k] == g.index(3, 0)
    # hypotenuse node has no outward neighbors
    khyp = g.index(2, 3)
    assert g.ip[khyp] == OUTSIDE and g.jp[khyp] == OUTSIDE
    assert g.diag[khyp] == g.index(1, 4)
    # corners
    assert g.ip[g.index(5, 0)] == OUTSIDE
    assert g.jm[g.index(0, 0)] == OUTSIDE


def test_reflection_partner():
    g = TriGrid(7)
    for k in range(g.size):
        i, j = int(g.i[k]), int(g.j[k])
        assert g.reflect[k] == g.index(i, 7 - i - j)
    # reflection is an involution
    assert np.all(g.reflect[g.reflect] == np.arange(g.size))


def test_masks():
    g = TriGrid(6)
    assert np.all(g.i[g.s0_mask] == 0)
    assert np.all(g.j[g.a0_mask] == 0)
    assert np.all((g.i + g.j)[g.hyp_mask] == 6)
    lower = g.lower_mask
    assert np.all(2 * g.j[lower] <= 6 - g.i[lower])
    # lower half union its reflection covers everything
    covered = np.zeros(g.size, bool)
    covered[np.flatnonzero(lower)] = True
    covered[g.reflect[lower]] = True
    assert covered.all()


def test_integrate_constant():
    g = TriGrid(64)
    # staircase polygon area: one h^2 cell per node
    assert g.integrate(np.ones(g.size)) == pytest.approx(g.size / 64**2, abs=1e-12)


def test_to_matrix_masks_outside():
    g = TriGrid(4)
    m = g.to_matrix(np.arange(g.size, dtype=float))
    assert np.isnan(m[4, 1])
    assert m[0, 0] == 0.0
    assert m[1, 0] == g.index(1, 0)
