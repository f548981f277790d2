import numpy as np
import pytest

from core.errors import EnumerationLimitError, PathError
from core.lattice import (as_site, ball_mask, box_sites, enumerate_paths, neighbor_views,
                          reachable_mask, step_vectors, validate_path)


def test_as_site_accepts_int_only_in_one_dimension():
    assert as_site(3, 1) == (3,)
    assert as_site([1, -2], 2) == (1, -2)
    with pytest.raises(PathError):
        as_site(3, 2)
    with pytest.raises(PathError):
        as_site([1, 2, 3], 2)


def test_neighbor_views_shift_one_step():
    views = neighbor_views(np.ones(1), 1, 0.0)
    assert len(views) == 2
    np.testing.assert_array_equal(views[0], [0.0, 0.0, 1.0])
    np.testing.assert_array_equal(views[1], [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(sum(views), [1.0, 0.0, 1.0])


def test_neighbor_views_keep_trailing_axes():
    prev = np.arange(6, dtype=float).reshape(1, 1, 6)
    views = neighbor_views(prev, 2, 0.0)
    assert len(views) == 4
    assert all(v.shape == (3, 3, 6) for v in views)
    total = sum(views)
    np.testing.assert_array_equal(total[1, 2], prev[0, 0])
    np.testing.assert_array_equal(total[1, 1], np.zeros(6))


def test_masks():
    np.testing.assert_array_equal(reachable_mask(2, 1), [True, False, True, False, True])
    assert int(ball_mask(2, 2).sum()) == 13
    assert int(reachable_mask(2, 2).sum()) == 9


def test_box_sites_order():
    assert list(box_sites(1, 1)) == [(-1,), (0,), (1,)]
    assert len(list(box_sites(1, 2))) == 9


def test_step_vectors():
    moves = step_vectors(2)
    assert moves.shape == (4, 2)
    np.testing.assert_array_equal(moves.sum(axis=0), [0, 0])
    np.testing.assert_array_equal(np.abs(moves).sum(axis=1), [1, 1, 1, 1])


def test_validate_path():
    assert validate_path([0, 1, 0], 1) == [(0,), (1,), (0,)]
    with pytest.raises(PathError):
        validate_path([1, 2], 1)
    with pytest.raises(PathError):
        validate_path([0, 2], 1)
    with pytest.raises(PathError):
        validate_path([], 1)


def test_enumerate_paths():
    positions = enumerate_paths(1, 3, limit=100)
    assert positions.shape == (8, 3, 1)
    assert {tuple(p[:, 0]) for p in positions} == {
        (a, a + b, a + b + c) for a in (1, -1) for b in (1, -1) for c in (1, -1)}
    assert enumerate_paths(2, 0, limit=1).shape == (1, 0, 2)
    with pytest.raises(EnumerationLimitError):
        enumerate_paths(2, 10, limit=1000)
