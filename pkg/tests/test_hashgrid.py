import itertools
import math

import numpy as np
import pytest

from streamnerf import hashgrid
from streamnerf.hashgrid import HashGridConfig, hash_corners

BACKENDS = [
    (hashgrid.encode, hashgrid.encode_backward),
    (hashgrid.encode_fast, hashgrid.encode_backward_fast),
]


def reference_encode(cfg, tables, x):
    """Scalar trilinear hash lookup, one point, written without numpy vectorization."""
    out = []
    for l in range(cfg.levels):
        res = math.floor(cfg.base_resolution * cfg.growth_factor**l)
        s = [c * res for c in x]
        base = [math.floor(c) for c in s]
        frac = [c - b for c, b in zip(s, base)]
        acc = [0.0] * cfg.features_per_level
        for di, dj, dk in itertools.product((0, 1), repeat=3):
            w = 1.0
            for off, f in zip((di, dj, dk), frac):
                w *= f if off else 1.0 - f
            i, j, k = base[0] + di, base[1] + dj, base[2] + dk
            idx = ((i * 1) ^ (j * 2654435761) ^ (k * 805459861)) % cfg.table_size
            for f in range(cfg.features_per_level):
                acc[f] += w * tables[l, idx, f]
        out.extend(acc)
    return np.array(out)


def test_resolutions():
    cfg = HashGridConfig()
    assert list(cfg.resolutions) == [math.floor(16 * 1.5**l) for l in range(8)]
    assert cfg.output_dim == 16


def test_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        HashGridConfig(table_size=1000)


def test_hash_matches_formula():
    c = np.array([[3, 7, 11], [0, 0, 0], [300, 1, 2]])
    expected = [((i) ^ (j * 2654435761) ^ (k * 805459861)) % 64 for i, j, k in c]
    assert list(hash_corners(c, 64)) == expected


@pytest.mark.parametrize("encode,_", BACKENDS)
def test_matches_scalar_reference(encode, _):
    cfg = HashGridConfig(levels=4, table_size=2**10, features_per_level=2, base_resolution=4, growth_factor=1.7)
    rng = np.random.default_rng(0)
    tables = rng.normal(size=(4, 2**10, 2))
    xs = rng.random((25, 3))
    got = encode(cfg, tables, xs)
    for x, row in zip(xs, got):
        assert np.allclose(row, reference_encode(cfg, tables, x), atol=1e-12)


@pytest.mark.parametrize("encode,_", BACKENDS)
def test_grid_corner_selects_single_entry(encode, _):
    cfg = HashGridConfig(levels=3, table_size=2**8)
    tables = np.random.default_rng(1).normal(size=(3, 2**8, 2))
    feats = encode(cfg, tables, np.zeros((1, 3)))
    # corner (0,0,0) hashes to index 0 on every level
    assert np.allclose(feats[0], tables[:, 0, :].ravel())


@pytest.mark.parametrize("encode,_", BACKENDS)
def test_zero_tables(encode, _):
    cfg = HashGridConfig(levels=2, table_size=16)
    assert np.all(encode(cfg, np.zeros((2, 16, 2)), np.random.default_rng(0).random((5, 3))) == 0)


@pytest.mark.parametrize("encode,_", BACKENDS)
def test_cell_center_averages_corners(encode, _):
    cfg = HashGridConfig(levels=1, table_size=2**12, features_per_level=1, base_resolution=4)
    rng = np.random.default_rng(2)
    tables = rng.normal(size=(1, 2**12, 1))
    # center of cell (1, 2, 0) at resolution 4
    x = np.array([[1.5 / 4, 2.5 / 4, 0.5 / 4]])
    corners = np.array([[1 + a, 2 + b, 0 + c] for a, b, c in itertools.product((0, 1), repeat=3)])
    idx = [((i) ^ (j * 2654435761) ^ (k * 805459861)) % 2**12 for i, j, k in corners]
    expected = tables[0, idx, 0].sum() / 8
    assert np.isclose(encode(cfg, tables, x)[0, 0], expected, atol=1e-14)


def test_backends_agree_including_backward():
    cfg = HashGridConfig(levels=5, table_size=2**9)
    rng = np.random.default_rng(4)
    tables = rng.normal(size=(5, 2**9, 2))
    xs = rng.random((300, 3))
    g = rng.normal(size=(300, 10))
    (f1, c1), (f2, c2) = (enc(cfg, tables, xs, want_cache=True) for enc, _ in BACKENDS)
    assert np.allclose(f1, f2, atol=1e-12)
    b1 = hashgrid.encode_backward(cfg, c1, g)
    b2 = hashgrid.encode_backward_fast(cfg, c2, g)
    assert np.allclose(b1, b2, atol=1e-12)


@pytest.mark.parametrize("encode,backward", BACKENDS)
def test_backward_is_transpose_of_forward(encode, backward):
    # encode is linear in the tables: <g, E t> == <E^T g, t>
    cfg = HashGridConfig(levels=3, table_size=64)
    rng = np.random.default_rng(6)
    tables = rng.normal(size=(3, 64, 2))
    xs = rng.random((40, 3))
    g = rng.normal(size=(40, 6))
    feats, cache = encode(cfg, tables, xs, want_cache=True)
    assert np.isclose(np.sum(g * feats), np.sum(backward(cfg, cache, g) * tables))
