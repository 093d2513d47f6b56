import numpy as np
import pytest

from helpers import FD_TOL, gradcheck
from pcfgrasp.cloud import Cloud
from pcfgrasp.errors import DimensionError, FormatError, ValidationError
from pcfgrasp.kernels import NeighborGroup
from pcfgrasp.pcf import (
    PcfConfig,
    PcfGroups,
    concat_points,
    dump_features,
    init_pcf_params,
    load_features,
    pcf_forward,
    pcf_groups,
)
from pcfgrasp.tensor import Tensor, mul, tsum

SMALL = PcfConfig(radii=(0.03, 0.06), fanouts=(8, 16), mlp_widths=((8, 16), (8, 12)))


def _object(rng, n, scale=0.05):
    return Cloud(rng.normal(scale=scale, size=(n, 3)))


def _pair(rng, n):
    orig = _object(rng, n)
    return orig, concat_points(orig, _object(rng, n))


def test_default_config_has_320_channels():
    cfg = PcfConfig()
    assert cfg.out_channels == 64 + 128 + 128 == 320
    with pytest.raises(ValidationError):
        PcfConfig(radii=(0.1,), fanouts=(4, 4), mlp_widths=((4,),))


def test_concat_points(rng):
    orig, comp = _object(rng, 1024), _object(rng, 1024)
    cat = concat_points(orig, comp)
    assert len(cat) == 2048
    assert np.array_equal(cat.points[:1024], orig.points)
    assert np.array_equal(cat.points[1024:], comp.points)
    twin = concat_points(orig, orig)
    assert np.array_equal(twin.points[1024:], twin.points[:1024])


def test_concat_errors(rng):
    with pytest.raises(ValidationError):
        concat_points(_object(rng, 4), Cloud(np.zeros((4, 3)), frame="robot"))
    with pytest.raises(ValidationError):
        concat_points(_object(rng, 4), _object(rng, 5))


def test_full_size_output_shape(rng):
    cfg = PcfConfig()
    orig, cat = _pair(rng, 1024)
    F = pcf_forward(orig, cat, cfg, init_pcf_params(cfg, rng))
    assert F.shape == (1024, 320)
    assert np.all(np.isfinite(F.data))


def test_zero_weights_zero_features(rng):
    orig, cat = _pair(rng, 64)
    params = init_pcf_params(SMALL, rng)
    for p in params.values():
        p.data[...] = 0.0
    assert np.array_equal(pcf_forward(orig, cat, SMALL, params).data, np.zeros((64, SMALL.out_channels)))


def test_repeated_or_permuted_neighbors_leave_feature(rng):
    orig, cat = _pair(rng, 64)
    params = init_pcf_params(SMALL, rng)
    groups = pcf_groups(orig, cat, SMALL)
    base = pcf_forward(orig, cat, SMALL, params, groups).data
    new_groups, new_rel = [], []
    for g, r in zip(groups.groups, groups.relative):
        idx = g.neighbor_idx.copy()
        rel = r.reshape(len(orig), g.fanout, 3).copy()
        for m in range(len(orig)):
            n = max(int(g.valid_count[m]), 1)
            # every slot draws from the valid neighbours, each appearing at least once
            order = np.concatenate([rng.permutation(n), rng.integers(0, n, g.fanout - n)])
            idx[m], rel[m] = idx[m][order], rel[m][order]
        new_groups.append(NeighborGroup(g.centers, idx, g.valid_count))
        new_rel.append(rel.reshape(-1, 3))
    out = pcf_forward(orig, cat, SMALL, params, PcfGroups(new_groups, new_rel)).data
    assert np.array_equal(out, base)


def test_duplicated_completion_leaves_feature(rng):
    # with completion == original every neighbour appears twice in the concat cloud
    orig = _object(rng, 32)
    cat = concat_points(orig, orig)
    cfg = PcfConfig(radii=(10.0,), fanouts=(64,), mlp_widths=((4, 5),))
    params = init_pcf_params(cfg, rng)
    F = pcf_forward(orig, cat, cfg, params).data
    single = pcf_forward(orig, concat_points(orig, Cloud(orig.points + 100.0)), cfg, params).data
    # the far-away completion contributes nothing, so only the duplicates differ
    assert np.allclose(F, single, atol=1e-12)


def test_translation_invariance(rng):
    orig, cat = _pair(rng, 128)
    params = init_pcf_params(SMALL, rng)
    shift = np.array([0.3, -1.2, 0.8])
    base = pcf_forward(orig, cat, SMALL, params).data
    moved = pcf_forward(Cloud(orig.points + shift), Cloud(cat.points + shift), SMALL, params).data
    assert np.allclose(moved, base, atol=1e-9, rtol=0)


def test_empty_ball_gives_zero_row(rng):
    orig = Cloud(np.vstack([rng.normal(scale=0.01, size=(7, 3)), [[5.0, 5.0, 5.0]]]))
    comp = Cloud(rng.normal(scale=0.01, size=(8, 3)))
    groups = pcf_groups(orig, concat_points(orig, comp), SMALL)
    # drop the outlier's self-match so its balls are truly empty
    for g in groups.groups:
        g.valid_count[7] = 0
    F = pcf_forward(orig, None, SMALL, init_pcf_params(SMALL, rng), groups).data
    assert np.array_equal(F[7], np.zeros(SMALL.out_channels))
    assert np.any(F[:7] != 0)


def test_group_shape_mismatch(rng):
    orig, cat = _pair(rng, 16)
    groups = pcf_groups(orig, cat, SMALL)
    with pytest.raises(DimensionError):
        pcf_forward(_object(rng, 12), cat, SMALL, init_pcf_params(SMALL, rng), groups)


def test_pcf_gradcheck(rng):
    cfg = PcfConfig(radii=(0.06,), fanouts=(4,), mlp_widths=((4, 4),))
    orig, cat = _pair(rng, 8)
    groups = pcf_groups(orig, cat, cfg)
    init = {k: v.data for k, v in init_pcf_params(cfg, rng).items()}
    for k in init:
        if k.endswith(".b"):
            init[k] = rng.normal(scale=0.1, size=init[k].shape)
    weights = Tensor(rng.normal(size=(8, 4)))

    def fn(p):
        return tsum(mul(pcf_forward(orig, cat, cfg, p, groups), weights))

    errors = gradcheck(fn, init)
    assert max(errors.values()) < FD_TOL, errors


def test_feature_dump_round_trip(tmp_path, rng):
    values = rng.normal(size=(5, 7))
    path = tmp_path / "f.bin"
    dump_features(path, Tensor(values))
    raw = path.read_bytes()
    assert raw[:8] == np.array([5, 7], dtype="<u4").tobytes()
    assert len(raw) == 8 + 5 * 7 * 8
    assert np.array_equal(load_features(path), values)
    path.write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        load_features(path)
    with pytest.raises(DimensionError):
        dump_features(path, np.zeros(3))
