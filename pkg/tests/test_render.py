import math

import numpy as np
import pytest
from _support import TINY, finite_difference_check, tiny_instance

from streamnerf.camera import CameraIntrinsics, PoseSE3, Ray, look_at
from streamnerf.model import CheckpointError, ModelConfig, NerfModel
from streamnerf import render
from streamnerf.render import (
    RenderConfig,
    composite,
    loss_and_gradients,
    photometric_loss,
    render_image,
    render_ray,
    render_rays_field,
    sample_depths,
)


def brute_force_composite(sigma, color, deltas, bg):
    """Per-sample loop: T_i = prod_{j<i} (1 - alpha_j)."""
    rgb = np.zeros(3)
    trans = 1.0
    total = 0.0
    for s, c, d in zip(sigma, color, deltas):
        alpha = 1.0 - math.exp(-s * d)
        w = trans * alpha
        rgb += w * np.asarray(c)
        total += w
        trans *= 1.0 - alpha
    return rgb + (1.0 - total) * np.asarray(bg), total, trans


def test_two_sample_example():
    ln2 = math.log(2.0)
    sigma = np.array([[ln2, ln2]])
    color = np.array([[[1.0, 0, 0], [0, 1.0, 0]]])
    deltas = np.ones((1, 2))
    out = composite(sigma, color, deltas, (0, 0, 0))
    assert np.allclose(out.rgb[0], [0.5, 0.25, 0.0], atol=1e-15)
    assert math.isclose(out.opacity[0], 0.75, abs_tol=1e-15)
    ref_rgb, ref_op, _ = brute_force_composite(sigma[0], color[0], deltas[0], (0, 0, 0))
    assert np.allclose(ref_rgb, [0.5, 0.25, 0.0]) and math.isclose(ref_op, 0.75)


def test_zero_density_gives_background():
    out = composite(np.zeros((3, 8)), np.random.default_rng(0).random((3, 8, 3)), np.full((3, 8), 0.1), (0.2, 0.4, 0.6))
    assert np.allclose(out.rgb, [0.2, 0.4, 0.6])
    assert np.all(out.opacity == 0)


def test_opaque_first_sample():
    sigma = np.array([[500.0, 3.0, 7.0]])
    color = np.array([[[0.1, 0.7, 0.3], [1, 1, 1], [0, 0, 0]]])
    out = composite(sigma, color, np.full((1, 3), 0.1), (1, 1, 1))
    assert np.allclose(out.rgb[0], [0.1, 0.7, 0.3], atol=1e-9)
    assert abs(out.opacity[0] - 1) < 1e-9


def test_matches_brute_force_random():
    rng = np.random.default_rng(0)
    sigma = rng.exponential(2.0, (50, 16))
    color = rng.random((50, 16, 3))
    deltas = rng.uniform(0.01, 0.3, (50, 16))
    out = composite(sigma, color, deltas, (0.3, 0.3, 0.9))
    for r in range(50):
        ref_rgb, ref_op, ref_t = brute_force_composite(sigma[r], color[r], deltas[r], (0.3, 0.3, 0.9))
        assert np.allclose(out.rgb[r], ref_rgb, atol=1e-12)
        assert math.isclose(out.opacity[r], ref_op, abs_tol=1e-12)
        assert math.isclose(out.transmittance[r, -1], ref_t, abs_tol=1e-12)


def test_partition_of_unity_and_monotone_transmittance():
    rng = np.random.default_rng(1)
    sigma = rng.exponential(5.0, (200, 32)) * (rng.random((200, 32)) < 0.5)
    out = composite(sigma, rng.random((200, 32, 3)), rng.uniform(0.0, 0.2, (200, 32)), (0, 0, 0))
    assert np.all(np.abs(out.weights.sum(1) + out.transmittance[:, -1] - 1) <= 1e-9)
    assert np.all(np.diff(out.transmittance, axis=1) <= 0)


def test_sample_depths_bins():
    cfg = RenderConfig(near=1.0, far=3.0, samples_per_ray=4, stratified=False)
    t, deltas = sample_depths(2, cfg)
    assert np.allclose(t[0], [1.25, 1.75, 2.25, 2.75])
    assert np.allclose(deltas, 0.5)
    t, _ = sample_depths(100, cfg.replace(stratified=True), np.random.default_rng(0))
    lower = 1.0 + 0.5 * np.arange(4)
    assert np.all((t >= lower) & (t <= lower + 0.5))


def test_render_config_validation():
    with pytest.raises(ValueError):
        RenderConfig(near=2.0, far=1.0)
    with pytest.raises(ValueError):
        RenderConfig(samples_per_ray=0)


# -- field ------------------------------------------------------------------


def test_query_field_activations():
    model = NerfModel(TINY, seed=0)
    v = model.views()
    v["w3"][...] = 0.0
    v["b3"][...] = 0.0
    sigma, c = model.query(np.zeros((1, 3)), np.array([[0, 0, 1.0]]))
    assert math.isclose(sigma[0], math.log(2.0), rel_tol=1e-15)
    assert np.allclose(c, 0.5)


def test_query_ranges():
    model = NerfModel(TINY, seed=3)
    model.params[:] = np.random.default_rng(0).normal(0, 0.3, model.n_params)
    x = np.random.default_rng(1).uniform(-1, 1, (500, 3))
    d = np.random.default_rng(2).normal(size=(500, 3))
    sigma, c = model.query(x, d / np.linalg.norm(d, axis=1, keepdims=True))
    assert np.all(sigma >= 0)
    assert np.all((c > 0) & (c < 1))


def test_points_outside_box_have_no_density():
    model = NerfModel(TINY, seed=0)
    model.params[model.param_slice("b3")] = [20.0, 0, 0, 0]
    # ray passing entirely outside [-1, 1]^3
    rgb, opacity = render_ray(model, Ray(np.array([5.0, 5.0, 0]), np.array([0, 0, 1.0])), RenderConfig(stratified=False))
    assert opacity == 0.0


# -- loss and gradients -----------------------------------------------------


def test_photometric_loss_examples():
    assert photometric_loss([[0.2, 0.3, 0.4]], [[0.2, 0.3, 0.4]]) == 0
    assert photometric_loss([[1, 1, 1]], [[0, 0, 0]]) == 1
    assert math.isclose(photometric_loss([[0.5, 0, 0]], [[0, 0, 0]]), 0.25 / 3)
    with pytest.raises(ValueError):
        photometric_loss([[0, 0, 0]], [[0, 0, 0], [1, 1, 1]])


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    assert finite_difference_check(seed) <= 1e-3


def test_gradient_sweep_small_step():
    # A 1e-4 step can straddle a ReLU kink on a few percent of instances; 1e-6 stays on one side.
    assert max(finite_difference_check(s, step=1e-6) for s in range(100, 300)) <= 1e-6


def test_gradient_all_params_against_finite_differences():
    model, o, d, gt, cfg, t, deltas = tiny_instance(42, n_rays=3, samples=6)
    _, grad = loss_and_gradients(model, o, d, gt, cfg, t=t, deltas=deltas)
    fd = np.empty(model.n_params)
    h = 1e-5
    for i in range(model.n_params):
        keep = model.params[i]
        model.params[i] = keep + h
        lp, _ = loss_and_gradients(model, o, d, gt, cfg, t=t, deltas=deltas)
        model.params[i] = keep - h
        lm, _ = loss_and_gradients(model, o, d, gt, cfg, t=t, deltas=deltas)
        model.params[i] = keep
        fd[i] = (lp - lm) / (2 * h)
    assert np.linalg.norm(grad - fd) <= 1e-4 * np.linalg.norm(fd)


def test_unused_hash_entries_get_zero_gradient():
    cfg_model = ModelConfig(grid=TINY.grid.__class__(levels=2, table_size=2**12, base_resolution=16), hidden_width=8)
    model = NerfModel(cfg_model, seed=0)
    model.params[model.param_slice("b3")] = [-30.0, 0, 0, 0]  # effectively empty space
    o = np.array([[0.0, 0.0, -2.0]])
    d = np.array([[0.0, 0.0, 1.0]])
    cfg = RenderConfig(near=0.5, far=3.5, samples_per_ray=8, stratified=False)
    _, grad = loss_and_gradients(model, o, d, np.array([[0.3, 0.3, 0.3]]), cfg)
    t, _ = sample_depths(1, cfg)
    pts = o + t[0, :, None] * d
    xn = model.normalize(pts[model.inside(pts)])
    from streamnerf.hashgrid import encode
    _, cache = encode(cfg_model.grid, model.views()["tables"], xn, want_cache=True)
    used = np.zeros(cfg_model.grid.levels * cfg_model.grid.table_size, bool)
    used[cache.flat_index.ravel()] = True
    g_tables = grad[model.param_slice("tables")].reshape(-1, 2)
    assert np.all(g_tables[~used] == 0)
    assert used.sum() < used.size


def test_duplicated_batch_same_gradient():
    model, o, d, gt, cfg, t, deltas = tiny_instance(7)
    _, g1 = loss_and_gradients(model, o, d, gt, cfg, t=t, deltas=deltas)
    _, g2 = loss_and_gradients(
        model, np.repeat(o, 2, 0), np.repeat(d, 2, 0), np.repeat(gt, 2, 0), cfg,
        t=np.repeat(t, 2, 0), deltas=np.repeat(deltas, 2, 0),
    )
    assert np.allclose(g1, g2, rtol=1e-12, atol=1e-15)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_raises():
    model, o, d, gt, cfg, t, deltas = tiny_instance(0)
    model.params[model.param_slice("w1")] = np.nan
    with pytest.raises(render.NonFiniteGradient):
        loss_and_gradients(model, o, d, gt, cfg, t=t, deltas=deltas)


# -- quadrature -------------------------------------------------------------


class GaussianBlob:
    """Smooth analytic density/colour field used to check quadrature convergence."""

    def inside(self, x):
        return np.all(np.abs(x) <= 1.0, axis=-1)

    def query(self, x, d):
        r2 = np.sum(x * x, axis=-1)
        sigma = 3.0 * np.exp(-r2 / 0.2)
        color = 0.5 + 0.4 * np.sin(np.stack([3 * x[:, 0], 2 * x[:, 1] + 1, 4 * x[:, 2]], axis=-1))
        return sigma, color


def test_quadrature_error_decreases_with_samples():
    field = GaussianBlob()
    rng = np.random.default_rng(0)
    o = np.array([[0.0, 0.0, -2.5]]) + rng.normal(0, 0.05, (16, 3))
    d = np.array([[0.0, 0.0, 1.0]]) + rng.normal(0, 0.1, (16, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    base = RenderConfig(near=0.5, far=4.5, stratified=False, background_color=(0, 0, 0))
    ref = render_rays_field(field, o, d, base.replace(samples_per_ray=16384)).rgb
    errors = [
        np.abs(render_rays_field(field, o, d, base.replace(samples_per_ray=n)).rgb - ref).max()
        for n in (16, 32, 64, 128)
    ]
    assert all(a > b for a, b in zip(errors, errors[1:])), errors


# -- images, checkpoints ----------------------------------------------------


INTR = CameraIntrinsics(16.0, 16.0, 8.0, 8.0, 16, 16)


def test_render_image_zero_density_white():
    model = NerfModel(TINY, seed=0)
    model.params[model.param_slice("b3")] = [-1000.0, 0, 0, 0]
    model.params[model.param_slice("w3")] = 0.0
    img = render_image(model, INTR, look_at([0, -2.0, 0.3], [0, 0, 0]), RenderConfig(background_color=(1, 1, 1)))
    assert img.shape == (16, 16, 3) and np.all(img == 255)


def test_render_image_deterministic_and_counts_rays(monkeypatch):
    model = NerfModel(TINY, seed=1)
    pose = look_at([0, -2.0, 0.3], [0, 0, 0])
    cfg = RenderConfig(samples_per_ray=8)
    a = render_image(model, INTR, pose, cfg)
    b = render_image(model, INTR, pose, cfg)
    assert np.array_equal(a, b)

    calls = []
    real = render.render_rays_field

    def counting(field, origins, *args, **kw):
        calls.append(origins.shape[0])
        return real(field, origins, *args, **kw)

    monkeypatch.setattr(render, "render_rays_field", counting)
    intr64 = CameraIntrinsics(64.0, 64.0, 32.0, 32.0, 64, 64)
    render_image(model, intr64, pose, cfg)
    assert sum(calls) == 4096


def test_checkpoint_round_trip(tmp_path):
    model = NerfModel(TINY, seed=5)
    path = tmp_path / "m.ckpt"
    model.save(path)
    blob = path.read_bytes()
    assert blob[:4] == b"NRFB"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[8:16], "little") == model.n_params
    assert len(blob) == 16 + 8 * model.n_params
    # first parameter is the first hash-table entry
    assert np.frombuffer(blob[16:24], "<f8")[0] == model.params[0]
    back = NerfModel.load(path, TINY)
    assert np.array_equal(back.params, model.params)
    path.write_bytes(blob[:-8])
    with pytest.raises(CheckpointError):
        NerfModel.load(path, TINY)


def test_render_does_not_mutate_pose():
    pose = look_at([0, -2.0, 0.3], [0, 0, 0])
    r0 = pose.rotation.copy()
    render_image(NerfModel(TINY), INTR, pose, RenderConfig(samples_per_ray=4))
    assert np.array_equal(pose.rotation, r0)
    assert isinstance(pose, PoseSE3)
