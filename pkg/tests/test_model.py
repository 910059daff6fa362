import numpy as np
import pytest

from relmod import model
from relmod.config import RunConfig
from relmod.diffcore import ShapeError, Tensor, gradcheck


def test_baseline_pools_a_constant_map_to_its_cell(rng):
    params = model.init_baseline_params(4, 6, 0)
    params["baseline.f.kernel"].data[:] = np.eye(4, 6)
    cell = rng.normal(size=4)
    out = model.baseline_forward(np.broadcast_to(cell, (3, 3, 4)).copy(), params).data
    np.testing.assert_allclose(out[:4], cell, rtol=1e-12)
    assert not out[4:].any()


def test_baseline_output_length_and_batching(rng):
    params = model.init_baseline_params(32, 256, 0)
    fmaps = rng.normal(size=(3, 8, 8, 32))
    out = model.baseline_forward(fmaps, params).data
    assert out.shape == (3, 256)
    np.testing.assert_allclose(out[1], model.baseline_forward(fmaps[1], params).data, rtol=1e-9, atol=1e-15)


def test_baseline_shape_error(rng):
    with pytest.raises(ShapeError):
        model.baseline_forward(rng.normal(size=(8, 8, 16)), model.init_baseline_params(32, 8, 0))


def test_baseline_gradcheck(rng):
    params = model.init_baseline_params(3, 5, 0)
    fmap = Tensor(rng.normal(size=(2, 2, 2, 3)), requires_grad=True)
    w = Tensor(rng.normal(size=(2, 5)))
    loss = lambda: (model.baseline_forward(fmap, params) * w).sum()  # noqa: E731
    assert gradcheck(loss, [fmap, *params.values()]) < 1e-4


@pytest.mark.parametrize("arch", ["relation", "baseline"])
def test_embed_shapes_and_eval_agreement(arch, rng):
    cfg = RunConfig().replace(train={"arch": arch})
    params = model.init_params(cfg, 0)
    images = rng.uniform(0, 1, size=(3, 32, 32, 1))
    emb = model.embed_numpy(images, cfg, params, batch=2)
    assert emb.shape == (3, 256)
    # chunked vs whole-batch BLAS calls may round differently
    np.testing.assert_allclose(emb, model.embed(images, cfg, params).data, rtol=1e-9)
    prefix = "relation." if arch == "relation" else "baseline."
    assert any(k.startswith(prefix) for k in params)
