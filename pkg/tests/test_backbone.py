import numpy as np
import pytest

from relmod import backbone as bb
from relmod.diffcore import ShapeError, Tensor, gradcheck
from relmod import diffcore as dc


def test_default_map_is_8x8x32(rng):
    cfg = bb.BackboneConfig()
    out = bb.backbone_forward(rng.uniform(size=(32, 32, 1)), cfg, bb.init_params(cfg, 0))
    assert out.shape == (8, 8, 32)


def test_batched_forward(rng):
    cfg = bb.BackboneConfig()
    params = bb.init_params(cfg, 0)
    x = rng.uniform(size=(3, 32, 32, 1))
    batch = bb.backbone_forward(x, cfg, params).data
    np.testing.assert_allclose(batch[1], bb.backbone_forward(x[1], cfg, params).data, atol=1e-12)


def test_zero_input_zero_bias_gives_zero_map():
    cfg = bb.BackboneConfig()
    out = bb.backbone_forward(np.zeros((32, 32, 1)), cfg, bb.init_params(cfg, 3))
    assert not out.data.any()


def test_identical_inputs_identical_maps(rng):
    cfg = bb.BackboneConfig()
    params = bb.init_params(cfg, 1)
    x = rng.uniform(size=(32, 32, 1))
    np.testing.assert_array_equal(bb.backbone_forward(x, cfg, params).data,
                                  bb.backbone_forward(x.copy(), cfg, params).data)


def test_init_is_seeded():
    cfg = bb.BackboneConfig()
    a, b, c = bb.init_params(cfg, 5), bb.init_params(cfg, 5), bb.init_params(cfg, 6)
    assert list(a) == bb.param_names(cfg)
    for k in a:
        assert a[k].data.tobytes() == b[k].data.tobytes()
    assert not np.array_equal(a["backbone.stage0.kernel"].data, c["backbone.stage0.kernel"].data)


def test_he_variance_within_20_percent():
    # stage 2 of the default config has 3*3*16*32 = 4608 weights; pool two seeds for > 1e4 draws
    cfg = bb.BackboneConfig()
    draws = np.concatenate([bb.init_params(cfg, s)["backbone.stage2.kernel"].data.ravel()
                            for s in range(3)])
    assert draws.size >= 10_000
    fan_in = 3 * 3 * 16
    assert abs(draws.var() / (2.0 / fan_in) - 1.0) < 0.2


def test_stage_plan_for_default_config():
    assert bb.BackboneConfig().stage_plan() == [True, True, False]


@pytest.mark.parametrize("kw", [
    {"input_size": 30},                   # 30 -> 15 cannot reach 8
    {"output_grid": 3},                   # 32 -> 16 -> 8 -> 4 needs a fourth stage
    {"channels": (8, 16), "output_channels": 32},
    {"kernel_size": 2},
    {"channels": ()},
])
def test_bad_stage_plans_fail_at_construction(kw):
    with pytest.raises(ValueError):
        bb.BackboneConfig(**kw)


def test_size_mismatch_names_expected_and_actual():
    cfg = bb.BackboneConfig()
    with pytest.raises(ShapeError, match=r"\(16, 16, 1\).*\(32, 32, 1\)"):
        bb.backbone_forward(np.zeros((16, 16, 1)), cfg, bb.init_params(cfg, 0))


def test_standardize_removes_gain_and_offset(rng):
    cfg = bb.BackboneConfig()
    params = bb.init_params(cfg, 0)
    x = rng.uniform(size=(32, 32, 1))
    a = bb.backbone_forward(x, cfg, params).data
    b = bb.backbone_forward(3.0 * x + 0.5, cfg, params).data
    np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-6)


def test_gradcheck_toy_backbone(rng):
    cfg = bb.BackboneConfig(input_size=8, channels=(2, 3), output_grid=2, output_channels=3)
    params = bb.init_params(cfg, 0)
    for p in params.values():
        p.data += 0.05  # nonzero biases keep relus off their kinks
    x = Tensor(rng.uniform(size=(2, 8, 8, 1)), requires_grad=True)
    w = Tensor(rng.normal(size=(2, 2, 2, 3)))
    err = gradcheck(lambda: dc.sum(dc.mul(bb.backbone_forward(x, cfg, params), w)),
                    [x, *params.values()])
    assert err < 1e-4
