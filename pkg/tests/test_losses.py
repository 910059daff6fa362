import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relmod import diffcore as dc
from relmod import losses
from relmod.diffcore import Tensor, gradcheck

M = 0.7


def vectors_with_similarity(sp, sn):
    """Anchor (1, 0, 0) plus unit vectors at the requested cosines."""
    a = np.array([1.0, 0.0, 0.0])
    p = np.array([sp, np.sqrt(max(1 - sp * sp, 0.0)), 0.0])
    n = np.array([sn, 0.0, np.sqrt(max(1 - sn * sn, 0.0))])
    return a, p, n


def loss_at(sp, sn, m=M):
    return losses.conditional_triplet_loss(*map(Tensor, vectors_with_similarity(sp, sn)), m).item()


# --- softmax -----------------------------------------------------------------------

def head_with(weight, bias, scale=1.0):
    return losses.SoftmaxHead(Tensor(np.asarray(weight, float)), Tensor(np.asarray(bias, float)),
                              scale)


def test_softmax_confident_case():
    # unit embedding (1, 0); class rows chosen so the logits are (+10, -10)
    head = head_with([[10.0, 0.0], [-10.0, 0.0]], [0.0, 0.0])
    loss = losses.softmax_loss(Tensor([[1.0, 0.0]]), [0], head).item()
    assert loss == pytest.approx(np.log1p(np.exp(-20.0)), rel=1e-9)
    assert loss == pytest.approx(2.06e-9, rel=1e-2)


def test_softmax_equal_logits_is_ln2():
    head = head_with([[1.0, 1.0], [1.0, 1.0]], [0.0, 0.0])
    assert losses.softmax_loss(Tensor([[0.3, -0.4]]), [1], head).item() == pytest.approx(np.log(2))


def test_softmax_matches_per_sample_oracle(rng):
    emb = rng.normal(size=(6, 5))
    labels = rng.integers(0, 4, size=6)
    head = losses.SoftmaxHead.init(4, 5, 0, scale=16.0)
    total = 0.0
    for x, y in zip(emb, labels):
        z = 16.0 * x / np.linalg.norm(x) @ head.weight.data.T + head.bias.data
        total += -(z[y] - np.log(np.sum(np.exp(z))))
    assert losses.softmax_loss(Tensor(emb), labels, head).item() == pytest.approx(total / 6,
                                                                                  rel=1e-12)


def test_softmax_rejects_out_of_range_labels():
    with pytest.raises(ValueError):
        losses.softmax_loss(Tensor(np.ones((1, 3))), [5], losses.SoftmaxHead.init(3, 3, 0))


# --- euclidean triplet -------------------------------------------------------------

def test_triplet_satisfied_constraint_is_zero():
    a = np.array([0.0, 0.0])
    assert losses.triplet_loss_euclid(Tensor(a), Tensor(a), Tensor([1.0, 0.0]), 0.5).item() == 0.0


def test_triplet_collapse_gives_margin():
    a = Tensor([0.3, 0.1])
    assert losses.triplet_loss_euclid(a, a, a, 0.2).item() == pytest.approx(0.2)


def test_triplet_hand_example():
    out = losses.triplet_loss_euclid(Tensor([0.0, 0.0]), Tensor([1.0, 0.0]), Tensor([0.0, 2.0]), 0.2)
    assert out.item() == 0.0  # [1 - 4 + 0.2]_+


def test_triplet_mean_over_rows(rng):
    a, p, n = rng.normal(size=(3, 4, 2))
    want = np.mean(np.maximum(np.sum((a - p) ** 2, 1) - np.sum((a - n) ** 2, 1) + 1.0, 0))
    assert losses.triplet_loss_euclid(Tensor(a), Tensor(p), Tensor(n), 1.0).item() == pytest.approx(want)


# --- conditional triplet -------------------------------------------------------------

def test_conditional_perfect_separation():
    assert loss_at(1.0, -1.0) == 0.0


@pytest.mark.parametrize("s", [-0.5, 0.0, 0.3, 0.9])
def test_conditional_equal_similarities(s):
    assert loss_at(s, s) == pytest.approx(0.3, abs=1e-5)


def test_conditional_hand_example():
    assert loss_at(0.5, 0.8) == pytest.approx(1.8 / (1.5 + 1e-6) - 0.7, abs=1e-12)
    assert loss_at(0.5, 0.8) == pytest.approx(0.5, abs=1e-6)


def test_hinge_boundary_grid_scan():
    """Zero-loss region on a 101 x 101 grid equals the half-plane under the boundary line."""
    grid = np.linspace(-1.0, 1.0, 101)
    eps = 1e-6
    for sp in grid:
        for sn in grid:
            value = losses.conditional_loss_from_similarities(sp, sn, M, eps)
            zero_region = sn + 1.0 <= M * (sp + 1.0 + eps)
            assert (value == 0.0) == zero_region
            line = M * sp + (M - 1.0)
            # away from the line the region is decided by the line alone, up to eps
            if abs(sn - line) > 1e-6:
                assert zero_region == (sn < line)


def test_scalar_form_matches_tensor_form(rng):
    for _ in range(50):
        sp, sn = rng.uniform(-0.99, 0.99, size=2)
        assert loss_at(sp, sn) == pytest.approx(losses.conditional_loss_from_similarities(sp, sn),
                                                abs=1e-12)


@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_conditional_scale_invariance(c, seed):
    a, p, n = np.random.default_rng(seed).normal(size=(3, 4, 6))
    base = losses.conditional_triplet_loss(Tensor(a), Tensor(p), Tensor(n)).item()
    scaled = losses.conditional_triplet_loss(Tensor(c * a), Tensor(c * p), Tensor(c * n)).item()
    assert abs(base - scaled) < 1e-9


def test_conditional_monotone_on_active_region(rng):
    h = 1e-4
    checked = 0
    while checked < 100:
        sp, sn = rng.uniform(-0.95, 0.95, size=2)
        if (sn + 1) / (sp + 1 + 1e-6) - M < 0.01:
            continue  # not safely inside the active region
        f = lambda a, b: losses.conditional_loss_from_similarities(a, b, M)  # noqa: E731
        assert f(sp, sn + h) - f(sp, sn - h) > 0
        assert f(sp + h, sn) - f(sp - h, sn) < 0
        checked += 1


def test_similarity_ratio_values():
    r = losses.similarity_ratio(*map(Tensor, vectors_with_similarity(0.5, 0.8))).item()
    assert r == pytest.approx(1.8 / (1.5 + 1e-6), rel=1e-12)


def random_active_triplets(rng, condition):
    while True:
        a, p, n = rng.normal(size=(3, 4, 5))
        sp = np.sum(a * p, 1) / np.linalg.norm(a, axis=1) / np.linalg.norm(p, axis=1)
        sn = np.sum(a * n, 1) / np.linalg.norm(a, axis=1) / np.linalg.norm(n, axis=1)
        if condition(sp, sn):
            return [Tensor(x, requires_grad=True) for x in (a, p, n)]


def test_conditional_gradcheck_away_from_boundary(rng):
    ts = random_active_triplets(rng, lambda sp, sn: np.all(np.abs((sn + 1) / (sp + 1) - M) > 0.05))
    assert gradcheck(lambda: losses.conditional_triplet_loss(*ts, M), ts) < 1e-4


def test_euclid_gradcheck_away_from_boundary(rng):
    a, p, n = rng.normal(size=(3, 4, 5))
    gap = np.sum((a - p) ** 2, 1) - np.sum((a - n) ** 2, 1)
    margin = float(np.median(np.abs(gap))) + 0.1
    ts = [Tensor(x, requires_grad=True) for x in (a, p, n)]
    assert gradcheck(lambda: losses.triplet_loss_euclid(*ts, margin), ts) < 1e-4


def test_gradcheck_excludes_exact_boundary():
    # Sp = 0.5, Sn on the line: (Sn + 1) = 0.7 (Sp + 1 + eps) -> the kink is skipped, not failed
    sp = 0.5
    sn = M * (sp + 1 + 1e-6) - 1
    ts = [Tensor(x, requires_grad=True) for x in vectors_with_similarity(sp, sn)]
    assert gradcheck(lambda: losses.conditional_triplet_loss(*ts, M), ts) < 1e-4


# --- total -------------------------------------------------------------------------

def test_total_examples():
    assert losses.total_loss(Tensor(1.0), Tensor(0.0), 10).item() == 1.0
    assert losses.total_loss(Tensor(0.0), Tensor(0.3), 10).item() == pytest.approx(3.0)
    assert losses.total_loss(Tensor(0.7), Tensor(5.0), 0).item() == 0.7


def test_margin_config_validation():
    with pytest.raises(ValueError):
        losses.MarginConfig(conditional_margin=1.5)
    with pytest.raises(ValueError):
        losses.MarginConfig(lam=-1)


def test_losses_gradcheck_scope():
    from relmod.gradsuite import run_scope
    for result in run_scope("losses"):
        assert result.error < 1e-4, result.name
