import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relmod import evaluation as ev
from relmod.diffcore import DegenerateVectorError


def rank_oracle(values, probe_ids, gallery_ids, k):
    """Sort each row by descending score (ties by gallery index) and look for a hit."""
    hits = 0
    for row, pid in zip(values, probe_ids):
        order = sorted(range(len(row)), key=lambda j: (-row[j], j))
        hits += any(gallery_ids[j] == pid for j in order[:k])
    return hits / len(values)


def vr_oracle(genuine, impostor, far):
    """Scan every impostor score as a threshold, smallest first."""
    for t in sorted(set(impostor)):
        if sum(s >= t for s in impostor) <= far * len(impostor):
            return sum(s >= t for s in genuine) / len(genuine)
    return sum(s > max(impostor) for s in genuine) / len(genuine)


def random_sim(rng, n_probe=20, n_gallery=10, quantize=False):
    values = rng.uniform(-1, 1, size=(n_probe, n_gallery))
    if quantize:
        values = np.round(values, 1)  # forces ties
    gallery_ids = np.arange(n_gallery)
    probe_ids = rng.integers(0, n_gallery, n_probe)
    return ev.SimilarityMatrix(values, probe_ids, gallery_ids)


def test_similarity_examples():
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(ev.similarity_matrix(x, x).values, np.eye(2))
    assert not ev.similarity_matrix(x[:1], x[1:]).values.any()
    g = np.array([[1.0, 0.0], [1.0, 1.0]]) / np.array([[1.0], [np.sqrt(2)]])
    np.testing.assert_allclose(ev.similarity_matrix(x, g).values,
                               [[1.0, 1 / np.sqrt(2)], [0.0, 1 / np.sqrt(2)]], atol=1e-15)


def test_similarity_rejects_degenerate_and_mismatched():
    with pytest.raises(DegenerateVectorError):
        ev.similarity_matrix(np.zeros((1, 2)), np.ones((1, 2)))
    with pytest.raises(ValueError):
        ev.similarity_matrix(np.ones((1, 2)), np.ones((1, 3)))


def test_rank1_perfect_and_adversarial():
    sim = ev.SimilarityMatrix(np.eye(3) + 0.1, [0, 1, 2], [0, 1, 2])
    assert ev.rank_k(sim, 1) == 1.0
    values = np.array([[0.5, 0.9, 0.1], [0.1, 0.5, 0.9], [0.9, 0.1, 0.5]])
    sim = ev.SimilarityMatrix(values, [0, 1, 2], [0, 1, 2])
    assert ev.rank_k(sim, 1) == 0.0 and ev.rank_k(sim, 2) == 1.0


def test_rank_ties_resolve_by_gallery_index():
    sim = ev.SimilarityMatrix(np.array([[0.5, 0.5]]), [1], [0, 1])
    assert ev.rank_k(sim, 1) == 0.0
    sim = ev.SimilarityMatrix(np.array([[0.5, 0.5]]), [0], [0, 1])
    assert ev.rank_k(sim, 1) == 1.0


def test_rank_requires_probe_identity_in_gallery():
    with pytest.raises(ValueError, match="absent"):
        ev.rank_k(ev.SimilarityMatrix(np.ones((1, 2)), [9], [0, 1]))


def test_rank_random_10x5_against_sort_oracle(rng):
    sim = random_sim(rng, 10, 5)
    for k in range(1, 6):
        assert ev.rank_k(sim, k) == rank_oracle(sim.values, sim.probe_ids, sim.gallery_ids, k)


def test_metric_oracles_on_200_random_matrices():
    rng = np.random.default_rng(2024)
    for trial in range(200):
        sim = random_sim(rng, quantize=trial % 2 == 1)
        mask = sim.genuine_mask()
        gen, imp = sim.values[mask].tolist(), sim.values[~mask].tolist()
        for k in (1, 2, 5):
            assert ev.rank_k(sim, k) == rank_oracle(sim.values, sim.probe_ids, sim.gallery_ids, k)
        for far in (1e-2, 1e-1, 0.3):
            assert ev.vr_at_far(sim, far) == vr_oracle(gen, imp, far)


def test_vr_perfect_separation():
    sim = ev.SimilarityMatrix(np.where(np.eye(4), 0.9, 0.1), range(4), range(4))
    assert all(ev.vr_at_far(sim, f) == 1.0 for f in ev.FARS)


def test_vr_hand_threshold_scan():
    imp = np.round(np.arange(1, 11) / 10, 10)
    gen = np.array([0.55, 0.95])
    assert ev._vr_from_scores(gen, imp, 0.1) == 0.0
    assert ev._vr_from_scores(gen, imp, 0.2) == 0.5


def test_vr_identical_distributions_tracks_far():
    scores = np.linspace(0, 1, 1001)
    for far in (0.05, 0.1, 0.5):
        assert ev._vr_from_scores(scores, scores, far) == pytest.approx(far, abs=2e-3)


@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 0.5), st.floats(1e-4, 0.5))
def test_vr_is_monotone_in_far(seed, f1, f2):
    rng = np.random.default_rng(seed)
    gen, imp = rng.normal(1, 1, 30), np.round(rng.normal(0, 1, 200), 2)
    lo, hi = sorted((f1, f2))
    assert ev._vr_from_scores(gen, imp, lo) <= ev._vr_from_scores(gen, imp, hi)


@given(st.integers(0, 2**32 - 1))
def test_rank_is_monotone_and_full_rank_is_one(seed):
    sim = random_sim(np.random.default_rng(seed), 8, 6, quantize=True)
    ranks = [ev.rank_k(sim, k) for k in range(1, 7)]
    assert ranks == sorted(ranks) and ranks[-1] == 1.0


def test_evaluate_report_keys_and_determinism(rng):
    sim = random_sim(rng)
    a, b = ev.evaluate(sim), ev.evaluate(sim)
    assert a == b
    assert list(a.to_json()) == ["rank1", "vr_far_1e2", "vr_far_1e3", "vr_far_1e4"]
    assert a.num_genuine + a.num_impostor == sim.values.size


def test_compactness_oracle(rng):
    emb = rng.normal(size=(6, 4))
    ids = [0, 0, 1, 1, 2, 2]
    dom = ["NIR", "VIS"] * 3
    u = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    want = np.mean([u[0] @ u[1], u[2] @ u[3], u[4] @ u[5]])
    assert ev.cross_domain_compactness(emb, ids, dom) == pytest.approx(want)
    c = emb - emb.mean(0)
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    assert ev.cross_domain_compactness(emb, ids, dom, center=True) == pytest.approx(
        np.mean([c[0] @ c[1], c[2] @ c[3], c[4] @ c[5]]))


def test_pca_exact_plane(rng):
    basis = np.linalg.qr(rng.normal(size=(7, 2)))[0].T
    pts = rng.normal(size=(30, 2)) @ basis + 3.0
    proj, comps, _ = ev.pca_2d(pts)
    recon = proj @ comps + pts.mean(0)
    assert np.max(np.abs(recon - pts)) < 1e-6


def test_pca_top_eigenvalue_matches_dense_solver(rng):
    x = rng.normal(size=(50, 5)) * np.array([3.0, 1.0, 0.5, 0.2, 0.1])
    _, comps, vals = ev.pca_2d(x)
    cov = np.cov(x, rowvar=False)
    w, v = np.linalg.eigh(cov)
    assert vals[0] == pytest.approx(w[-1], rel=1e-9)
    assert vals[1] == pytest.approx(w[-2], rel=1e-7)
    assert abs(abs(comps[0] @ v[:, -1]) - 1) < 1e-9


def test_export_round_trip(rng, tmp_path):
    emb = rng.normal(size=(5, 3))
    ids, dom = [1, 1, 2, 2, 3], ["NIR", "VIS", "NIR", "VIS", "VIS"]
    path, companion = ev.export_embeddings(emb, ids, dom, tmp_path / "emb.csv")
    assert companion.name == "emb.pca.csv"
    back, bid, bdom = ev.read_embeddings(path)
    np.testing.assert_allclose(back, emb, atol=1e-9)
    assert bid == ids and bdom == dom
    proj, _, _ = ev.read_embeddings(companion)
    assert proj.shape == (5, 2)
