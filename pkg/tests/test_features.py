import numpy as np
import pytest

from vigilearn.features import (block_histogram, image_features, lbp_code,
                                lbp_map, normalize_blocks, pca_fit,
                                pca_project, pca_reconstruct)

# ---------------------------------------------------------------------------
# independent oracles

NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1),
              (0, -1)]  # clockwise from top-left, bit i -> weight 2**i


def naive_lbp_map(img):
    img = np.asarray(img)
    h, w = img.shape
    out = np.zeros((h - 2, w - 2), dtype=np.uint8)
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            code = 0
            for bit, (dy, dx) in enumerate(NEIGHBOURS):
                if img[y + dy, x + dx] >= img[y, x]:
                    code += 2 ** bit
            out[y - 1, x - 1] = code
    return out


# ---------------------------------------------------------------------------
# lbp_code


def test_lbp_code_constant_patch_ties_are_ones():
    assert lbp_code(np.full((3, 3), 5)) == 255


def test_lbp_code_all_neighbours_below_center():
    patch = np.zeros((3, 3))
    patch[1, 1] = 100
    assert lbp_code(patch) == 0


def test_lbp_code_hand_worked_patch():
    # neighbours TL..L read 6,5,2,1,7,8,9,7 against center 6
    patch = [[6, 5, 2], [7, 6, 1], [9, 8, 7]]
    assert lbp_code(patch) == 241
    assert lbp_code(patch) == naive_lbp_map(np.array(patch))[0, 0]


def test_lbp_code_rejects_wrong_shape():
    with pytest.raises(ValueError):
        lbp_code(np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# lbp_map


def test_lbp_map_constant_image():
    out = lbp_map(np.full((3, 3), 17))
    assert out.shape == (1, 1)
    assert out[0, 0] == 255


def test_lbp_map_dimension_arithmetic():
    # width 4, height 3 -> map is 2 wide, 1 tall
    out = lbp_map(np.zeros((3, 4)))
    assert out.shape == (1, 2)


def test_lbp_map_matches_naive_oracle_exactly():
    rng = np.random.default_rng(42)
    img = rng.integers(0, 256, size=(64, 64))
    assert np.array_equal(lbp_map(img), naive_lbp_map(img))


def test_lbp_map_random_sizes_match_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        h = int(rng.integers(3, 20))
        w = int(rng.integers(3, 20))
        img = rng.integers(0, 256, size=(h, w))
        assert np.array_equal(lbp_map(img), naive_lbp_map(img))


def test_lbp_map_offset_invariance():
    rng = np.random.default_rng(2)
    img = rng.integers(0, 200, size=(32, 32))
    assert np.array_equal(lbp_map(img), lbp_map(img + 55))


def test_lbp_map_too_small():
    with pytest.raises(ValueError):
        lbp_map(np.zeros((2, 5)))


# ---------------------------------------------------------------------------
# block_histogram


def test_block_histogram_8x8_grid_2x2():
    rng = np.random.default_rng(3)
    codes = rng.integers(0, 256, size=(8, 8)).astype(np.uint8)
    hist = block_histogram(codes, 2, 2)
    assert hist.shape == (4 * 256,)
    sums = hist.reshape(4, 256).sum(axis=1)
    assert np.array_equal(sums, [16, 16, 16, 16])


def test_block_histogram_constant_map_mass_in_one_bin():
    codes = np.full((6, 9), 255, dtype=np.uint8)
    hist = block_histogram(codes, 3, 3)
    blocks = hist.reshape(9, 256)
    assert np.all(blocks[:, :255] == 0)
    assert blocks[:, 255].sum() == 6 * 9


def test_block_histogram_1x1_grid_is_global_histogram():
    rng = np.random.default_rng(4)
    codes = rng.integers(0, 256, size=(11, 7)).astype(np.uint8)
    hist = block_histogram(codes, 1, 1)
    assert np.array_equal(hist, np.bincount(codes.ravel(), minlength=256))


def test_block_histogram_remainder_goes_to_last_blocks():
    # 7-wide map split into 2 columns -> widths 3 and 4
    codes = np.zeros((4, 7), dtype=np.uint8)
    hist = block_histogram(codes, 2, 2)
    sums = hist.reshape(4, 256).sum(axis=1)
    assert list(sums) == [2 * 3, 2 * 4, 2 * 3, 2 * 4]


def test_block_histogram_row_major_block_order():
    codes = np.zeros((4, 4), dtype=np.uint8)
    codes[0, 2] = 9  # top-right block
    hist = block_histogram(codes, 2, 2)
    blocks = hist.reshape(4, 256)
    assert blocks[1, 9] == 1 and blocks[0, 9] == 0


def test_block_histogram_total_mass_is_pixel_count():
    rng = np.random.default_rng(5)
    for _ in range(5):
        h = int(rng.integers(4, 30))
        w = int(rng.integers(4, 30))
        codes = rng.integers(0, 256, size=(h, w)).astype(np.uint8)
        hist = block_histogram(codes, 3, 3)
        assert hist.sum() == h * w


def test_block_histogram_grid_too_large():
    with pytest.raises(ValueError):
        block_histogram(np.zeros((2, 2), dtype=np.uint8), 3, 1)


def test_normalize_blocks_unit_mass_per_block():
    rng = np.random.default_rng(6)
    codes = rng.integers(0, 256, size=(12, 12)).astype(np.uint8)
    hist = normalize_blocks(block_histogram(codes, 2, 3))
    sums = hist.reshape(6, 256).sum(axis=1)
    assert np.allclose(sums, 1.0)


def test_image_features_length():
    rng = np.random.default_rng(7)
    img = rng.integers(0, 256, size=(48, 48))
    assert image_features(img, 7, 7).shape == (7 * 7 * 256,)


# ---------------------------------------------------------------------------
# PCA


def test_pca_line_y_equals_x():
    pts = np.array([[-2.0, -2.0], [-1.0, -1.0], [1.0, 1.0], [2.0, 2.0]])
    model = pca_fit(pts, k=1)
    expect = np.array([1.0, 1.0]) / np.sqrt(2.0)
    assert (np.allclose(model.components[0], expect, atol=1e-9)
            or np.allclose(model.components[0], -expect, atol=1e-9))
    # eigenvalue oracle: 2x2 covariance with (n-1) normalisation
    cov = np.cov(pts.T)
    eigs = np.sort(np.linalg.eigvalsh(cov))[::-1]
    assert np.allclose(model.variances[0], eigs[0], atol=1e-12)


def _standardized(rng, n):
    v = rng.normal(size=n)
    v -= v.mean()
    return v / v.std(ddof=1)


def test_pca_axis_aligned_variances():
    rng = np.random.default_rng(8)
    n = 40
    x = _standardized(rng, n)
    y = rng.normal(size=n)
    y -= y.mean()
    y -= (y @ x) / (x @ x) * x  # exact zero covariance with x
    y = y / y.std(ddof=1)
    pts = np.stack([2.0 * x, 1.0 * y], axis=1)  # var 4 and 1, cov 0
    model = pca_fit(pts, k=2)
    assert np.allclose(model.variances, [4.0, 1.0], atol=1e-9)
    assert np.allclose(np.abs(model.components[0]), [1.0, 0.0], atol=1e-9)
    # component oracle: eigendecomposition of the sample covariance
    eigs = np.sort(np.linalg.eigvalsh(np.cov(pts.T)))[::-1]
    assert np.allclose(model.variances, eigs, atol=1e-9)


def test_pca_components_orthonormal_and_sorted():
    rng = np.random.default_rng(9)
    samples = rng.normal(size=(50, 12))
    model = pca_fit(samples, k=8)
    gram = model.components @ model.components.T
    assert np.allclose(gram, np.eye(8), atol=1e-9)
    assert np.all(np.diff(model.variances) <= 1e-12)


def test_pca_projecting_the_mean_gives_zero():
    rng = np.random.default_rng(10)
    samples = rng.normal(size=(20, 6))
    model = pca_fit(samples, k=4)
    assert np.allclose(pca_project(model, model.mean), 0.0, atol=1e-9)


def test_pca_project_component_axis():
    rng = np.random.default_rng(11)
    samples = rng.normal(size=(20, 5))
    model = pca_fit(samples, k=3)
    coords = pca_project(model, model.mean + model.components[0])
    assert np.allclose(coords, [1.0, 0.0, 0.0], atol=1e-9)


def test_pca_reconstruction_error_decreases_with_k():
    rng = np.random.default_rng(12)
    samples = rng.normal(size=(30, 10))
    v = rng.normal(size=10)
    errs = []
    for k in (1, 3, 6, 10):
        model = pca_fit(samples, k=k)
        recon = pca_reconstruct(model, pca_project(model, v))
        errs.append(np.linalg.norm(recon - v))
    assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))
    # full rank reconstructs exactly
    assert errs[-1] <= 1e-6


def test_pca_degenerate_identical_samples():
    with pytest.raises(ValueError):
        pca_fit(np.ones((5, 3)), k=1)


def test_pca_k_out_of_range():
    rng = np.random.default_rng(13)
    with pytest.raises(ValueError):
        pca_fit(rng.normal(size=(4, 10)), k=4)  # n-1 == 3


def test_pca_project_dimension_mismatch():
    rng = np.random.default_rng(14)
    model = pca_fit(rng.normal(size=(10, 4)), k=2)
    with pytest.raises(ValueError):
        pca_project(model, np.zeros(5))
