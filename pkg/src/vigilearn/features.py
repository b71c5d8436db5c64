"""Block LBP texture features and PCA dimensionality reduction.

Images are 2-D numpy arrays (rows = y, columns = x) with intensities in
[0, 255].  The 8-bit local binary pattern code of a pixel compares each of
its 8 neighbours against the centre value; neighbours are ordered clockwise
starting at the top-left corner, and neighbour i contributes 2**i when its
intensity is >= the centre (ties count as 1).  Histograms of the codes over
a block grid give a descriptor that captures local texture and its spatial
layout at the same time.
"""

from dataclasses import dataclass

import numpy as np

# (row, col) offsets clockwise from top-left; list index == bit position.
NEIGHBOUR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1),
)

LBP_BINS = 256


def _as_image(img):
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {a.shape}")
    return a


def lbp_code(patch) -> int:
    """8-bit LBP code of a single 3x3 neighbourhood."""
    p = np.asarray(patch)
    if p.shape != (3, 3):
        raise ValueError(f"patch must be 3x3, got {p.shape}")
    center = p[1, 1]
    code = 0
    for bit, (dr, dc) in enumerate(NEIGHBOUR_OFFSETS):
        if p[1 + dr, 1 + dc] >= center:
            code |= 1 << bit
    return code


def lbp_map(img) -> np.ndarray:
    """LBP codes for every interior pixel of ``img``.

    The output is a uint8 array of shape (height-2, width-2); border pixels
    have no full 3x3 neighbourhood and are excluded.
    """
    a = _as_image(img)
    h, w = a.shape
    if h < 3 or w < 3:
        raise ValueError(f"image too small for LBP: {w}x{h}, need at least 3x3")
    center = a[1:h - 1, 1:w - 1]
    codes = np.zeros(center.shape, dtype=np.uint16)
    for bit, (dr, dc) in enumerate(NEIGHBOUR_OFFSETS):
        nb = a[1 + dr:h - 1 + dr, 1 + dc:w - 1 + dc]
        codes |= (nb >= center).astype(np.uint16) << bit
    return codes.astype(np.uint8)


def _block_bounds(size, blocks):
    # Integer division; the last block absorbs the remainder so no pixel
    # is ever discarded.
    base = size // blocks
    bounds = [i * base for i in range(blocks)]
    bounds.append(size)
    return bounds


def block_histogram(codes, grid_rows: int, grid_cols: int) -> np.ndarray:
    """Concatenated per-block 256-bin count histograms of an LBP code map.

    Blocks are scanned row-major; the descriptor has length
    grid_rows * grid_cols * 256 and each block's bins sum to the number of
    pixels in that block.  Counts are returned raw; see
    :func:`normalize_blocks` for the L1-normalised variant fed to
    classifiers.
    """
    m = _as_image(codes)
    h, w = m.shape
    if grid_rows < 1 or grid_cols < 1:
        raise ValueError("grid must be at least 1x1")
    if grid_rows > h or grid_cols > w:
        raise ValueError(
            f"grid {grid_rows}x{grid_cols} larger than map dimensions {h}x{w}"
        )
    rb = _block_bounds(h, grid_rows)
    cb = _block_bounds(w, grid_cols)
    hists = []
    for r in range(grid_rows):
        for c in range(grid_cols):
            block = m[rb[r]:rb[r + 1], cb[c]:cb[c + 1]]
            hists.append(np.bincount(block.ravel().astype(np.int64),
                                     minlength=LBP_BINS).astype(np.float64))
    return np.concatenate(hists)


def normalize_blocks(hist, bins_per_block: int = LBP_BINS) -> np.ndarray:
    """L1-normalise each block of a concatenated block histogram.

    Makes descriptors comparable across crop sizes.  Blocks with zero mass
    are left at zero.
    """
    v = np.asarray(hist, dtype=np.float64)
    if v.ndim != 1 or v.size % bins_per_block != 0:
        raise ValueError("histogram length must be a multiple of bins_per_block")
    blocks = v.reshape(-1, bins_per_block).copy()
    sums = blocks.sum(axis=1, keepdims=True)
    np.divide(blocks, sums, out=blocks, where=sums > 0)
    return blocks.ravel()


def image_features(img, grid_rows: int, grid_cols: int) -> np.ndarray:
    """LBP map -> block histogram -> per-block L1 normalisation."""
    return normalize_blocks(block_histogram(lbp_map(img), grid_rows, grid_cols))


@dataclass(frozen=True)
class PcaModel:
    """Linear projection onto the top-k principal directions.

    components has shape (k, dim) with orthonormal rows ordered by
    non-increasing variance; variances use the (n-1) normalisation.
    """

    mean: np.ndarray
    components: np.ndarray
    variances: np.ndarray
    k: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def pca_fit(samples, k: int) -> PcaModel:
    """Fit a PCA model to a list of feature vectors.

    Uses the SVD of the centred sample matrix; component signs are fixed so
    the entry of largest magnitude in each component is positive.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-D array-like (n_samples, dim)")
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least 2 samples to fit PCA")
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} out of range [1, {min(n - 1, d)}]")
    mean = x.mean(axis=0)
    centred = x - mean
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    variances = (s ** 2) / (n - 1)
    if variances[0] <= 1e-24:
        raise ValueError("degenerate input: all samples identical")
    components = vt[:k].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=components,
                    variances=variances[:k].copy(), k=k)


def pca_project(model: PcaModel, v) -> np.ndarray:
    """Coordinates of ``v`` in the model's component basis."""
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (model.dim,):
        raise ValueError(f"dimension mismatch: vector {a.shape}, model dim {model.dim}")
    return model.components @ (a - model.mean)


def pca_reconstruct(model: PcaModel, coords) -> np.ndarray:
    """Back-projection of reduced coordinates into feature space."""
    c = np.asarray(coords, dtype=np.float64)
    if c.shape != (model.k,):
        raise ValueError(f"dimension mismatch: coords {c.shape}, model k {model.k}")
    return model.mean + c @ model.components
