import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from sdae.dataset import CorruptionSpec, ImageDataset
from sdae.evalx import (
    accuracy,
    export_encoded,
    export_filters,
    export_reconstructions,
    filter_grid,
    format_sparse,
    grid_shape,
    normalize_tile,
    parse_sparse,
    reconstruction_grid,
    softmax_regression_eval,
    tile_grid,
)
from sdae.linalg import DimensionError
from sdae.network import DenseTiedLayer, StackedAutoencoder, encode_all, init_layer
from sdae.pgm import PgmError, decode_pgm, encode_pgm, read_pgm
from sdae.sgd import SgdConfig, classify, fine_tune


def parse_sparse_text(text, dim):
    # hypothesis examples cannot share the function-scoped tmp_path fixture
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "f.txt"
        p.write_text(text)
        return parse_sparse(p, dim)


def zero_layer(m=784, n=10):
    return DenseTiedLayer(np.zeros((n, m)), np.zeros(n), np.zeros(m))


class TestPgm:
    def test_pillow_reads_our_bytes(self, tmp_path, rng):
        img = rng.integers(0, 256, (7, 13), dtype=np.uint8)
        (tmp_path / "a.pgm").write_bytes(encode_pgm(img))
        with Image.open(tmp_path / "a.pgm") as im:
            assert im.size == (13, 7)
            assert np.array_equal(np.asarray(im), img)

    def test_we_read_pillow_bytes(self, tmp_path, rng):
        img = rng.integers(0, 256, (5, 9), dtype=np.uint8)
        Image.fromarray(img).save(tmp_path / "b.pgm")
        back, maxval = read_pgm(tmp_path / "b.pgm")
        assert maxval == 255 and np.array_equal(back, img)

    def test_comments_and_wide_maxval(self):
        raw = b"P5\n# made by hand\n2 1\n# max\n1000\n" + np.array([3, 999], dtype=">u2").tobytes()
        assert decode_pgm(raw).tolist() == [[3, 999]]

    def test_rejects(self):
        with pytest.raises(PgmError):
            decode_pgm(b"P2\n1 1\n255\n\x00")
        with pytest.raises(PgmError):
            decode_pgm(b"P5\n2 2\n255\n\x00")
        with pytest.raises(PgmError):
            encode_pgm(np.zeros((2, 2)))


class TestGrid:
    def test_shape_formula(self):
        assert grid_shape(10, 10, 28, 28) == (291, 291)
        assert grid_shape(1, 1, 1, 1) == (3, 3)

    def test_separators_black(self):
        out = tile_grid([np.full(4, 200, np.uint8)] * 3, 2, 2, cols=2)
        assert out.shape == (7, 7)
        assert (out[0] == 0).all() and (out[:, 3] == 0).all()
        assert (out[1:3, 1:3] == 200).all() and (out[4:6, 4:6] == 0).all()

    def test_too_many_tiles(self):
        with pytest.raises(ValueError):
            tile_grid([np.zeros(1, np.uint8)] * 5, 1, 1, cols=2, rows=2)


class TestFilters:
    def test_hundred_filters(self, tmp_path, rng):
        layer = init_layer(784, 500, rng)
        export_filters(layer, 100, tmp_path / "f.pgm")
        with Image.open(tmp_path / "f.pgm") as im:
            assert im.size == (291, 291)
            pix = np.asarray(im)
        tile = pix[1:29, 1:29]
        assert np.array_equal(tile, normalize_tile(layer.W[0]).reshape(28, 28))
        assert tile.min() == 0 and tile.max() == 255
        assert np.array_equal(pix, filter_grid(layer, 100))

    def test_constant_row_is_mid_grey(self):
        assert (normalize_tile(np.full(9, -0.3)) == 128).all()
        assert (filter_grid(zero_layer(9, 2), 1)[1:4, 1:4] == 128).all()

    def test_affine_invariance(self, rng):
        for _ in range(20):
            row = rng.standard_normal(784)
            assert np.array_equal(normalize_tile(row), normalize_tile(3 * row + 7))

    def test_shapes(self):
        with pytest.raises(DimensionError):
            filter_grid(zero_layer(10, 3), 2)
        assert filter_grid(zero_layer(10, 3), 3, width=5, height=2).shape == grid_shape(2, 2, 2, 5)
        with pytest.raises(ValueError):
            filter_grid(zero_layer(9, 3), 4)


class TestReconstructions:
    def test_no_corruption_rows_match(self, mnist, rng):
        layer = init_layer(784, 20, rng)
        grid = reconstruction_grid(layer, mnist.images[:4], CorruptionSpec(0.0), rng, cols=4)
        assert grid.shape == grid_shape(3, 4, 28, 28)
        assert np.array_equal(grid[1:29], grid[30:58])
        assert not np.array_equal(grid[1:29], grid[59:87])

    def test_blocks_and_file(self, mnist, rng, tmp_path):
        stack = StackedAutoencoder([init_layer(784, 30, rng), init_layer(30, 10, rng)])
        export_reconstructions(stack, mnist.images[:12], CorruptionSpec(0.5), tmp_path / "r.pgm")
        img, _ = read_pgm(tmp_path / "r.pgm")
        # 12 examples at 10 per block -> 2 blocks of 3 rows
        assert img.shape == grid_shape(6, 10, 28, 28)

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            reconstruction_grid(init_layer(16, 4, rng), rng.random((2, 9)), CorruptionSpec(0.0), rng)


class TestFeatures:
    def test_zero_layer_gives_halves(self, tmp_path):
        ds = ImageDataset(np.zeros((3, 4)), [1, 2, 3], 2, 2)
        export_encoded(StackedAutoencoder([zero_layer(4, 3)]), ds, tmp_path / "f.txt")
        assert (tmp_path / "f.txt").read_text() == "1 1:0.5 2:0.5 3:0.5\n2 1:0.5 2:0.5 3:0.5\n3 1:0.5 2:0.5 3:0.5\n"

    def test_sparse_drops_small(self):
        text = format_sparse(np.array([[0.0, 5e-7, 0.25, -2e-6, 6e-7]]), np.array([7]))
        assert text == "7 3:0.25 4:-2e-06 5:6e-07\n"

    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=20))
    def test_six_digit_round_trip(self, values):
        row = np.array([values])
        X, y = parse_sparse_text(format_sparse(row, np.array([4])), len(values))
        keep = np.abs(row) > 5e-7
        assert y.tolist() == [4]
        assert np.all(np.abs(X[keep] - row[keep]) <= 5e-6 * np.abs(row[keep]) + 1e-300)
        assert np.all(X[~keep] == 0)

    def test_file_round_trip_and_classifier(self, mnist, rng, tmp_path):
        train, test = mnist.subset(0, 300), mnist.subset(300, 400)
        stack = StackedAutoencoder([init_layer(784, 50, rng)])
        export_encoded(stack, train, tmp_path / "tr.txt")
        export_encoded(stack, test, tmp_path / "te.txt")
        assert len((tmp_path / "tr.txt").read_text().splitlines()) == len(train)
        Xtr, ytr = parse_sparse(tmp_path / "tr.txt", 50)
        Xte, yte = parse_sparse(tmp_path / "te.txt", 50)
        Ftr, Fte = encode_all(stack, train.images), encode_all(stack, test.images)
        # sigmoid features lie in (0,1), so 6 significant digits leave at most 5e-7 error
        assert np.abs(Xtr - Ftr).max() <= 5e-7 and np.array_equal(ytr, train.labels)
        a = softmax_regression_eval(Ftr, train.labels, Fte, test.labels, epochs=5)
        b = softmax_regression_eval(Xtr, ytr, Xte, yte, epochs=5)
        assert abs(a - b) <= 0.001

    def test_needs_layers(self, mnist, tmp_path):
        with pytest.raises(ValueError):
            export_encoded(StackedAutoencoder(), mnist.subset(0, 2), tmp_path / "x")


class TestSoftmaxRegression:
    def test_memorizes_one_example(self, rng):
        x = rng.random((1, 8))
        assert softmax_regression_eval(x, [6], x, [6], epochs=50, eta=0.1) == 1.0

    def test_separable_pair(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0]] * 10)
        y = np.array([2, 5] * 10)
        assert softmax_regression_eval(X, y, X[:2], y[:2], epochs=20, eta=0.5) == 1.0

    def test_errors(self):
        with pytest.raises(ValueError):
            softmax_regression_eval(np.zeros((0, 3)), [], np.zeros((1, 3)), [0])
        with pytest.raises(DimensionError):
            softmax_regression_eval(np.zeros((1, 3)), [0], np.zeros((1, 4)), [0])


class TestAccuracy:
    def test_untrained_is_chance(self, mnist):
        stack = StackedAutoencoder([init_layer(784, 40, np.random.default_rng(0))])
        fine_tune(stack, mnist.subset(0, 1), [10], SgdConfig(0.0, 1))
        assert abs(accuracy(stack, mnist.subset(0, 1000)) - 0.1) <= 0.03

    def test_memorizer_and_loop_oracle(self, mnist):
        small = mnist.subset(0, 20)
        stack = StackedAutoencoder()
        fine_tune(stack, small, [10], SgdConfig(0.5, 60, seed=0))
        assert accuracy(stack, small) == 1.0
        other = mnist.subset(20, 220)
        hits = 0
        for x, label in zip(other.images, other.labels):
            hits += classify(stack, x) == label
        assert accuracy(stack, other) == hits / len(other)

    def test_missing_head(self, mnist):
        with pytest.raises(ValueError):
            accuracy(StackedAutoencoder([zero_layer()]), mnist.subset(0, 3))
