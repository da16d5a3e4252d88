import math

import numpy as np
import pytest
from pydantic import ValidationError

from models.errors import ConfigError, ImageFormatError, ImageSizeError
from models.hog_models import CellHistograms, GrayImage
from models.workload_models import HogConfig
from utils.hog import (
    build_pyramid,
    cell_histograms,
    compute_gradients,
    dump_features,
    extract,
    load_features,
    normalize_blocks,
    resample,
)
from utils.op_counter import OpCounter
from utils.pgm import encode_pgm, parse_pgm, read_pgm, write_pgm
from utils.workload import hog_gop_per_mpixel, pyramid_level_sizes

GOLDEN = "scene64_features.json"


def naive_bin(gx: int, gy: int, num_bins: int) -> int:
    if gx == 0 and gy == 0:
        return 0
    angle = math.degrees(math.atan2(gy, gx)) % 180.0
    return min(int(angle // (180.0 / num_bins)), num_bins - 1)


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

def test_constant_image_has_no_gradient():
    field = compute_gradients(GrayImage(samples=np.full((8, 8), 77, dtype=np.uint8)))
    assert not field.magnitude.any()
    assert not field.orientation_bin.any()


def test_horizontal_ramp():
    samples = np.tile(np.arange(8, dtype=np.uint8) * 10, (8, 1))
    field = compute_gradients(GrayImage(samples=samples))
    assert (field.gx[:, 1:-1] == 20).all()
    # bords répliqués
    assert (field.gx[:, 0] == 10).all() and (field.gx[:, -1] == 10).all()
    assert not field.gy.any()
    assert (field.magnitude == np.abs(field.gx)).all()
    assert not field.orientation_bin.any()


def test_vertical_ramp_lands_in_middle_bin():
    samples = np.tile((np.arange(8, dtype=np.uint8) * 10)[:, None], (1, 8))
    field = compute_gradients(GrayImage(samples=samples))
    assert (field.orientation_bin == 4).all()


def test_orientation_matches_naive_oracle(make_image):
    config = HogConfig()
    field = compute_gradients(make_image(7, 7), config)
    expected = np.array([[naive_bin(int(gx), int(gy), config.num_bins)
                          for gx, gy in zip(row_x, row_y)]
                         for row_x, row_y in zip(field.gx, field.gy)])
    assert np.array_equal(field.orientation_bin, expected)
    assert np.array_equal(field.magnitude, np.abs(field.gx) + np.abs(field.gy))


def test_gradients_reject_tiny_image():
    with pytest.raises(ImageSizeError):
        compute_gradients(GrayImage(samples=np.zeros((2, 5), dtype=np.uint8)))


# ---------------------------------------------------------------------------
# Histogrammes et normalisation
# ---------------------------------------------------------------------------

def test_histogram_mass_conservation(make_image):
    config = HogConfig()
    field = compute_gradients(make_image(20, 27), config)
    histograms = cell_histograms(field, config)
    assert (histograms.cells_y, histograms.cells_x) == (2, 3)
    covered = field.magnitude[:16, :24].reshape(2, 8, 3, 8).sum(axis=(1, 3))
    assert np.array_equal(histograms.bins.sum(axis=2), covered)


def test_histogram_mass_conservation_on_random_images(rng, make_image):
    config = HogConfig()
    for _ in range(100):
        height, width = (int(v) for v in rng.integers(8, 65, size=2))
        field = compute_gradients(make_image(height, width), config)
        histograms = cell_histograms(field, config)
        cy, cx = histograms.cells_y, histograms.cells_x
        covered = field.magnitude[:cy * 8, :cx * 8].reshape(cy, 8, cx, 8).sum(axis=(1, 3))
        assert np.array_equal(histograms.bins.sum(axis=2), covered)


def test_histogram_needs_one_cell(make_image):
    config = HogConfig()
    field = compute_gradients(make_image(7, 12), config)
    with pytest.raises(ImageSizeError):
        cell_histograms(field, config)


def test_single_nonzero_cell_is_truncated():
    bins = np.zeros((3, 3, 9), dtype=np.int64)
    bins[1, 1, 2] = 50
    feature_map = normalize_blocks(CellHistograms(bins=bins, cell_size=8), HogConfig())
    assert feature_map.features.shape == (3, 3, 36)
    assert np.allclose(feature_map.features[1, 1, [2, 11, 20, 29]], 0.2)
    assert feature_map.features.sum() == pytest.approx(0.8)


def test_lone_cell_is_exactly_one_before_truncation():
    bins = np.zeros((3, 3, 9), dtype=np.int64)
    bins[1, 1, 2] = 50
    feature_map = normalize_blocks(CellHistograms(bins=bins, cell_size=8), HogConfig(truncation=1.0))
    # pas d'epsilon: sqrt(50² / 50²) vaut exactement 1
    assert (feature_map.features[1, 1, [2, 11, 20, 29]] == 1.0).all()
    assert feature_map.features.sum() == 4.0


def test_blank_blocks_give_zero_features():
    bins = np.zeros((2, 2, 9), dtype=np.int64)
    feature_map = normalize_blocks(CellHistograms(bins=bins, cell_size=8), HogConfig())
    assert not feature_map.features.any()


def test_features_are_bounded_by_truncation(scene_image):
    maps, _ = extract(scene_image, HogConfig(truncation=0.3))
    for feature_map in maps:
        assert feature_map.features.min() >= 0
        assert feature_map.features.max() <= 0.3


def test_normalization_needs_two_by_two_cells():
    bins = np.ones((1, 5, 9), dtype=np.int64)
    with pytest.raises(ImageSizeError):
        normalize_blocks(CellHistograms(bins=bins, cell_size=8), HogConfig())


def test_counts_follow_processed_arrays(make_image):
    config = HogConfig()
    counter = OpCounter()
    field = compute_gradients(make_image(5, 7), config, counter)
    pixels = 35
    # 4 étapes de cascade pour 9 secteurs
    assert counter.multiplications == 2 * 4 * pixels
    assert counter.additions == 2 * pixels + pixels + 2 * pixels + 4 * pixels
    assert counter.comparisons == 2 * pixels + pixels + 4 * pixels + pixels

    histograms = OpCounter()
    cell_histograms(field, config, 2, histograms)
    assert histograms.additions == 4 * 6 * 9


def test_normalization_counts():
    counter = OpCounter()
    bins = np.arange(4 * 4 * 9, dtype=np.int64).reshape(4, 4, 9)
    normalize_blocks(CellHistograms(bins=bins, cell_size=8), HogConfig(), counter)
    cells = 16
    assert counter.macs == 16 * 9 * cells
    assert counter.multiplications == 9 * cells
    assert counter.divisions == 8 * 9 * cells
    assert counter.comparisons == 4 * cells + 4 * 9 * cells


# ---------------------------------------------------------------------------
# Pyramide
# ---------------------------------------------------------------------------

def test_pyramid_levels_follow_sizes(scene_image):
    config = HogConfig()
    levels = build_pyramid(scene_image, config)
    sizes = pyramid_level_sizes(64, 64, config)
    assert [(level.height, level.width) for level in levels] == sizes
    assert levels[0] is scene_image
    assert all(level.frac_bits == 8 for level in levels[1:])


def test_pyramid_counts_every_resampled_pixel(scene_image):
    config = HogConfig()
    counter = OpCounter()
    build_pyramid(scene_image, config, counter)
    resampled = sum(h * w for h, w in pyramid_level_sizes(64, 64, config)[1:])
    assert (counter.macs, counter.additions, counter.comparisons) == (3 * resampled, 3 * resampled, resampled)


def test_resample_keeps_constant_image():
    image = GrayImage(samples=np.full((30, 40), 200, dtype=np.uint8))
    smaller = resample(image, 17, 23)
    assert smaller.samples.shape == (17, 23)
    assert smaller.frac_bits == 8
    assert (smaller.samples == 200 << 8).all()


@pytest.mark.parametrize("k", [2, 3])
def test_resample_is_exact_under_scaling(make_image, k):
    dark = make_image(31, 45, high=86)
    bright = GrayImage(samples=dark.samples.astype(np.int64) * k)
    assert np.array_equal(resample(bright, 19, 27).samples, k * resample(dark, 19, 27).samples)


def test_resample_refuses_fractional_input(make_image):
    once = resample(make_image(20, 20), 12, 12)
    with pytest.raises(ConfigError):
        resample(once, 8, 8)


def test_fractional_image_range():
    GrayImage(samples=np.full((3, 3), 255 << 8), frac_bits=8)
    with pytest.raises(ValidationError):
        GrayImage(samples=np.full((3, 3), (255 << 8) + 1), frac_bits=8)
    with pytest.raises(ValidationError):
        GrayImage(samples=np.zeros((3, 3), dtype=np.int64), frac_bits=9)


# ---------------------------------------------------------------------------
# Extraction complète
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("size", [(3, 3), (17, 23), (40, 40), (64, 64)])
def test_instrumented_counts_match_analytical(make_image, size):
    config = HogConfig()
    _, report = extract(make_image(*size), config)
    assert report == hog_gop_per_mpixel(config, size)


def test_three_by_three_image_has_no_features(make_image):
    maps, report = extract(make_image(3, 3), HogConfig())
    assert maps == []
    # gradients et orientations des deux passes, aucune cellule complète
    assert report.total_ops == 450


def test_small_image_rejected():
    with pytest.raises(ImageSizeError):
        extract(GrayImage(samples=np.zeros((2, 2), dtype=np.uint8)))


def test_single_level_map_count(scene_image):
    maps, _ = extract(scene_image, HogConfig(levels=1))
    assert [(m.level, m.cell_size, m.cells_y, m.cells_x) for m in maps] == [(0, 8, 8, 8), (0, 4, 16, 16)]


def test_extraction_is_deterministic_across_workers(scene_image):
    config = HogConfig()
    first, first_report = extract(scene_image, config, workers=1)
    second, second_report = extract(scene_image, config, workers=4)
    assert first_report == second_report
    assert dump_features(first, config) == dump_features(second, config)


@pytest.mark.parametrize("k", [2, 3])
def test_illumination_invariance(make_image, k):
    config = HogConfig()
    dark = make_image(40, 48, high=86)
    reference, _ = extract(dark, config)
    scaled, _ = extract(GrayImage(samples=dark.samples.astype(np.int64) * k), config)
    assert max(m.level for m in reference) == len(pyramid_level_sizes(40, 48, config)) - 1
    assert len(scaled) == len(reference)
    for a, b in zip(scaled, reference):
        assert np.array_equal(a.features, b.features)


def test_feature_document_round_trip(scene_image):
    config = HogConfig()
    maps, _ = extract(scene_image, config)
    text = dump_features(maps, config)
    loaded = load_features(text)
    assert len(loaded) == len(maps)
    for a, b in zip(loaded, maps):
        assert (a.level, a.cell_size) == (b.level, b.cell_size)
        assert np.array_equal(a.features, b.features)
    assert dump_features(loaded, config) == text


def test_golden_features(scene_image, fixture_dir, hog_config):
    maps, _ = extract(scene_image, hog_config)
    golden = fixture_dir / GOLDEN
    assert golden.exists(), f"missing fixture {golden.name}"
    assert dump_features(maps, hog_config) == golden.read_text(encoding="utf-8")


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

def test_read_fixture(scene_image):
    assert (scene_image.width, scene_image.height) == (64, 64)


def test_pgm_comments_are_skipped():
    data = b"P5\n# commentaire\n3 2\n# autre\n255\n" + bytes(range(6))
    image = parse_pgm(data)
    assert image.samples.tolist() == [[0, 1, 2], [3, 4, 5]]


def test_pgm_write_then_read(tmp_path, make_image):
    image = make_image(5, 9)
    path = tmp_path / "out.pgm"
    write_pgm(path, image)
    assert np.array_equal(read_pgm(path).samples, image.samples)


@pytest.mark.parametrize("data", [
    b"P2\n2 2\n255\n0 0 0 0",
    b"P5\n2 2\n65535\n" + bytes(8),
    b"P5\n2 2\n255\n" + bytes(3),
    b"P5\n2\n",
    b"P5\n0 2\n255\n",
    b"P5\nx 2\n255\n" + bytes(4),
])
def test_pgm_rejects_malformed(data):
    with pytest.raises(ImageFormatError):
        parse_pgm(data)


def test_encode_pgm_rejects_fractional_image(make_image):
    with pytest.raises(ImageFormatError):
        encode_pgm(resample(make_image(10, 10), 6, 6))


def test_encode_pgm_header(make_image):
    data = encode_pgm(make_image(2, 3))
    assert data.startswith(b"P5\n3 2\n255\n")
    assert len(data) == len(b"P5\n3 2\n255\n") + 6
