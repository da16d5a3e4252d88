"""Extraction HOG instrumentée sur une pyramide d'images.

Chemin de référence du pipeline matériel:
- gradients par masque [-1 0 1], bords répliqués;
- magnitude L1 |gx| + |gy| (pas de racine carrée);
- orientation non signée (0-180°) par cascade de tests de pente, affectation dure;
- histogrammes entiers par cellule, cellules partielles ignorées;
- normalisation par les énergies L2 des 4 blocs 2x2 voisins, troncature à 0.2.

Les histogrammes et énergies sont entiers: la valeur normalisée est calculée
comme sqrt(h² / E), ce qui rend la sortie invariante par mise à l'échelle de
l'image (h et E entiers exacts, division et racine correctement arrondies).
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import settings
from models.errors import ConfigError, ImageSizeError
from models.hog_models import MAX_FRAC_BITS, CellHistograms, GradientField, GrayImage, HogFeatureMap
from models.workload_models import HogConfig, OpCountReport
from utils.op_counter import OpCounter
from utils.workload import cascade_steps, level_passes, pyramid_level_sizes

logger = logging.getLogger(__name__)

FEATURE_FORMAT = "hog-features/1"

# (dy, dx) du coin haut-gauche des 4 blocs voisins d'une cellule
BLOCK_OFFSETS = ((-1, -1), (-1, 0), (0, -1), (0, 0))

# bits de poids du rééchantillonnage bilinéaire (pas de 1/16)
WEIGHT_BITS = 4


def _counter(counter: Optional[OpCounter]) -> OpCounter:
    return counter if counter is not None else OpCounter()


def orientation_bins(gx: np.ndarray, gy: np.ndarray, magnitude: np.ndarray, num_bins: int,
                     counter: Optional[OpCounter] = None) -> np.ndarray:
    """Secteur d'orientation non signé, par recherche dichotomique sur les pentes.

    Le test theta >= theta_k s'écrit gy*cos(theta_k) - gx*sin(theta_k) >= 0
    une fois le gradient replié dans le demi-plan gy >= 0.
    """
    counter = _counter(counter)
    if num_bins == 1:
        return np.zeros(gx.shape, dtype=np.int64)

    flip = (gy < 0) | ((gy == 0) & (gx < 0))
    fx = np.where(flip, -gx, gx).astype(np.float64)
    fy = np.where(flip, -gy, gy).astype(np.float64)
    counter.add(comparisons=flip.size, additions=fx.size + fy.size)

    angles = np.arange(num_bins) * (np.pi / num_bins)
    cos_t, sin_t = np.cos(angles), np.sin(angles)
    low = np.zeros(gx.shape, dtype=np.int64)
    high = np.full(gx.shape, num_bins, dtype=np.int64)
    for _ in range(cascade_steps(num_bins)):
        mid = (low + high) // 2
        active = (high - low) > 1
        ahead = fy * cos_t[mid] - fx * sin_t[mid] >= 0
        counter.add(multiplications=2 * ahead.size, additions=ahead.size, comparisons=ahead.size)
        low = np.where(active & ahead, mid, low)
        high = np.where(active & ~ahead, mid, high)

    # magnitude nulle -> secteur 0
    bins = np.where(magnitude == 0, 0, low)
    counter.add(comparisons=bins.size)
    return bins


def compute_gradients(image: GrayImage, config: HogConfig = HogConfig(),
                      counter: Optional[OpCounter] = None) -> GradientField:
    counter = _counter(counter)
    if image.height < 3 or image.width < 3:
        raise ImageSizeError(f"image {image.width}x{image.height} smaller than 3x3")
    padded = np.pad(image.samples.astype(np.int64), 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    counter.add(additions=gx.size + gy.size)

    magnitude = np.abs(gx) + np.abs(gy)
    counter.add(comparisons=gx.size + gy.size, additions=magnitude.size)

    bins = orientation_bins(gx, gy, magnitude, config.num_bins, counter)
    return GradientField(gx=gx, gy=gy, magnitude=magnitude, orientation_bin=bins, num_bins=config.num_bins)


def cell_histograms(field: GradientField, config: HogConfig, cell_size: Optional[int] = None,
                    counter: Optional[OpCounter] = None) -> CellHistograms:
    counter = _counter(counter)
    cell = cell_size or config.cell_size
    height, width = field.magnitude.shape
    cells_y, cells_x = height // cell, width // cell
    if cells_y < 1 or cells_x < 1:
        raise ImageSizeError(f"field {width}x{height} smaller than one {cell}x{cell} cell")
    num_bins = field.num_bins

    magnitude = field.magnitude[:cells_y * cell, :cells_x * cell]
    bins = field.orientation_bin[:cells_y * cell, :cells_x * cell]
    votes = (bins[..., None] == np.arange(num_bins)) * magnitude[..., None]
    histograms = votes.reshape(cells_y, cell, cells_x, cell, num_bins).sum(axis=(1, 3))
    counter.add(additions=votes.size)
    return CellHistograms(bins=histograms.astype(np.int64), cell_size=cell)


def _block_gather_index(cells_y: int, cells_x: int) -> Tuple[np.ndarray, np.ndarray]:
    """Indices (cells_y, cells_x, 4 blocs, 4 cellules) des cellules de chaque bloc voisin"""
    ys = np.arange(cells_y)[:, None, None, None]
    xs = np.arange(cells_x)[None, :, None, None]
    dy = np.array([offset[0] for offset in BLOCK_OFFSETS])[None, None, :, None]
    dx = np.array([offset[1] for offset in BLOCK_OFFSETS])[None, None, :, None]
    iy = np.array([0, 0, 1, 1])[None, None, None, :]
    ix = np.array([0, 1, 0, 1])[None, None, None, :]
    block_y = np.clip(ys + dy, 0, cells_y - 2)
    block_x = np.clip(xs + dx, 0, cells_x - 2)
    rows = np.broadcast_to(block_y + iy, (cells_y, cells_x, 4, 4))
    cols = np.broadcast_to(block_x + ix, (cells_y, cells_x, 4, 4))
    return rows, cols


def normalize_blocks(histograms: CellHistograms, config: HogConfig,
                     counter: Optional[OpCounter] = None, level: int = 0, scale: float = 1.0) -> HogFeatureMap:
    """Normalise chaque histogramme par les énergies de ses 4 blocs voisins.

    valeur = min(sqrt(h² / E), truncation), sans epsilon au dénominateur:
    un bloc d'énergie nulle (E == 0) donne 0 pour tous ses secteurs. Une cellule
    seule non nulle dans son bloc vaut donc 1.0 avant troncature, puis truncation.
    """
    counter = _counter(counter)
    cells_y, cells_x, num_bins = histograms.bins.shape
    if cells_y < 2 or cells_x < 2:
        raise ImageSizeError(f"normalisation needs at least 2x2 cells, got {cells_x}x{cells_y}")
    h = histograms.bins.astype(np.int64)

    rows, cols = _block_gather_index(cells_y, cells_x)
    gathered = h[rows, cols]
    energies = np.einsum("yxfcb,yxfcb->yxf", gathered, gathered)
    counter.add(macs=gathered.size)

    blank = energies == 0
    counter.add(comparisons=blank.size)

    squares = h * h
    counter.add(multiplications=squares.size)

    numerators = np.broadcast_to(squares[:, :, None, :], (cells_y, cells_x, 4, num_bins)).astype(np.float64)
    denominators = np.broadcast_to(energies[..., None], numerators.shape).astype(np.float64)
    ratios = np.divide(numerators, denominators, out=np.zeros_like(numerators),
                       where=~np.broadcast_to(blank[..., None], numerators.shape))
    values = np.sqrt(ratios)
    counter.add(divisions=ratios.size + values.size)

    values = np.minimum(values, config.truncation)
    counter.add(comparisons=values.size)

    features = values.reshape(cells_y, cells_x, 4 * num_bins)
    return HogFeatureMap(level=level, scale=scale, cell_size=histograms.cell_size, features=features)


def resample(image: GrayImage, out_h: int, out_w: int, counter: Optional[OpCounter] = None) -> GrayImage:
    """Rééchantillonnage bilinéaire centré, coordonnées bornées, poids en 1/16.

    Calcul entier exact: la sortie gagne 8 bits fractionnaires (2 x 4 bits de
    poids), rien n'est arrondi. Une image k fois plus lumineuse donne donc un
    niveau exactement k fois plus lumineux.
    """
    counter = _counter(counter)
    frac_bits = image.frac_bits + 2 * WEIGHT_BITS
    if frac_bits > MAX_FRAC_BITS:
        raise ConfigError(f"cannot resample an image already carrying {image.frac_bits} fractional bits")
    source = image.samples.astype(np.int64)
    in_h, in_w = source.shape

    ys = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0, in_h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0, in_w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    one = 1 << WEIGHT_BITS
    wy = np.rint((ys - y0) * one).astype(np.int64)[:, None]
    wx = np.rint((xs - x0) * one).astype(np.int64)[None, :]

    a = source[y0][:, x0]
    b = source[y0][:, x1]
    c = source[y1][:, x0]
    d = source[y1][:, x1]
    top = a * one + wx * (b - a)
    bottom = c * one + wx * (d - c)
    values = top * one + wy * (bottom - top)
    samples = np.minimum(values, 255 << frac_bits)
    counter.add(macs=3 * values.size, additions=3 * values.size, comparisons=samples.size)
    return GrayImage(samples=samples, frac_bits=frac_bits)


def build_pyramid(image: GrayImage, config: HogConfig, counter: Optional[OpCounter] = None) -> List[GrayImage]:
    """Niveaux de la pyramide, chacun rééchantillonné depuis l'image d'origine"""
    counter = _counter(counter)
    levels = [image]
    for level_h, level_w in pyramid_level_sizes(image.height, image.width, config)[1:]:
        levels.append(resample(image, level_h, level_w, counter))
    return levels


def _extract_level(level_image: GrayImage, level: int, config: HogConfig) -> Tuple[List[HogFeatureMap], OpCounter]:
    counter = OpCounter()
    scale = config.pyramid_ratio ** level
    maps = []
    for cell_size in level_passes(level, config):
        field = compute_gradients(level_image, config, counter)
        if level_image.height // cell_size < 2 or level_image.width // cell_size < 2:
            continue
        histograms = cell_histograms(field, config, cell_size, counter)
        maps.append(normalize_blocks(histograms, config, counter, level=level, scale=scale))
    return maps, counter


def extract(image: GrayImage, config: HogConfig = HogConfig(),
            workers: Optional[int] = None) -> Tuple[List[HogFeatureMap], OpCountReport]:
    """Pipeline complet, un worker par niveau; compteurs fusionnés dans l'ordre des niveaux"""
    if image.height < 3 or image.width < 3:
        raise ImageSizeError(f"image {image.width}x{image.height} smaller than 3x3")
    pyramid_counter = OpCounter()
    levels = build_pyramid(image, config, pyramid_counter)
    logger.info(f"Extraction HOG {image.width}x{image.height}: {len(levels)} niveaux")

    with ThreadPoolExecutor(max_workers=workers or settings.HOG_WORKERS) as pool:
        results = list(pool.map(lambda args: _extract_level(args[1], args[0], config), enumerate(levels)))

    maps = [feature_map for level_maps, _ in results for feature_map in level_maps]
    total = OpCounter.sum([pyramid_counter] + [counter for _, counter in results])
    return maps, total.report(image.height * image.width)


def features_document(maps: List[HogFeatureMap], config: HogConfig) -> Dict[str, Any]:
    return {
        "format": FEATURE_FORMAT,
        "num_bins": config.num_bins,
        "truncation": config.truncation,
        "maps": [
            {
                "level": feature_map.level,
                "scale": feature_map.scale,
                "cell_size": feature_map.cell_size,
                "cells_y": feature_map.cells_y,
                "cells_x": feature_map.cells_x,
                "features": feature_map.features.reshape(-1, feature_map.features.shape[-1]).tolist(),
            }
            for feature_map in maps
        ],
    }


def dump_features(maps: List[HogFeatureMap], config: HogConfig) -> str:
    """Document texte déterministe (clés triées, flottants en repr le plus court)"""
    return json.dumps(features_document(maps, config), sort_keys=True, separators=(",", ":")) + "\n"


def load_features(text: str) -> List[HogFeatureMap]:
    document = json.loads(text)
    maps = []
    for entry in document["maps"]:
        features = np.array(entry["features"], dtype=np.float64).reshape(entry["cells_y"], entry["cells_x"], -1)
        maps.append(HogFeatureMap(level=entry["level"], scale=entry["scale"],
                                  cell_size=entry["cell_size"], features=features))
    return maps
