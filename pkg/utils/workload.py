"""Descripteurs de charge (CNN et HOG) et décompte analytique des opérations.

Le modèle HOG compte chaque évènement arithmétique exécuté par utils.hog:

    par pixel et par passe
        gradient        2 additions (une différence par axe)
        magnitude L1    2 comparaisons (valeurs absolues) + 1 addition
        orientation     (si num_bins > 1) repli: 1 comparaison + 2 additions,
                        test de magnitude nulle: 1 comparaison,
                        cascade de S = ceil(log2 num_bins) tests de pente,
                        chacun 2 multiplications + 1 addition + 1 comparaison
        vote            num_bins additions par pixel d'une cellule complète
    par cellule (grille >= 2x2)
        énergies de bloc  4 blocs x 4 cellules x num_bins MACs
        garde bloc vide   4 comparaisons
        carrés            num_bins multiplications
        normalisation     4 x num_bins divisions + 4 x num_bins racines (comptées en divisions)
        troncature        4 x num_bins comparaisons
    par pixel de sortie d'un niveau k >= 1
        rééchantillonnage bilinéaire 3 MACs + 3 additions + 1 comparaison

La première octave est aussi traitée avec des cellules deux fois plus petites
(fine_octave), comme dans la pyramide de caractéristiques des détecteurs DPM.
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import ValidationError

from config import settings
from models.errors import ConfigError, ShapeError
from models.workload_models import (
    CnnArchitecture,
    ConvLayerShape,
    HogConfig,
    LayerTrace,
    OpCountReport,
    PoolLayerShape,
    ShapeTrace,
)
from utils.op_counter import OpCounter

logger = logging.getLogger(__name__)

BUILTIN_NAMES = ("alexnet", "vgg16", "hog")

Descriptor = Union[CnnArchitecture, HogConfig]

# coûts par pixel de sortie d'un niveau rééchantillonné
RESAMPLE_MACS = 3
RESAMPLE_ADDITIONS = 3
RESAMPLE_COMPARISONS = 1

NOMINAL_PIXELS = 1_000_000


# ---------------------------------------------------------------------------
# Chargement des descripteurs
# ---------------------------------------------------------------------------

def _read_document(source: Union[str, Path, Dict[str, Any]]) -> Dict[str, Any]:
    if isinstance(source, dict):
        return source
    path = Path(source)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})")


def _layer_name_at(raw_layers: List[Any], index: int) -> str:
    if 0 <= index < len(raw_layers) and isinstance(raw_layers[index], dict):
        return str(raw_layers[index].get("name", f"#{index}"))
    return f"#{index}"


def parse_architecture(document: Dict[str, Any]) -> CnnArchitecture:
    """Construit un CnnArchitecture à partir du document JSON {name, input, value_bits, layers}"""
    raw_input = document.get("input") or {}
    raw_layers = document.get("layers") or []
    if not isinstance(raw_layers, list):
        raise ConfigError("'layers' must be a list")

    layers = []
    for index, raw in enumerate(raw_layers):
        name = _layer_name_at(raw_layers, index)
        if not isinstance(raw, dict):
            raise ShapeError(name, "layer entry must be an object")
        kind = raw.get("kind")
        try:
            if kind == "conv":
                layers.append(ConvLayerShape(**raw))
            elif kind == "pool":
                layers.append(PoolLayerShape(**raw))
            else:
                raise ShapeError(name, f"unknown layer kind {kind!r}")
        except ValidationError as e:
            raise ShapeError(name, "; ".join(err["msg"] for err in e.errors()))

    try:
        return CnnArchitecture(
            name=document.get("name", "unnamed"),
            input_height=raw_input.get("h"),
            input_width=raw_input.get("w"),
            input_channels=raw_input.get("c"),
            value_bits=document.get("value_bits", 16),
            layers=layers,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid architecture descriptor: {e}")


def load_architecture(source: Union[str, Path, Dict[str, Any]]) -> CnnArchitecture:
    arch = parse_architecture(_read_document(source))
    validate_architecture(arch)
    return arch


def load_hog_config(source: Union[str, Path, Dict[str, Any]]) -> HogConfig:
    document = _read_document(source)
    try:
        return HogConfig(**document)
    except ValidationError as e:
        raise ConfigError(f"invalid HOG config: {e}")


def workload_path(name: str) -> Path:
    return settings.data_path / "workloads" / f"{name}.json"


def builtin_workloads() -> List[Tuple[str, Descriptor]]:
    """Descripteurs embarqués (fichiers de données, jamais codés en dur)"""
    workloads: List[Tuple[str, Descriptor]] = []
    for name in BUILTIN_NAMES:
        path = workload_path(name)
        if name == "hog":
            workloads.append((name, load_hog_config(path)))
        else:
            workloads.append((name, load_architecture(path)))
    return workloads


def get_workload(name_or_path: str) -> Descriptor:
    """Nom embarqué ("alexnet", "vgg16", "hog") ou chemin d'un descripteur"""
    if name_or_path in BUILTIN_NAMES:
        path = workload_path(name_or_path)
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise ConfigError(f"unknown workload '{name_or_path}'")
    document = _read_document(path)
    if "layers" in document:
        return load_architecture(document)
    return load_hog_config(document)


def get_architecture(name_or_path: str) -> CnnArchitecture:
    descriptor = get_workload(name_or_path)
    if not isinstance(descriptor, CnnArchitecture):
        raise ConfigError(f"'{name_or_path}' is not a CNN architecture")
    return descriptor


# ---------------------------------------------------------------------------
# CNN
# ---------------------------------------------------------------------------

def conv_layer_macs(layer: ConvLayerShape, input_h: int, input_w: int) -> int:
    out_h, out_w = layer.output_size(input_h, input_w)
    return (layer.out_channels * out_h * out_w
            * (layer.in_channels // layer.groups) * layer.kernel_h * layer.kernel_w)


def validate_architecture(arch: CnnArchitecture) -> ShapeTrace:
    """Propage (H, W, C) couche par couche, lève ShapeError à la première violation"""
    height, width, channels = arch.input_height, arch.input_width, arch.input_channels
    trace: List[LayerTrace] = []
    for index, layer in enumerate(arch.layers):
        if isinstance(layer, ConvLayerShape):
            if layer.in_channels != channels:
                raise ShapeError(layer.name, f"expects {layer.in_channels} input channels, got {channels}")
            height, width = layer.output_size(height, width)
            channels = layer.out_channels
        else:
            height, width = layer.output_size(height, width)
        if height < 1 or width < 1:
            raise ShapeError(layer.name, f"spatial dimensions vanish ({height}x{width})")
        trace.append(LayerTrace(index=index, name=layer.name, kind=layer.kind,
                                height=height, width=width, channels=channels))
    return ShapeTrace(architecture=arch.name, input_height=arch.input_height,
                      input_width=arch.input_width, input_channels=arch.input_channels,
                      layers=trace)


def layer_counters(arch: CnnArchitecture, upto_layer: Optional[int] = None) -> List[Tuple[str, OpCounter]]:
    """Compteurs analytiques par couche (conv + ReLU, ou pooling) jusqu'à la conv n° upto_layer"""
    height, width = arch.input_height, arch.input_width
    channels = arch.input_channels
    conv_limit = len(arch.conv_layers) if upto_layer is None else upto_layer
    seen_convs = 0
    counters: List[Tuple[str, OpCounter]] = []
    for layer in arch.layers:
        if seen_convs >= conv_limit:
            break
        counter = OpCounter()
        if isinstance(layer, ConvLayerShape):
            counter.add(macs=conv_layer_macs(layer, height, width))
            height, width = layer.output_size(height, width)
            outputs = layer.out_channels * height * width
            # biais + ReLU
            counter.add(excluded=2 * outputs)
            seen_convs += 1
            channels = layer.out_channels
        else:
            height, width = layer.output_size(height, width)
            counter.add(excluded=channels * height * width * (layer.window * layer.window - 1))
        counters.append((layer.name, counter))
    return counters


def architecture_gop_per_mpixel(arch: CnnArchitecture, upto_layer: Optional[int] = None) -> OpCountReport:
    validate_architecture(arch)
    total = OpCounter.sum(counter for _, counter in layer_counters(arch, upto_layer))
    report = total.report(arch.input_pixels)
    logger.info(f"{arch.name}: {report.macs} MACs, {report.gop_per_mpixel:.3f} GOP/Mpixel")
    return report


# ---------------------------------------------------------------------------
# HOG
# ---------------------------------------------------------------------------

def pyramid_area_multiplier(ratio: float, levels: Optional[int] = None) -> float:
    """Somme des aires relatives des niveaux: sum ratio^(2k), forme close si illimité"""
    if not 0 < ratio < 1:
        raise ConfigError(f"pyramid ratio must lie in (0, 1), got {ratio}")
    if levels is None:
        return 1.0 / (1.0 - ratio * ratio)
    if levels < 1:
        raise ConfigError("levels must be >= 1")
    return sum(ratio ** (2 * k) for k in range(levels))


def pyramid_level_sizes(height: int, width: int, config: HogConfig) -> List[Tuple[int, int]]:
    """Dimensions (h, w) de chaque niveau; le niveau 0 est toujours l'image d'origine"""
    floor_size = max(config.min_level_size, 3)
    sizes = [(height, width)]
    k = 1
    while config.levels is None or k < config.levels:
        scale = config.pyramid_ratio ** k
        level_h = math.floor(round(height * scale, 9))
        level_w = math.floor(round(width * scale, 9))
        if level_h < floor_size or level_w < floor_size:
            break
        sizes.append((level_h, level_w))
        k += 1
    return sizes


def level_passes(level: int, config: HogConfig) -> List[int]:
    """Tailles de cellule traitées à un niveau donné"""
    passes = [config.cell_size]
    fine = config.fine_cell_size
    if fine is not None and level < config.octave_interval:
        passes.append(fine)
    return passes


def cascade_steps(num_bins: int) -> int:
    return 0 if num_bins <= 1 else math.ceil(math.log2(num_bins))


def hog_pass_counter(height: int, width: int, cell_size: int, num_bins: int) -> OpCounter:
    """Décompte exact d'une passe HOG sur une image height x width"""
    pixels = height * width
    steps = cascade_steps(num_bins)
    counter = OpCounter()
    counter.add(additions=2 * pixels)
    counter.add(comparisons=2 * pixels, additions=pixels)
    if num_bins > 1:
        counter.add(comparisons=pixels, additions=2 * pixels)
        counter.add(comparisons=pixels)
        counter.add(multiplications=2 * steps * pixels, additions=steps * pixels, comparisons=steps * pixels)
    cells_y, cells_x = height // cell_size, width // cell_size
    if cells_y >= 2 and cells_x >= 2:
        cells = cells_y * cells_x
        counter.add(additions=cells * cell_size * cell_size * num_bins)
        counter.add(macs=16 * num_bins * cells, comparisons=4 * cells)
        counter.add(multiplications=num_bins * cells, divisions=8 * num_bins * cells,
                    comparisons=4 * num_bins * cells)
    return counter


def resample_counter(height: int, width: int) -> OpCounter:
    pixels = height * width
    return OpCounter().add(macs=RESAMPLE_MACS * pixels, additions=RESAMPLE_ADDITIONS * pixels,
                           comparisons=RESAMPLE_COMPARISONS * pixels)


def hog_image_counter(height: int, width: int, config: HogConfig) -> OpCounter:
    total = OpCounter()
    for level, (level_h, level_w) in enumerate(pyramid_level_sizes(height, width, config)):
        if level > 0:
            total.merge(resample_counter(level_h, level_w))
        for cell_size in level_passes(level, config):
            total.merge(hog_pass_counter(level_h, level_w, cell_size, config.num_bins))
    return total


def _pass_rates(cell_size: int, num_bins: int) -> Dict[str, float]:
    """Coût par pixel d'une passe en régime établi (toutes les cellules complètes)"""
    steps = cascade_steps(num_bins)
    per_cell = 1.0 / (cell_size * cell_size)
    rates = {
        "macs": 16 * num_bins * per_cell,
        "additions": 3.0 + num_bins,
        "multiplications": num_bins * per_cell,
        "comparisons": 2.0 + 4 * per_cell + 4 * num_bins * per_cell,
        "divisions": 8 * num_bins * per_cell,
    }
    if num_bins > 1:
        rates["additions"] += 2 + steps
        rates["multiplications"] += 2 * steps
        rates["comparisons"] += 2 + steps
    return rates


def hog_gop_per_mpixel(config: HogConfig, image_size: Optional[Tuple[int, int]] = None) -> OpCountReport:
    """Complexité HOG.

    Avec image_size=(h, w): décompte exact, identique à celui de hog.extract.
    Sans taille: débit par pixel (forme close des multiplicateurs d'aire),
    exprimé sur un mégapixel nominal.
    """
    if image_size is not None:
        height, width = image_size
        return hog_image_counter(height, width, config).report(height * width)

    main_area = pyramid_area_multiplier(config.pyramid_ratio, config.levels)
    rates = {key: value * main_area for key, value in _pass_rates(config.cell_size, config.num_bins).items()}
    if config.fine_cell_size is not None:
        fine_levels = config.octave_interval if config.levels is None else min(config.octave_interval, config.levels)
        fine_area = pyramid_area_multiplier(config.pyramid_ratio, fine_levels)
        for key, value in _pass_rates(config.fine_cell_size, config.num_bins).items():
            rates[key] += value * fine_area
    resampled_area = main_area - 1.0
    rates["macs"] += RESAMPLE_MACS * resampled_area
    rates["additions"] += RESAMPLE_ADDITIONS * resampled_area
    rates["comparisons"] += RESAMPLE_COMPARISONS * resampled_area

    counts = {key: round(value * NOMINAL_PIXELS) for key, value in rates.items()}
    report = OpCountReport(pixels=NOMINAL_PIXELS, **counts)
    logger.info(f"HOG analytique: {report.gop_per_mpixel:.4f} GOP/Mpixel (aire pyramide {main_area:.3f})")
    return report
