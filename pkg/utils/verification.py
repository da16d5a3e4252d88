"""Suite d'acceptation: reproduit les tableaux de complexité et d'énergie et vérifie
les propriétés des moteurs exécutables. Chaque groupe produit des lignes
VerificationCheck; une exception dans un groupe devient une ligne en échec.
"""
import logging
import math
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from models.energy_models import HardwireBudget
from models.hog_models import GrayImage
from models.report_models import VerificationCheck
from models.technique_models import PruningSpec, QuantizationSpec
from models.tensor_models import FixedPointTensor
from models.workload_models import ConvLayerShape, HogConfig
from utils.cnn import quantize_real, random_input, random_weights, run_conv_layer, run_network
from utils.energy import (
    baseline_entry,
    budget_check,
    dram_traffic_lower_bound,
    efficiency_energy_model,
    energy_ratio_table,
    hardwire_feasibility,
    measurement_set_from_file,
    pareto_frontier,
    project_techniques,
    tradeoff_from_file,
    tradeoff_ratio_checks,
    validate_measurements,
)
from utils.hog import cell_histograms, compute_gradients, extract
from utils.op_counter import OpCounter
from utils.techniques import (
    compression_ratio,
    memory_bytes,
    parse_technique_string,
    prune_by_magnitude,
    quantize,
    read_rlc_stream,
    rlc_decode,
    rlc_encode,
    write_rlc_stream,
)
from utils.workload import (
    architecture_gop_per_mpixel,
    conv_layer_macs,
    get_architecture,
    get_workload,
    hog_gop_per_mpixel,
)

logger = logging.getLogger(__name__)

COUNT_TOLERANCE = 0.02
RATIO_TOLERANCE = 0.04
HOG_BAND = (0.35, 1.4)
HOG_SIZES = ((3, 3), (17, 23), (40, 40), (64, 64), (96, 80))
MASS_IMAGES = 100
PRUNED_DENSITY = 352 / 2334
HOG_CHIP_MEMORY_KB = 159.0
ALL_TECHNIQUES = "quant=8,prune=0.151,rlc,dataflow=1.4"

TABLE_GOP = {"alexnet": 25.8, "vgg16": 610.3}
TABLE_RATIO = {"alexnet": 36.9, "vgg16": 871.9}
TABLE_ENERGY_RATIO = {"HOG": 1.0, "AlexNet": 311.0, "VGG-16": 13485.8}


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (int, np.integer)):
        return f"{int(value)}"
    return str(value)


def _within(group: str, check: str, expected: float, observed: float, tolerance: float) -> VerificationCheck:
    deviation = abs(observed - expected) / abs(expected)
    return VerificationCheck(group=group, check=check, expected=f"{_fmt(expected)} ±{tolerance:.0%}",
                             observed=_fmt(observed), deviation=deviation,
                             verdict="pass" if deviation <= tolerance else "fail")


def _band(group: str, check: str, low: float, high: float, observed: float) -> VerificationCheck:
    return VerificationCheck(group=group, check=check, expected=f"[{_fmt(low)}, {_fmt(high)}]",
                             observed=_fmt(observed), verdict="pass" if low <= observed <= high else "fail")


def _equal(group: str, check: str, expected, observed) -> VerificationCheck:
    return VerificationCheck(group=group, check=check, expected=_fmt(expected), observed=_fmt(observed),
                             verdict="pass" if expected == observed else "fail")


def _holds(group: str, check: str, condition: bool, observed="") -> VerificationCheck:
    return VerificationCheck(group=group, check=check, expected="true", observed=_fmt(observed) or str(condition),
                             verdict="pass" if condition else "fail")


def _random_image(rng: np.random.Generator, height: int, width: int, high: int = 256) -> GrayImage:
    return GrayImage(samples=rng.integers(0, high, size=(height, width)).astype(np.uint8))


# ---------------------------------------------------------------------------
# Groupes
# ---------------------------------------------------------------------------

def check_workloads(seed: int = 0) -> List[VerificationCheck]:
    rows = []
    hog = hog_gop_per_mpixel(get_workload("hog")).gop_per_mpixel
    rows.append(_band("workload", "hog GOP/Mpixel", HOG_BAND[0], HOG_BAND[1], hog))
    for name in ("alexnet", "vgg16"):
        gop = architecture_gop_per_mpixel(get_architecture(name)).gop_per_mpixel
        rows.append(_within("workload", f"{name} GOP/Mpixel", TABLE_GOP[name], gop, COUNT_TOLERANCE))
        rows.append(_within("workload", f"{name}/hog ratio", TABLE_RATIO[name], gop / hog, RATIO_TOLERANCE))
    rows.append(_equal("workload", "alexnet weights incl. biases", 2_334_080, get_architecture("alexnet").weight_count()))
    return rows


def check_hog(seed: int = 0) -> List[VerificationCheck]:
    rng = np.random.default_rng(seed)
    config = HogConfig()
    rows = []
    for height, width in HOG_SIZES:
        image = _random_image(rng, height, width)
        _, instrumented = extract(image, config)
        analytical = hog_gop_per_mpixel(config, (height, width))
        rows.append(_holds("hog", f"analytical == instrumented {height}x{width}",
                           analytical == instrumented, instrumented.total_ops))

    single = HogConfig(levels=1)
    rows.append(_equal("hog", "single level 64x64 ops", 409_408,
                       hog_gop_per_mpixel(single, (64, 64)).total_ops))

    maps, report = extract(_random_image(rng, 3, 3), config)
    rows.append(_holds("hog", "3x3 image: no features, gradient ops counted",
                       not maps and report.total_ops > 0, report.total_ops))

    conserved = True
    for _ in range(MASS_IMAGES):
        image = _random_image(rng, int(rng.integers(8, 65)), int(rng.integers(8, 65)))
        field = compute_gradients(image, config)
        histograms = cell_histograms(field, config)
        cell = histograms.cell_size
        covered = field.magnitude[:histograms.cells_y * cell, :histograms.cells_x * cell]
        per_cell = covered.reshape(histograms.cells_y, cell, histograms.cells_x, cell).sum(axis=(1, 3))
        conserved &= bool(np.array_equal(histograms.bins.sum(axis=2), per_cell))
    rows.append(_holds("hog", f"histogram mass conservation x{MASS_IMAGES}", conserved))

    dark = _random_image(rng, 40, 48, high=86)
    reference, _ = extract(dark, config)
    for k in (2, 3):
        scaled = GrayImage(samples=dark.samples.astype(np.int64) * k)
        maps, _ = extract(scaled, config)
        same = len(maps) == len(reference) and all(
            np.array_equal(a.features, b.features) for a, b in zip(maps, reference))
        rows.append(_holds("hog", f"illumination invariance k={k}, {len(reference)} maps", same))
    return rows


def _reference_conv(tensor: FixedPointTensor, layer: ConvLayerShape, weights: np.ndarray,
                    bias: np.ndarray, weight_frac_bits: int) -> np.ndarray:
    scale = float(1 << weight_frac_bits)
    x = np.pad(tensor.to_real(), ((0, 0), (layer.padding, layer.padding), (layer.padding, layer.padding)))
    windows = sliding_window_view(x, (layer.kernel_h, layer.kernel_w), axis=(1, 2))[:, ::layer.stride, ::layer.stride]
    w = weights / scale
    group_in = layer.in_channels // layer.groups
    group_out = layer.out_channels // layer.groups
    outputs = []
    for g in range(layer.groups):
        block = windows[g * group_in:(g + 1) * group_in]
        kernels = w[g * group_out:(g + 1) * group_out]
        outputs.append(np.einsum("chwij,ocij->ohw", block, kernels))
    return np.concatenate(outputs) + (bias / scale)[:, None, None]


def check_cnn(seed: int = 0, oracle_layers: int = 100) -> List[VerificationCheck]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    macs_match = True
    for trial in range(oracle_layers):
        # une couche sur deux avec des poids Q4.12
        weight_frac = 12 if trial % 2 else 8
        groups = int(rng.integers(1, 3))
        layer = ConvLayerShape(name="oracle", in_channels=groups * int(rng.integers(1, 4)),
                               out_channels=groups * int(rng.integers(1, 4)),
                               kernel_h=int(rng.integers(1, 4)), kernel_w=int(rng.integers(1, 4)),
                               stride=int(rng.integers(1, 3)), padding=int(rng.integers(0, 2)), groups=groups)
        height = layer.kernel_h - 2 * layer.padding + layer.stride * int(rng.integers(1, 6))
        width = layer.kernel_w - 2 * layer.padding + layer.stride * int(rng.integers(1, 6))
        height, width = max(height, 1), max(width, 1)
        tensor = FixedPointTensor(samples=quantize_real(rng.uniform(-2, 2, (layer.in_channels, height, width))))
        weights = quantize_real(rng.uniform(-1, 1, (layer.out_channels, layer.in_channels // groups,
                                                    layer.kernel_h, layer.kernel_w)), frac_bits=weight_frac)
        bias = quantize_real(rng.uniform(-1, 1, layer.out_channels), frac_bits=weight_frac)
        counter = OpCounter()
        output = run_conv_layer(tensor, layer, weights, bias, counter, workers=2, weight_frac_bits=weight_frac)
        reference = _reference_conv(tensor, layer, weights, bias, weight_frac)
        worst = max(worst, float(np.max(np.abs(output.to_real() - reference))))
        macs_match &= counter.macs == conv_layer_macs(layer, height, width)

    rows = [
        _band("cnn", f"conv vs real oracle ({oracle_layers} layers), max error", 0.0, 0.5 / 256, worst),
        _holds("cnn", "instrumented MACs == conv_layer_macs", macs_match),
    ]

    arch = get_architecture("alexnet")
    weights = random_weights(arch, seed)
    tensor = random_input(arch, seed)
    outputs, report = run_network(arch, weights, tensor)
    rows.append(_equal("cnn", "alexnet instrumented MACs", architecture_gop_per_mpixel(arch).macs, report.macs))
    rows.append(_equal("cnn", "alexnet total MACs", 665_784_864, report.macs))
    rows.append(_equal("cnn", "alexnet conv5 output dims", (256, 13, 13), outputs[-1].tensor.dims))
    rows.append(_equal("cnn", "alexnet conv1..3 MACs", 478_884_384,
                       architecture_gop_per_mpixel(arch, upto_layer=3).macs))
    return rows


def check_techniques(seed: int = 0, round_trips: int = 10_000) -> List[VerificationCheck]:
    rng = np.random.default_rng(seed)
    intact = True
    for trial in range(round_trips):
        length = int(rng.integers(0, 96))
        samples = rng.integers(-(1 << 15), 1 << 15, size=length)
        samples[rng.random(length) < rng.random()] = 0
        stream = rlc_encode(samples)
        intact &= bool(np.array_equal(rlc_decode(stream), samples))
        if trial % 100 == 0:
            intact &= bool(np.array_equal(rlc_decode(read_rlc_stream(write_rlc_stream(stream))), samples))

    sparse = rng.integers(1, 1 << 15, size=10_000)
    sparse[rng.random(sparse.size) < 0.9] = 0
    dense = rng.integers(1, 1 << 15, size=10_000)
    rows = [
        _holds("techniques", f"rlc round trip x{round_trips}", intact),
        _band("techniques", "rlc ratio at 90% zeros", 2.0, math.inf, compression_ratio(sparse)),
        _within("techniques", "rlc ratio on dense data", 16 / 21, compression_ratio(dense), 0.01),
    ]

    arch = get_architecture("alexnet")
    pruned = prune_by_magnitude(random_weights(arch, seed), PruningSpec(target_density=PRUNED_DENSITY))
    rows.append(_equal("techniques", "pruned alexnet nonzeros", 352_013, pruned.kept))
    rows.append(_equal("techniques", "pruned memory bytes (8-bit values + 5-bit index)", 572_038,
                       memory_bytes(pruned.weights.total_count, pruned.kept, 8, pruned=True)))
    rows.append(_within("techniques", "pruned 8-bit values vs HOG chip memory", 2.2,
                        pruned.kept / (HOG_CHIP_MEMORY_KB * 1024), 0.05))

    example = quantize([-1.0, -0.5, 0.0, 0.5, 1.0], QuantizationSpec(bits=2))
    rows.append(_holds("techniques", "2-bit uniform example",
                       np.allclose(example.values, [-1, -1 / 3, 1 / 3, 1 / 3, 1])
                       and example.codes.tolist() == [-2, -1, 0, 0, 1]
                       and example.max_abs_error <= 1 / 3 + 1e-12,
                       ", ".join(f"{v:.4f}" for v in example.values)))
    return rows


def check_energy(seed: int = 0) -> List[VerificationCheck]:
    measurements = measurement_set_from_file()
    rows = []
    for check in validate_measurements(measurements):
        rows.append(VerificationCheck(group="energy", check=f"{check.entry} {check.identity} identity",
                                      expected=f"{_fmt(check.reported)} ±{check.tolerance:.0%}",
                                      observed=_fmt(check.derived), deviation=check.deviation,
                                      verdict="pass" if check.passed else "fail"))
    for check in efficiency_energy_model(measurements):
        rows.append(VerificationCheck(group="energy", check=f"{check.entry} energy from efficiency",
                                      expected=f"{_fmt(check.reported)} ±{check.tolerance:.0%}",
                                      observed=_fmt(check.derived), deviation=check.deviation,
                                      verdict="pass" if check.passed else "fail"))
    for ratio in energy_ratio_table(measurements):
        expected = TABLE_ENERGY_RATIO.get(ratio.name)
        if expected is not None:
            rows.append(_within("energy", f"{ratio.name} energy ratio", expected, ratio.ratio, 1e-9))

    alexnet = measurements.get("AlexNet")
    arch = get_architecture("alexnet")
    projection = project_techniques(alexnet, parse_technique_string(ALL_TECHNIQUES), weight_count=arch.weight_count())
    rows.append(_within("energy", "projected alexnet nJ/pixel", 11.7, projection.projected_energy_nj_per_pixel, 0.01))
    rows.append(_band("energy", "combined energy multiplier", 10.0, math.inf, projection.combined_energy_multiplier))
    rows.append(_within("energy", "combined memory multiplier", 26.4, projection.combined_memory_multiplier, 1e-9))

    hardwire = hardwire_feasibility(arch.weight_count(), HardwireBudget())
    rows.append(_equal("energy", "hardwired multipliers", 10_000, hardwire.multipliers_affordable))
    rows.append(_band("energy", "hardwired coverage", 0.0, 0.01, hardwire.coverage_fraction))
    rows.append(_within("energy", "weights vs SRAM", 15.2, hardwire.memory_ratio, COUNT_TOLERANCE))

    verdicts = {entry.name: budget_check(entry.energy_nj_per_pixel, entry.name).passed
                for entry in measurements.entries}
    baseline = baseline_entry(measurements).name
    rows.append(_holds("energy", "only the hand-crafted baseline is under 1 nJ/pixel",
                       verdicts.get(baseline, False) and sum(verdicts.values()) == 1,
                       ", ".join(name for name, ok in verdicts.items() if ok)))

    bound = dram_traffic_lower_bound(arch, 16)
    ratio = bound / alexnet.dram_b_per_pixel
    if not 0.5 <= ratio <= 2.0:
        logger.warning(f"Borne DRAM AlexNet {bound:.1f} B/pixel hors d'un facteur 2 de {alexnet.dram_b_per_pixel}")
    rows.append(VerificationCheck(group="energy", check="alexnet DRAM lower bound (B/pixel)",
                                  expected=f"{_fmt(alexnet.dram_b_per_pixel)} within 2x", observed=_fmt(bound),
                                  deviation=abs(bound - alexnet.dram_b_per_pixel) / alexnet.dram_b_per_pixel,
                                  verdict="advisory"))
    return rows


def check_tradeoff(seed: int = 0) -> List[VerificationCheck]:
    points = tradeoff_from_file()
    frontier, ordered = pareto_frontier(points)
    rows = [
        _equal("tradeoff", "frontier order", "HOG,AlexNet-CONV3,AlexNet-CONV5,VGG",
               ",".join(point.label for point in frontier)),
        _holds("tradeoff", "frontier idempotent", pareto_frontier(frontier)[0] == frontier),
    ]
    for check in tradeoff_ratio_checks(ordered):
        rows.append(_band("tradeoff", check.relation, check.low, check.high, check.observed))
    return rows


GROUPS: Dict[str, Callable[..., List[VerificationCheck]]] = {
    "workload": check_workloads,
    "hog": check_hog,
    "cnn": check_cnn,
    "techniques": check_techniques,
    "energy": check_energy,
    "tradeoff": check_tradeoff,
}


def run_verification(groups: Optional[Sequence[str]] = None, seed: int = 0) -> List[VerificationCheck]:
    rows: List[VerificationCheck] = []
    for name in groups or GROUPS:
        try:
            rows.extend(GROUPS[name](seed=seed))
        except Exception as e:
            logger.error(f"Groupe de vérification '{name}' interrompu: {e}", exc_info=True)
            rows.append(VerificationCheck(group=name, check="group completed", expected="no error",
                                          observed=str(e), verdict="fail"))
    failed = sum(row.failed for row in rows)
    logger.info(f"Vérification: {len(rows) - failed}/{len(rows)} contrôles sans échec")
    return rows
