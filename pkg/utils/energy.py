"""Mesures des puces, identités de cohérence, projections des techniques et compromis précision/énergie.

Les grandeurs mesurées (énergie, DRAM, efficacité) sont des données: ce module
ne fait que vérifier les identités entre elles et projeter les gains publiés.
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from config import settings
from models.energy_models import (
    BudgetVerdict,
    ChipMeasurement,
    EnergyProjection,
    EnergyRatio,
    HardwireBudget,
    HardwireReport,
    IdentityCheck,
    MeasurementSet,
    ParetoPoint,
    RelationCheck,
)
from models.errors import ConfigError, DatasetError
from models.technique_models import QuantizationSpec, QuantizedTensor, TechniqueSet
from models.tensor_models import WeightSet
from models.workload_models import CnnArchitecture, HogConfig
from utils.techniques import (
    encoded_bits,
    memory_bytes,
    prune_by_magnitude,
    quantize,
    rlc_encode,
)
from utils.workload import (
    architecture_gop_per_mpixel,
    get_workload,
    hog_gop_per_mpixel,
    validate_architecture,
)

logger = logging.getLogger(__name__)

IDENTITY_TOLERANCE = 0.20
MODEL_TOLERANCE = 0.10
NEAR_SENSOR_BUDGET = 1.0

# (énergie, mémoire) par technique; le flot de données n'agit que sur l'énergie
TECHNIQUE_MULTIPLIERS = {
    "quantization": (2.56, 2.0),
    "pruning": (3.7, 6.6),
    "compression": (1.0, 2.0),
}
TECHNIQUE_ORDER = ("quantization", "pruning", "compression", "dataflow")

DENSE_BYTES_PER_WEIGHT = 2

HOG_LABEL = "HOG"
CONV3_LABEL = "AlexNet-CONV3"
CONV5_LABEL = "AlexNet-CONV5"
VGG_LABEL = "VGG"


def _read_json(path: Union[str, Path]) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path}: invalid JSON ({e})")


def relative_deviation(derived: float, reported: float) -> float:
    return abs(derived - reported) / abs(reported)


# ---------------------------------------------------------------------------
# Jeu de mesures
# ---------------------------------------------------------------------------

def measurement_set_from_file(path: Optional[Union[str, Path]] = None) -> MeasurementSet:
    path = Path(path) if path is not None else settings.data_path / "chips.json"
    document = _read_json(path)
    try:
        measurements = MeasurementSet(**document)
    except (ValidationError, TypeError) as e:
        raise DatasetError(f"{path}: invalid measurement set: {e}")
    logger.info(f"{len(measurements.entries)} mesures chargées depuis {path}")
    return measurements


def workload_gop_per_mpixel(name: str) -> float:
    descriptor = get_workload(name)
    if isinstance(descriptor, HogConfig):
        return hog_gop_per_mpixel(descriptor).gop_per_mpixel
    return architecture_gop_per_mpixel(descriptor).gop_per_mpixel


def _linked_rate(entry: ChipMeasurement) -> float:
    if not entry.workload:
        raise DatasetError(f"entry '{entry.name}' has no workload link")
    try:
        return workload_gop_per_mpixel(entry.workload)
    except ConfigError as e:
        raise DatasetError(f"entry '{entry.name}': {e}")


def _check(entry: str, identity: str, derived: float, reported: float, tolerance: float) -> IdentityCheck:
    deviation = relative_deviation(derived, reported)
    return IdentityCheck(entry=entry, identity=identity, derived=derived, reported=reported,
                         deviation=deviation, tolerance=tolerance, passed=deviation <= tolerance)


def validate_measurements(measurements: MeasurementSet,
                          tolerance: float = IDENTITY_TOLERANCE,
                          area_tolerance: Optional[float] = None,
                          budget: Optional[HardwireBudget] = None) -> List[IdentityCheck]:
    """Identités énergie, efficacité, débit et budget de surface pour chaque entrée"""
    budget = budget or HardwireBudget()
    area_tolerance = settings.AREA_BUDGET_TOLERANCE if area_tolerance is None else area_tolerance
    checks: List[IdentityCheck] = []
    for entry in measurements.entries:
        rate = _linked_rate(entry)
        checks.append(_check(entry.name, "energy", entry.power_mw / entry.throughput_mpixel_s,
                             entry.energy_nj_per_pixel, tolerance))
        checks.append(_check(entry.name, "efficiency", entry.throughput_gops / (entry.power_mw / 1000),
                             entry.efficiency_gops_per_w, tolerance))
        checks.append(_check(entry.name, "throughput", entry.throughput_mpixel_s * rate,
                             entry.throughput_gops, tolerance))
        checks.append(_check(entry.name, "gate_budget", entry.gate_count_kgates,
                             budget.gate_budget_kgates, area_tolerance))
        checks.append(_check(entry.name, "memory_budget", entry.memory_kb,
                             budget.memory_budget_kb, area_tolerance))

    failed = [f"{c.entry}/{c.identity}" for c in checks if not c.passed]
    if failed:
        logger.warning(f"Identités non vérifiées: {', '.join(failed)}")
    else:
        logger.info(f"{len(checks)} identités vérifiées")
    return checks


# ---------------------------------------------------------------------------
# Modèle d'énergie et ratios
# ---------------------------------------------------------------------------

def energy_per_pixel_model(workload_gop_per_mpixel: float, efficiency_gops_per_w: float) -> float:
    """GOP/Mpixel vaut 1000 ops/pixel; divisé par des GOPS/W on obtient des nJ/pixel"""
    if workload_gop_per_mpixel <= 0 or efficiency_gops_per_w <= 0:
        raise ConfigError("workload rate and efficiency must be positive")
    return workload_gop_per_mpixel * 1000.0 / efficiency_gops_per_w


def efficiency_energy_model(measurements: MeasurementSet,
                            tolerance: float = MODEL_TOLERANCE) -> List[IdentityCheck]:
    checks = []
    for entry in measurements.entries:
        modeled = energy_per_pixel_model(_linked_rate(entry), entry.efficiency_gops_per_w)
        checks.append(_check(entry.name, "energy_model", modeled, entry.energy_nj_per_pixel, tolerance))
    return checks


def baseline_entry(measurements: MeasurementSet, baseline: Optional[str] = None) -> ChipMeasurement:
    name = baseline or measurements.baseline
    if not name:
        raise DatasetError("no baseline entry designated")
    entry = measurements.get(name)
    if entry is None:
        raise DatasetError(f"baseline '{name}' not found in the measurement set")
    return entry


def energy_ratio_table(measurements: MeasurementSet, baseline: Optional[str] = None) -> List[EnergyRatio]:
    reference = baseline_entry(measurements, baseline)
    return [EnergyRatio(name=entry.name, energy_nj_per_pixel=entry.energy_nj_per_pixel,
                        ratio=entry.energy_nj_per_pixel / reference.energy_nj_per_pixel)
            for entry in measurements.entries]


# ---------------------------------------------------------------------------
# Projection des techniques
# ---------------------------------------------------------------------------

def technique_multipliers(techniques: TechniqueSet) -> List[Tuple[str, float, float]]:
    """(technique, énergie, mémoire) dans l'ordre canonique, techniques actives seulement"""
    enabled = {
        "quantization": techniques.quantization is not None,
        "pruning": techniques.pruning is not None,
        "compression": techniques.compression,
    }
    factors = []
    for name in TECHNIQUE_ORDER:
        if name == "dataflow":
            if techniques.dataflow_multiplier is not None:
                factors.append((name, techniques.dataflow_multiplier, 1.0))
        elif enabled[name]:
            energy, memory = TECHNIQUE_MULTIPLIERS[name]
            factors.append((name, energy, memory))
    return factors


def quantize_weights(weights: WeightSet, spec: QuantizationSpec) -> QuantizedTensor:
    """Quantifie les valeurs réelles des poids (codes / 2**frac_bits)"""
    real = weights.flat().astype(np.float64) / (1 << weights.frac_bits)
    return quantize(real, spec, source_bits=weights.value_bits)


def executable_memory_bytes(weights: WeightSet, techniques: TechniqueSet) -> int:
    """Mémoire réellement obtenue en appliquant les techniques exécutables aux poids"""
    bits = techniques.quantization.bits if techniques.quantization is not None else weights.value_bits
    if techniques.pruning is not None:
        pruned = prune_by_magnitude(weights, techniques.pruning).weights
        return memory_bytes(pruned.total_count, pruned.nonzero_count, bits, pruned=True)
    if techniques.compression:
        return -(-encoded_bits(rlc_encode(weights.flat())) // 8)
    if techniques.quantization is not None:
        return quantize_weights(weights, techniques.quantization).stored_bytes
    return memory_bytes(weights.total_count, weights.nonzero_count, bits, pruned=False)


def project_techniques(baseline: ChipMeasurement, techniques: TechniqueSet,
                       weight_count: Optional[int] = None,
                       weights: Optional[WeightSet] = None) -> EnergyProjection:
    factors = technique_multipliers(techniques)
    energy_multiplier = math.prod(energy for _, energy, _ in factors)
    memory_multiplier = math.prod(memory for _, _, memory in factors)
    if weight_count is None and weights is not None:
        weight_count = weights.total_count

    baseline_memory = weight_count * DENSE_BYTES_PER_WEIGHT if weight_count is not None else None
    projection = EnergyProjection(
        baseline_name=baseline.name,
        baseline_energy_nj_per_pixel=baseline.energy_nj_per_pixel,
        applied=techniques,
        energy_multipliers={name: energy for name, energy, _ in factors},
        memory_multipliers={name: memory for name, _, memory in factors},
        combined_energy_multiplier=energy_multiplier,
        combined_memory_multiplier=memory_multiplier,
        projected_energy_nj_per_pixel=baseline.energy_nj_per_pixel / energy_multiplier,
        baseline_memory_bytes=baseline_memory,
        projected_memory_bytes=baseline_memory / memory_multiplier if baseline_memory is not None else None,
        executable_memory_bytes=executable_memory_bytes(weights, techniques) if weights is not None else None,
        quantization_max_abs_error=(quantize_weights(weights, techniques.quantization).max_abs_error
                                    if weights is not None and techniques.quantization is not None else None),
    )
    logger.info(f"Projection {baseline.name}: {projection.projected_energy_nj_per_pixel:.2f} nJ/pixel "
                f"({energy_multiplier:.2f}x énergie, {memory_multiplier:.2f}x mémoire)")
    return projection


def hardwire_feasibility(weight_count: int, budget: Optional[HardwireBudget] = None) -> HardwireReport:
    budget = budget or HardwireBudget()
    if weight_count < 1:
        raise ConfigError("weight count must be positive")
    multipliers = int(budget.gate_budget_kgates * 1000 / budget.gates_per_multiplier)
    in_sram = int(budget.memory_budget_kb * 1024 / budget.bytes_per_weight)
    return HardwireReport(weight_count=weight_count, multipliers_affordable=multipliers,
                          weights_in_sram=in_sram, coverage_fraction=multipliers / weight_count,
                          memory_ratio=weight_count / in_sram)


def budget_check(energy_nj_per_pixel: float, name: str = "",
                 budget_nj_per_pixel: float = NEAR_SENSOR_BUDGET) -> BudgetVerdict:
    # strictement sous le budget
    return BudgetVerdict(name=name, energy_nj_per_pixel=energy_nj_per_pixel,
                         budget_nj_per_pixel=budget_nj_per_pixel,
                         passed=energy_nj_per_pixel < budget_nj_per_pixel)


def dram_traffic_lower_bound(arch: CnnArchitecture, value_bits: Optional[int] = None) -> float:
    """Octets par pixel d'entrée: poids + entrée + chaque carte de sortie, lus ou écrits une fois"""
    bits = value_bits or arch.value_bits
    trace = validate_architecture(arch)
    elements = arch.weight_count() + arch.input_pixels * arch.input_channels
    elements += sum(layer.height * layer.width * layer.channels for layer in trace.layers)
    return elements * bits / 8 / arch.input_pixels


# ---------------------------------------------------------------------------
# Compromis précision / énergie
# ---------------------------------------------------------------------------

def tradeoff_from_file(path: Optional[Union[str, Path]] = None) -> List[ParetoPoint]:
    path = Path(path) if path is not None else settings.data_path / "tradeoff.json"
    document = _read_json(path)
    raw = document.get("points") if isinstance(document, dict) else document
    if not isinstance(raw, list):
        raise DatasetError(f"{path}: expected a list of points")
    try:
        points = [ParetoPoint(**item) for item in raw]
    except (ValidationError, TypeError) as e:
        raise DatasetError(f"{path}: invalid trade-off point: {e}")
    labels = [point.label for point in points]
    if len(set(labels)) != len(labels):
        raise DatasetError(f"{path}: duplicate labels")
    return points


def pareto_frontier(points: Sequence[ParetoPoint]) -> Tuple[List[ParetoPoint], List[ParetoPoint]]:
    """(frontière non dominée, liste complète), triées par énergie croissante"""
    ordered = sorted(points, key=lambda p: (p.energy_nj_per_pixel, -p.map_percent))
    frontier: List[ParetoPoint] = []
    best = -math.inf
    for point in ordered:
        if point.map_percent > best:
            frontier.append(point)
            best = point.map_percent
    return frontier, ordered


def _band(relation: str, observed: float, low: float, high: float) -> RelationCheck:
    return RelationCheck(relation=relation, observed=observed, low=low, high=high,
                         passed=low <= observed <= high)


def tradeoff_ratio_checks(points: Sequence[ParetoPoint]) -> List[RelationCheck]:
    by_label: Dict[str, ParetoPoint] = {point.label: point for point in points}
    missing = [label for label in (HOG_LABEL, CONV3_LABEL, CONV5_LABEL, VGG_LABEL) if label not in by_label]
    if missing:
        raise DatasetError(f"trade-off dataset lacks: {', '.join(missing)}")
    hog, conv3, conv5, vgg = (by_label[label] for label in (HOG_LABEL, CONV3_LABEL, CONV5_LABEL, VGG_LABEL))

    checks = [
        _band("energy CONV3/HOG ~ 100", conv3.energy_nj_per_pixel / hog.energy_nj_per_pixel, 80.0, 120.0),
        _band("energy CONV5/CONV3 ~ 1.22", conv5.energy_nj_per_pixel / conv3.energy_nj_per_pixel,
              1.22 * 0.95, 1.22 * 1.05),
        _band("energy VGG/HOG in [5e3, 5e4]", vgg.energy_nj_per_pixel / hog.energy_nj_per_pixel, 5e3, 5e4),
        _band("mAP CONV5/HOG ~ 2", conv5.map_percent / hog.map_percent, 1.7, 2.3),
        _band("mAP CONV3/HOG ~ 1", conv3.map_percent / hog.map_percent, 0.9, 1.1),
    ]
    for check in checks:
        logger.info(f"{check.relation}: {check.observed:.4g} -> {'ok' if check.passed else 'FAIL'}")
    return checks
