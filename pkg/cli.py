"""Interface en ligne de commande de l'analyseur HOG / CNN.

Codes de sortie: 0 succès, 1 entrée invalide, 2 contrôle de vérification en échec.
Les journaux vont sur stderr; stdout ne porte que les rapports (table ou CSV).
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from config import LOG_LEVELS, settings
from models.energy_models import HardwireBudget
from models.errors import AnalyzerError, DatasetError
from models.workload_models import CnnArchitecture, HogConfig
from utils import reports
from utils.cnn import image_to_tensor, load_weights, measure_sparsity, random_input, random_weights, run_network, save_weights
from utils.energy import (
    budget_check,
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
from utils.hog import dump_features, extract
from utils.pgm import read_pgm
from utils.techniques import describe, parse_technique_string
from utils.verification import GROUPS, run_verification
from utils.workload import (
    BUILTIN_NAMES,
    architecture_gop_per_mpixel,
    get_architecture,
    get_workload,
    hog_gop_per_mpixel,
    layer_counters,
    load_hog_config,
    validate_architecture,
)

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CHECK = 2


def resolve_input(path: str) -> Path:
    """Chemin tel quel, sinon relatif au répertoire des fixtures (FIXTURE_DIR)"""
    candidate = Path(path)
    if candidate.exists() or candidate.is_absolute():
        return candidate
    fixture = settings.fixture_path / path
    return fixture if fixture.exists() else candidate


def emit(frame: pd.DataFrame, args: argparse.Namespace) -> None:
    sys.stdout.write(reports.write_report(frame, getattr(args, "out", None), args.format))


# ---------------------------------------------------------------------------
# Sous-commandes
# ---------------------------------------------------------------------------

def cmd_count(args: argparse.Namespace) -> int:
    hog_reference = hog_gop_per_mpixel(get_workload("hog")).gop_per_mpixel
    rows = []
    for name in args.workload or BUILTIN_NAMES:
        descriptor = get_workload(str(resolve_input(name)) if name not in BUILTIN_NAMES else name)
        if isinstance(descriptor, HogConfig):
            size = tuple(args.image_size) if args.image_size else None
            report = hog_gop_per_mpixel(descriptor, size)
        else:
            report = architecture_gop_per_mpixel(descriptor)
        rows.append((name, report))
    emit(reports.op_count_frame(rows, hog_reference), args)
    return EXIT_OK


def cmd_hog(args: argparse.Namespace) -> int:
    image = read_pgm(resolve_input(args.image))
    config = load_hog_config(resolve_input(args.config)) if args.config else get_workload("hog")
    maps, instrumented = extract(image, config)
    if args.emit_features:
        Path(args.emit_features).write_text(dump_features(maps, config), encoding="utf-8")
        logger.info(f"{len(maps)} cartes de caractéristiques écrites dans {args.emit_features}")

    frame = reports.op_count_frame([("instrumented", instrumented)])
    status = EXIT_OK
    if args.emit_ops:
        analytical = hog_gop_per_mpixel(config, (image.height, image.width))
        frame = reports.op_count_frame([("instrumented", instrumented), ("analytical", analytical)])
        match = analytical == instrumented
        frame["match"] = match
        if not match:
            logger.error("Décompte instrumenté différent du modèle analytique")
            status = EXIT_CHECK
    emit(frame, args)
    return status


def cmd_cnn(args: argparse.Namespace) -> int:
    arch: CnnArchitecture = get_architecture(args.arch if args.arch in BUILTIN_NAMES else str(resolve_input(args.arch)))
    if args.weights:
        weights = load_weights(resolve_input(args.weights), arch)
    else:
        weights = random_weights(arch, args.random_seed)
    if args.save_weights:
        save_weights(args.save_weights, arch, weights)
    if args.image:
        tensor = image_to_tensor(read_pgm(resolve_input(args.image)), arch)
    else:
        tensor = random_input(arch, args.input_seed)

    outputs, report = run_network(arch, weights, tensor, args.upto_layer)
    trace = {layer.name: layer for layer in validate_architecture(arch).layers}
    analytical = {name: counter.macs for name, counter in _conv_counters(arch, args.upto_layer)}
    frame = pd.DataFrame([
        {
            "layer": output.index,
            "name": output.name,
            "channels": trace[output.name].channels,
            "height": trace[output.name].height,
            "width": trace[output.name].width,
            "macs": output.macs,
            "analytical_macs": analytical[output.name],
            "match": output.macs == analytical[output.name],
            "sparsity": output.sparsity,
        }
        for output in outputs
    ], columns=["layer", "name", "channels", "height", "width", "macs", "analytical_macs", "match", "sparsity"])
    sparsity = measure_sparsity(outputs)
    logger.info(f"{arch.name}: {report.macs:,} MACs, sparsité agrégée {sparsity.aggregate:.3f}")
    if args.dump_tensor and outputs:
        np.save(args.dump_tensor, outputs[-1].tensor.samples)
    emit(frame, args)
    if not frame["match"].all():
        logger.error(f"{arch.name}: MACs comptés et analytiques divergent")
        return EXIT_CHECK
    return EXIT_OK


def _conv_counters(arch: CnnArchitecture, upto_layer: Optional[int]):
    conv_names = {layer.name for layer in arch.conv_layers}
    return [(name, counter) for name, counter in layer_counters(arch, upto_layer) if name in conv_names]


def cmd_energy(args: argparse.Namespace) -> int:
    measurements = measurement_set_from_file(resolve_input(args.measurements) if args.measurements else None)
    status = EXIT_OK
    if args.ratios:
        frame = reports.models_frame(energy_ratio_table(measurements, args.baseline))
    elif args.project is not None:
        techniques = parse_technique_string(args.project)
        entry = measurements.get(args.entry)
        if entry is None:
            raise DatasetError(f"entry '{args.entry}' not found in the measurement set")
        arch = get_workload(entry.workload) if entry.workload else None
        weight_count = arch.weight_count() if isinstance(arch, CnnArchitecture) else None
        weights = random_weights(arch, args.seed) if args.executable and weight_count else None
        projection = project_techniques(entry, techniques, weight_count=weight_count, weights=weights)
        logger.info(f"Techniques: {', '.join(describe(techniques)) or 'aucune'}; "
                    f"combined {projection.combined_energy_multiplier:.1f}x")
        frame = reports.projection_frame(projection)
    elif args.budget_check:
        frame = reports.models_frame([budget_check(entry.energy_nj_per_pixel, entry.name, args.budget)
                                      for entry in measurements.entries])
    else:
        checks = validate_measurements(measurements) + efficiency_energy_model(measurements)
        frame = reports.models_frame(checks)
        if not all(check.passed for check in checks):
            status = EXIT_CHECK
    emit(frame, args)
    return status


def cmd_pareto(args: argparse.Namespace) -> int:
    points = tradeoff_from_file(resolve_input(args.tradeoff) if args.tradeoff else None)
    frontier, ordered = pareto_frontier(points)
    frame = reports.pareto_frame(ordered, frontier)
    status = EXIT_OK
    checks = []
    if not args.no_checks:
        checks = tradeoff_ratio_checks(ordered)
        if not all(check.passed for check in checks):
            status = EXIT_CHECK
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        reports.write_report(frame, out / "points.csv")
        reports.write_report(reports.pareto_frame(frontier, frontier), out / "frontier.csv")
        if checks:
            reports.write_report(reports.models_frame(checks), out / "checks.csv")
    emit(frame, args)
    for check in checks:
        if not check.passed:
            logger.error(f"Relation non vérifiée: {check.relation} = {check.observed:.4g} "
                         f"hors de [{check.low:.4g}, {check.high:.4g}]")
    return status


def cmd_hardwire(args: argparse.Namespace) -> int:
    if args.weights is not None:
        weight_count = args.weights
    else:
        weight_count = get_architecture(args.workload).weight_count()
    budget = HardwireBudget(gate_budget_kgates=args.gates, memory_budget_kb=args.memory,
                            gates_per_multiplier=args.gates_per_multiplier,
                            bytes_per_weight=args.bytes_per_weight)
    emit(reports.hardwire_frame(hardwire_feasibility(weight_count, budget)), args)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    rows = run_verification(args.group, seed=args.seed)
    emit(reports.models_frame(rows, ["group", "check", "expected", "observed", "deviation", "verdict"]), args)
    return EXIT_CHECK if any(row.failed for row in rows) else EXIT_OK


# ---------------------------------------------------------------------------
# Parseur
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["table", "csv"], default="table", help="stdout rendering")
    common.add_argument("--out", help="also write the report as CSV to this path")

    parser = argparse.ArgumentParser(prog="hogcnn", description="HOG vs CNN computation and energy analyzer")
    parser.add_argument("--log-level", choices=LOG_LEVELS, default=None, help="overrides LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    count = commands.add_parser("count", parents=[common],
                                help="analytical op counts in GOP/Mpixel (1 MAC = 2 ops) and ratio vs HOG")
    count.add_argument("--workload", action="append", help="builtin name or descriptor path (repeatable)")
    count.add_argument("--image-size", type=int, nargs=2, metavar=("H", "W"),
                       help="exact HOG count for an H x W image (pixels) instead of the per-pixel rate")
    count.set_defaults(handler=cmd_count)

    hog = commands.add_parser("hog", parents=[common], help="instrumented HOG extraction on a P5 graymap")
    hog.add_argument("--image", required=True, help="8-bit P5 graymap")
    hog.add_argument("--config", help="HOG config JSON (cell_size pixels, pyramid_ratio unitless)")
    hog.add_argument("--emit-features", metavar="PATH", help="write the feature document")
    hog.add_argument("--emit-ops", action="store_true", help="compare instrumented and analytical counts")
    hog.set_defaults(handler=cmd_hog)

    cnn = commands.add_parser("cnn", parents=[common], help="fixed-point conv stack: per-layer MACs and sparsity")
    cnn.add_argument("--arch", default="alexnet", help="builtin name or descriptor path")
    source = cnn.add_mutually_exclusive_group()
    source.add_argument("--weights", help="weight file (JSON manifest + int16 payload)")
    source.add_argument("--random-seed", type=int, default=0, help="seed for random Q8.8 weights")
    cnn.add_argument("--save-weights", metavar="PATH", help="write the weights in use")
    inputs = cnn.add_mutually_exclusive_group()
    inputs.add_argument("--image", help="P5 graymap resized to the descriptor input")
    inputs.add_argument("--random-input", dest="input_seed", type=int, default=0, metavar="SEED",
                        help="seed for a random input tensor (default)")
    cnn.add_argument("--upto-layer", type=int, default=None, help="stop after this conv layer (1-based)")
    cnn.add_argument("--dump-tensor", metavar="PATH", help="save the last output tensor (.npy)")
    cnn.set_defaults(handler=cmd_cnn)

    energy = commands.add_parser("energy", parents=[common], help="measured chip dataset reports (nJ/pixel)")
    energy.add_argument("--measurements", help="chip measurement JSON (default: bundled)")
    mode = energy.add_mutually_exclusive_group()
    mode.add_argument("--validate", action="store_true", help="identity checks (default)")
    mode.add_argument("--ratios", action="store_true", help="energy ratio vs the baseline entry")
    mode.add_argument("--project", metavar="TECHNIQUES", help='e.g. "quant=8,prune=0.151,rlc,dataflow=1.4"')
    mode.add_argument("--budget-check", action="store_true", help="strictly under the nJ/pixel budget")
    energy.add_argument("--baseline", help="baseline entry for --ratios")
    energy.add_argument("--entry", default="AlexNet", help="entry projected by --project")
    energy.add_argument("--executable", action="store_true",
                        help="with --project: also apply the techniques to seeded random weights")
    energy.add_argument("--seed", type=int, default=0)
    energy.add_argument("--budget", type=float, default=1.0, help="budget in nJ/pixel")
    energy.set_defaults(handler=cmd_energy)

    pareto = commands.add_parser("pareto", parents=[common], help="accuracy (mAP %%) vs energy (nJ/pixel)")
    pareto.add_argument("--tradeoff", help="trade-off JSON (default: bundled)")
    pareto.add_argument("--out-dir", help="write points.csv, frontier.csv and checks.csv")
    pareto.add_argument("--no-checks", action="store_true", help="skip the relationship checks")
    pareto.set_defaults(handler=cmd_pareto)

    hardwire = commands.add_parser("hardwire", parents=[common], help="fixed-weight multiplier feasibility")
    hardwire.add_argument("--gates", type=float, default=1000.0, help="gate budget in kgates")
    hardwire.add_argument("--memory", type=float, default=150.0, help="SRAM budget in kB")
    hardwire.add_argument("--weights", type=int, help="weight count")
    hardwire.add_argument("--workload", default="alexnet", help="take the weight count from this CNN")
    hardwire.add_argument("--gates-per-multiplier", type=float, default=100.0, help="gates")
    hardwire.add_argument("--bytes-per-weight", type=float, default=1.0, help="bytes")
    hardwire.set_defaults(handler=cmd_hardwire)

    verify = commands.add_parser("verify-paper", parents=[common], help="full acceptance matrix")
    verify.add_argument("--group", action="append", choices=list(GROUPS), help="restrict to a group (repeatable)")
    verify.add_argument("--seed", type=int, default=0)
    verify.set_defaults(handler=cmd_verify, format="csv")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level or settings.LOG_LEVEL,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except (AnalyzerError, ValidationError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
