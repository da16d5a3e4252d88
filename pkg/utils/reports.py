"""Mise en forme des rapports: DataFrames pandas, CSV et tableaux texte"""
import csv
import io
import logging
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union

import pandas as pd
from pydantic import BaseModel

from models.energy_models import EnergyProjection, HardwireReport, ParetoPoint
from models.workload_models import OpCountReport

logger = logging.getLogger(__name__)

OP_COLUMNS = ["macs", "additions", "multiplications", "comparisons", "divisions",
              "total_ops", "pixels", "gop_per_mpixel", "excluded_ops"]


def models_frame(rows: Iterable[BaseModel], columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    frame = pd.DataFrame([row.dict() for row in rows])
    if columns is not None:
        frame = frame.reindex(columns=list(columns))
    return frame


def op_count_frame(reports: Sequence[Tuple[str, OpCountReport]], baseline_gop: Optional[float] = None) -> pd.DataFrame:
    """Une ligne par charge: (nom, OpCountReport); ratio par rapport à la référence HOG si fournie"""
    records = []
    for name, report in reports:
        record = {"workload": name}
        record.update({column: getattr(report, column) for column in OP_COLUMNS})
        if baseline_gop:
            record["ratio_vs_hog"] = report.gop_per_mpixel / baseline_gop
        records.append(record)
    return pd.DataFrame(records)


def projection_frame(projection: EnergyProjection) -> pd.DataFrame:
    """Détail multiplicatif de la projection, terminé par la ligne combinée"""
    records = [{"technique": name, "energy_multiplier": energy,
                "memory_multiplier": projection.memory_multipliers.get(name, 1.0)}
               for name, energy in projection.energy_multipliers.items()]
    records.append({"technique": "combined",
                    "energy_multiplier": projection.combined_energy_multiplier,
                    "memory_multiplier": projection.combined_memory_multiplier})
    frame = pd.DataFrame(records, columns=["technique", "energy_multiplier", "memory_multiplier"])
    frame["baseline"] = projection.baseline_name
    frame["baseline_energy_nj_per_pixel"] = projection.baseline_energy_nj_per_pixel
    frame["projected_energy_nj_per_pixel"] = projection.projected_energy_nj_per_pixel
    frame["baseline_memory_bytes"] = projection.baseline_memory_bytes
    frame["projected_memory_bytes"] = projection.projected_memory_bytes
    frame["executable_memory_bytes"] = projection.executable_memory_bytes
    return frame


def hardwire_frame(report: HardwireReport) -> pd.DataFrame:
    frame = models_frame([report])
    frame["coverage_percent"] = frame["coverage_fraction"] * 100
    return frame


def pareto_frame(points: Sequence[ParetoPoint], frontier: Sequence[ParetoPoint] = ()) -> pd.DataFrame:
    frame = models_frame(points, ["label", "map_percent", "energy_nj_per_pixel", "provenance"])
    # colonne log pour les tracés
    frame["log10_energy"] = [math.log10(p.energy_nj_per_pixel) for p in points]
    labels = {p.label for p in frontier}
    frame["on_frontier"] = [p.label in labels for p in points]
    return frame


def render(frame: pd.DataFrame, fmt: str = "table") -> str:
    if fmt == "csv":
        return frame.to_csv(index=False, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    if frame.empty:
        return "(empty)\n"
    return frame.to_string(index=False) + "\n"


def write_report(frame: pd.DataFrame, out: Optional[Union[str, Path]] = None, fmt: str = "csv") -> str:
    """Écrit le rapport dans out (CSV) ou le retourne pour stdout"""
    text = render(frame, fmt)
    if out is not None:
        Path(out).write_text(frame.to_csv(index=False, lineterminator="\n"), encoding="utf-8")
        logger.info(f"Rapport écrit: {out}")
    return text


def read_report(text: str) -> pd.DataFrame:
    return pd.read_csv(io.StringIO(text))
