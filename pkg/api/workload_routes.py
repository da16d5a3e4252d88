from typing import Any, Dict, List, Optional

from fastapi import APIRouter, Body, HTTPException, Query
from pydantic import BaseModel

from models.energy_models import HardwireBudget, HardwireReport
from models.errors import AnalyzerError
from models.workload_models import HogConfig, OpCountReport, ShapeTrace
from utils.energy import hardwire_feasibility
from utils.workload import (
    BUILTIN_NAMES,
    architecture_gop_per_mpixel,
    builtin_workloads,
    get_architecture,
    get_workload,
    hog_gop_per_mpixel,
    load_architecture,
    load_hog_config,
    validate_architecture,
)

router = APIRouter()


class WorkloadSummary(BaseModel):
    name: str
    kind: str
    conv_layers: Optional[int] = None


class CountResponse(BaseModel):
    workload: str
    report: OpCountReport
    ratio_vs_hog: float


def _count(descriptor, image_size=None) -> OpCountReport:
    if isinstance(descriptor, HogConfig):
        return hog_gop_per_mpixel(descriptor, image_size)
    return architecture_gop_per_mpixel(descriptor)


def _ratio(report: OpCountReport) -> float:
    return report.gop_per_mpixel / hog_gop_per_mpixel(get_workload("hog")).gop_per_mpixel


@router.get("/", response_model=List[WorkloadSummary])
def list_workloads():
    """Descripteurs embarqués"""
    summaries = []
    for name, descriptor in builtin_workloads():
        if isinstance(descriptor, HogConfig):
            summaries.append(WorkloadSummary(name=name, kind="hog"))
        else:
            summaries.append(WorkloadSummary(name=name, kind="cnn", conv_layers=len(descriptor.conv_layers)))
    return summaries


@router.get("/hardwire", response_model=HardwireReport)
def hardwire(
    workload: str = Query("alexnet"),
    gates: float = Query(1000.0, gt=0, description="kgates"),
    memory: float = Query(150.0, gt=0, description="kB"),
    gates_per_multiplier: float = Query(100.0, gt=0),
    bytes_per_weight: float = Query(1.0, gt=0),
):
    """Multiplieurs à poids fixes réalisables dans le budget de surface"""
    try:
        weight_count = get_architecture(workload).weight_count()
        budget = HardwireBudget(gate_budget_kgates=gates, memory_budget_kb=memory,
                                gates_per_multiplier=gates_per_multiplier, bytes_per_weight=bytes_per_weight)
        return hardwire_feasibility(weight_count, budget)
    except AnalyzerError as e:
        raise HTTPException(status_code=400, detail=str(e))


@router.get("/{name}/count", response_model=CountResponse)
def count_builtin(name: str, image_h: Optional[int] = Query(None, ge=1), image_w: Optional[int] = Query(None, ge=1)):
    if name not in BUILTIN_NAMES:
        raise HTTPException(status_code=404, detail=f"Charge inconnue: {name}")
    try:
        size = (image_h, image_w) if image_h and image_w else None
        report = _count(get_workload(name), size)
        return CountResponse(workload=name, report=report, ratio_vs_hog=_ratio(report))
    except AnalyzerError as e:
        raise HTTPException(status_code=400, detail=str(e))


@router.get("/{name}/trace", response_model=ShapeTrace)
def trace_builtin(name: str):
    if name not in BUILTIN_NAMES or name == "hog":
        raise HTTPException(status_code=404, detail=f"Architecture inconnue: {name}")
    return validate_architecture(get_architecture(name))


@router.post("/count", response_model=CountResponse)
def count_descriptor(document: Dict[str, Any] = Body(...)):
    """Décompte pour un descripteur fourni dans le corps de la requête"""
    try:
        if "layers" in document:
            descriptor = load_architecture(document)
        else:
            descriptor = load_hog_config(document)
        report = _count(descriptor)
        return CountResponse(workload=getattr(descriptor, "name", "hog"), report=report, ratio_vs_hog=_ratio(report))
    except AnalyzerError as e:
        raise HTTPException(status_code=422, detail=str(e))
