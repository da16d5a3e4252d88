from typing import List

from fastapi import APIRouter, HTTPException, Query
from pydantic import BaseModel

from models.energy_models import BudgetVerdict, EnergyProjection, EnergyRatio, IdentityCheck, ParetoPoint, RelationCheck
from models.errors import AnalyzerError
from models.workload_models import CnnArchitecture
from utils.energy import (
    budget_check,
    efficiency_energy_model,
    energy_ratio_table,
    measurement_set_from_file,
    pareto_frontier,
    project_techniques,
    tradeoff_from_file,
    tradeoff_ratio_checks,
    validate_measurements,
)
from utils.techniques import parse_technique_string
from utils.workload import get_workload

router = APIRouter()


class ProjectionRequest(BaseModel):
    entry: str = "AlexNet"
    techniques: str = ""


class ValidationResponse(BaseModel):
    passed: bool
    checks: List[IdentityCheck]


class ParetoResponse(BaseModel):
    points: List[ParetoPoint]
    frontier: List[ParetoPoint]
    checks: List[RelationCheck] = []


@router.get("/validate", response_model=ValidationResponse)
def validate():
    """Identités du tableau de mesures et modèle énergie = débit / efficacité"""
    try:
        measurements = measurement_set_from_file()
        checks = validate_measurements(measurements) + efficiency_energy_model(measurements)
    except AnalyzerError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return ValidationResponse(passed=all(check.passed for check in checks), checks=checks)


@router.get("/ratios", response_model=List[EnergyRatio])
def ratios():
    try:
        return energy_ratio_table(measurement_set_from_file())
    except AnalyzerError as e:
        raise HTTPException(status_code=400, detail=str(e))


@router.get("/budget", response_model=List[BudgetVerdict])
def budget(budget_nj_per_pixel: float = Query(1.0, gt=0)):
    measurements = measurement_set_from_file()
    return [budget_check(entry.energy_nj_per_pixel, entry.name, budget_nj_per_pixel)
            for entry in measurements.entries]


@router.post("/project", response_model=EnergyProjection)
def project(request: ProjectionRequest):
    try:
        measurements = measurement_set_from_file()
        entry = measurements.get(request.entry)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"Entrée inconnue: {request.entry}")
        descriptor = get_workload(entry.workload) if entry.workload else None
        weight_count = descriptor.weight_count() if isinstance(descriptor, CnnArchitecture) else None
        return project_techniques(entry, parse_technique_string(request.techniques), weight_count=weight_count)
    except AnalyzerError as e:
        raise HTTPException(status_code=400, detail=str(e))


@router.get("/pareto", response_model=ParetoResponse)
def pareto(checks: bool = Query(True)):
    try:
        points = tradeoff_from_file()
        frontier, ordered = pareto_frontier(points)
        relations = tradeoff_ratio_checks(ordered) if checks else []
    except AnalyzerError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return ParetoResponse(points=ordered, frontier=frontier, checks=relations)
