from typing import Dict, List, Optional

from pydantic import BaseModel, Field, root_validator

from models.technique_models import TechniqueSet


class ChipMeasurement(BaseModel):
    """Une colonne du tableau des puces mesurées (unités dans les noms de champs)"""
    name: str
    workload: Optional[str] = None
    technology: str = ""
    gate_count_kgates: float = Field(..., gt=0)
    memory_kb: float = Field(..., gt=0)
    multiplier_bitwidth: str = ""
    throughput_mpixel_s: float = Field(..., gt=0)
    throughput_gops: float = Field(..., gt=0)
    power_mw: float = Field(..., gt=0)
    dram_b_per_pixel: float = Field(..., ge=0)
    energy_nj_per_pixel: float = Field(..., gt=0)
    efficiency_gops_per_w: float = Field(..., gt=0)


class MeasurementSet(BaseModel):
    baseline: Optional[str] = None
    entries: List[ChipMeasurement]

    @root_validator(skip_on_failure=True)
    def unique_names(cls, values):
        names = [entry.name for entry in values["entries"]]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ValueError(f"duplicate entry names: {', '.join(duplicates)}")
        return values

    def get(self, name: str) -> Optional[ChipMeasurement]:
        return next((entry for entry in self.entries if entry.name == name), None)


class IdentityCheck(BaseModel):
    """Écart relatif entre une grandeur dérivée et la valeur publiée"""
    entry: str
    identity: str
    derived: float
    reported: float
    deviation: float
    tolerance: float
    passed: bool


class EnergyProjection(BaseModel):
    baseline_name: str
    baseline_energy_nj_per_pixel: float
    applied: TechniqueSet
    energy_multipliers: Dict[str, float] = {}
    memory_multipliers: Dict[str, float] = {}
    combined_energy_multiplier: float = Field(1.0, ge=1)
    combined_memory_multiplier: float = Field(1.0, ge=1)
    projected_energy_nj_per_pixel: float
    baseline_memory_bytes: Optional[int] = None
    projected_memory_bytes: Optional[float] = None
    executable_memory_bytes: Optional[int] = None
    quantization_max_abs_error: Optional[float] = None


class ParetoPoint(BaseModel):
    label: str
    map_percent: float = Field(..., ge=0, le=100)
    energy_nj_per_pixel: float = Field(..., gt=0)
    provenance: str = ""

    class Config:
        frozen = True


class HardwireBudget(BaseModel):
    gate_budget_kgates: float = Field(1000.0, gt=0)
    memory_budget_kb: float = Field(150.0, gt=0)
    gates_per_multiplier: float = Field(100.0, gt=0)
    bytes_per_weight: float = Field(1.0, gt=0)


class HardwireReport(BaseModel):
    weight_count: int
    multipliers_affordable: int
    weights_in_sram: int
    coverage_fraction: float
    memory_ratio: float


class RelationCheck(BaseModel):
    relation: str
    observed: float
    low: float
    high: float
    passed: bool


class BudgetVerdict(BaseModel):
    name: str
    energy_nj_per_pixel: float
    budget_nj_per_pixel: float
    passed: bool


class EnergyRatio(BaseModel):
    name: str
    energy_nj_per_pixel: float
    ratio: float
