from typing import List, Optional

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from models.errors import AnalyzerError
from models.workload_models import OpCountReport
from utils.cnn import measure_sparsity, random_input, random_weights, run_network
from utils.workload import BUILTIN_NAMES, get_architecture

router = APIRouter()


class CnnRunRequest(BaseModel):
    arch: str = "alexnet"
    seed: int = 0
    input_seed: int = 0
    upto_layer: Optional[int] = Field(None, ge=0)


class LayerSummary(BaseModel):
    index: int
    name: str
    channels: int
    height: int
    width: int
    macs: int
    sparsity: float


class CnnRunResponse(BaseModel):
    architecture: str
    layers: List[LayerSummary]
    aggregate_sparsity: float
    ops: OpCountReport


@router.post("/run", response_model=CnnRunResponse)
def run(request: CnnRunRequest):
    """Exécute la pile de convolutions avec des poids et une entrée aléatoires déterministes"""
    if request.arch not in BUILTIN_NAMES or request.arch == "hog":
        raise HTTPException(status_code=404, detail=f"Architecture inconnue: {request.arch}")
    try:
        arch = get_architecture(request.arch)
        outputs, report = run_network(arch, random_weights(arch, request.seed),
                                      random_input(arch, request.input_seed), request.upto_layer)
    except AnalyzerError as e:
        raise HTTPException(status_code=400, detail=str(e))

    layers = []
    for output in outputs:
        channels, height, width = output.tensor.dims
        layers.append(LayerSummary(index=output.index, name=output.name, channels=channels,
                                   height=height, width=width, macs=output.macs,
                                   sparsity=output.sparsity))
    return CnnRunResponse(architecture=arch.name, layers=layers,
                          aggregate_sparsity=measure_sparsity(outputs).aggregate, ops=report)
