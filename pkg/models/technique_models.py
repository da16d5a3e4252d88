from typing import List, Literal, NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, Field, validator

DATAFLOW_RANGE = (1.4, 2.5)


class QuantizationSpec(BaseModel):
    bits: int = Field(..., ge=1, le=16)
    mode: Literal["uniform", "log"] = "uniform"

    class Config:
        frozen = True


class PruningSpec(BaseModel):
    """Fraction des poids conservés"""
    target_density: float = Field(..., gt=0, le=1)

    class Config:
        frozen = True


class RlcToken(NamedTuple):
    """run zéros (5 bits) suivis de value (16 bits signés)"""
    run: int
    value: int


class RlcStream(BaseModel):
    element_count: int = Field(..., ge=0)
    tokens: List[RlcToken] = []
    # le dernier jeton ne porte que des zéros de fin
    terminal: bool = False

    class Config:
        allow_mutation = False


class TechniqueSet(BaseModel):
    quantization: Optional[QuantizationSpec] = None
    pruning: Optional[PruningSpec] = None
    compression: bool = False
    dataflow_multiplier: Optional[float] = None

    @validator("dataflow_multiplier")
    def check_dataflow(cls, v):
        if v is not None and not DATAFLOW_RANGE[0] <= v <= DATAFLOW_RANGE[1]:
            raise ValueError(f"dataflow multiplier must lie in [{DATAFLOW_RANGE[0]}, {DATAFLOW_RANGE[1]}], got {v}")
        return v

    @property
    def is_empty(self) -> bool:
        return (self.quantization is None and self.pruning is None
                and not self.compression and self.dataflow_multiplier is None)

    class Config:
        frozen = True


class QuantizedTensor(BaseModel):
    """Résultat d'une quantification: codes signés, valeurs reconstruites, erreur max"""
    codes: np.ndarray
    values: np.ndarray
    bits: int
    mode: str
    step: float = 0.0
    max_abs_error: float = 0.0

    @property
    def stored_bytes(self) -> int:
        return -(-self.codes.size * self.bits // 8)

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False
