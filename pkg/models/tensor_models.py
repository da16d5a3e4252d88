from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, Field, root_validator


class FixedPointTensor(BaseModel):
    """Tenseur (C, H, W) en complément à deux, value_bits bits dont frac_bits fractionnaires"""
    samples: np.ndarray
    value_bits: int = Field(16, ge=1, le=16)
    frac_bits: int = Field(8, ge=0)

    @root_validator(skip_on_failure=True)
    def check_range(cls, values):
        samples = values["samples"]
        bits = values["value_bits"]
        if samples.ndim != 3:
            raise ValueError("samples must have shape (channels, height, width)")
        if values["frac_bits"] >= bits:
            raise ValueError("frac_bits must be smaller than value_bits")
        samples = samples.astype(np.int64, copy=False)
        low, high = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
        if samples.size and (samples.min() < low or samples.max() > high):
            raise ValueError(f"samples outside the {bits}-bit two's-complement range")
        values["samples"] = samples
        return values

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.samples.shape)

    @property
    def sparsity(self) -> float:
        if self.samples.size == 0:
            return 0.0
        return float(np.count_nonzero(self.samples == 0)) / self.samples.size

    def to_real(self) -> np.ndarray:
        return self.samples.astype(np.float64) / (1 << self.frac_bits)

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False


class WeightSet(BaseModel):
    """Poids (out, in/groups, kh, kw) et biais par couche de convolution, en virgule fixe"""
    architecture: str
    value_bits: int = 16
    frac_bits: int = 8
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @root_validator(skip_on_failure=True)
    def check_layers(cls, values):
        if len(values["weights"]) != len(values["biases"]):
            raise ValueError("weights and biases must have one entry per conv layer")
        values["weights"] = [w.astype(np.int64, copy=False) for w in values["weights"]]
        values["biases"] = [b.astype(np.int64, copy=False) for b in values["biases"]]
        return values

    @property
    def total_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    @property
    def nonzero_count(self) -> int:
        return (sum(int(np.count_nonzero(w)) for w in self.weights)
                + sum(int(np.count_nonzero(b)) for b in self.biases))

    def flat(self) -> np.ndarray:
        """Tous les paramètres, couche par couche, poids puis biais"""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    def with_flat(self, flat: np.ndarray) -> "WeightSet":
        weights, biases, offset = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[offset:offset + w.size].reshape(w.shape))
            offset += w.size
            biases.append(flat[offset:offset + b.size].reshape(b.shape))
            offset += b.size
        return WeightSet(architecture=self.architecture, value_bits=self.value_bits,
                         frac_bits=self.frac_bits, weights=weights, biases=biases)

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False


class LayerOutput(BaseModel):
    index: int
    name: str
    tensor: FixedPointTensor
    sparsity: float = Field(..., ge=0, le=1)
    macs: int = Field(0, ge=0)

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False
