import math
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, root_validator, validator

from models.errors import ShapeError

DEFAULT_PYRAMID_RATIO = 2 ** (-1 / 10)


class ConvLayerShape(BaseModel):
    """Couche de convolution (filtres 3D appliqués à la carte d'entrée)"""
    kind: Literal["conv"] = "conv"
    name: str
    in_channels: int = Field(..., ge=1)
    out_channels: int = Field(..., ge=1)
    kernel_h: int = Field(..., ge=1)
    kernel_w: int = Field(..., ge=1)
    stride: int = Field(1, ge=1)
    padding: int = Field(0, ge=0)
    groups: int = Field(1, ge=1)

    @root_validator(skip_on_failure=True)
    def check_groups(cls, values):
        groups = values["groups"]
        if values["in_channels"] % groups or values["out_channels"] % groups:
            raise ValueError(f"channels of '{values['name']}' not divisible by groups={groups}")
        return values

    def output_size(self, input_h: int, input_w: int) -> Tuple[int, int]:
        span_h = input_h + 2 * self.padding - self.kernel_h
        span_w = input_w + 2 * self.padding - self.kernel_w
        if span_h < 0 or span_w < 0:
            raise ShapeError(self.name, f"kernel {self.kernel_h}x{self.kernel_w} larger than padded input {input_h}x{input_w}")
        if span_h % self.stride or span_w % self.stride:
            raise ShapeError(
                self.name,
                f"non-integer output size for input {input_h}x{input_w} "
                f"(kernel {self.kernel_h}x{self.kernel_w}, stride {self.stride}, padding {self.padding})",
            )
        return span_h // self.stride + 1, span_w // self.stride + 1

    class Config:
        frozen = True


class PoolLayerShape(BaseModel):
    """Max pooling, nécessaire pour enchaîner les dimensions spatiales"""
    kind: Literal["pool"] = "pool"
    name: str = "pool"
    window: int = Field(..., ge=1)
    stride: int = Field(..., ge=1)
    padding: int = Field(0, ge=0)

    def output_size(self, input_h: int, input_w: int) -> Tuple[int, int]:
        out_h = (input_h + 2 * self.padding - self.window) // self.stride + 1
        out_w = (input_w + 2 * self.padding - self.window) // self.stride + 1
        if input_h + 2 * self.padding < self.window or input_w + 2 * self.padding < self.window:
            raise ShapeError(self.name, f"window {self.window} larger than input {input_h}x{input_w}")
        return out_h, out_w

    class Config:
        frozen = True


LayerShape = Union[ConvLayerShape, PoolLayerShape]


class CnnArchitecture(BaseModel):
    """Descripteur d'un extracteur CNN: couches ordonnées et résolution d'entrée"""
    name: str
    input_height: int = Field(..., ge=1)
    input_width: int = Field(..., ge=1)
    input_channels: int = Field(..., ge=1)
    layers: List[LayerShape] = []
    value_bits: int = Field(16, ge=1, le=16)

    @property
    def conv_layers(self) -> List[ConvLayerShape]:
        return [layer for layer in self.layers if isinstance(layer, ConvLayerShape)]

    @property
    def input_pixels(self) -> int:
        return self.input_height * self.input_width

    def weight_count(self, include_bias: bool = True) -> int:
        total = 0
        for layer in self.conv_layers:
            total += layer.out_channels * (layer.in_channels // layer.groups) * layer.kernel_h * layer.kernel_w
            if include_bias:
                total += layer.out_channels
        return total

    class Config:
        frozen = True


class HogConfig(BaseModel):
    """Paramètres du pipeline HOG (cellules, histogrammes, normalisation, pyramide)"""
    cell_size: int = Field(8, ge=1)
    num_bins: int = Field(9, ge=1)
    block_neighborhood: int = 2
    truncation: float = Field(0.2, gt=0, le=1)
    pyramid_ratio: float = Field(DEFAULT_PYRAMID_RATIO, gt=0, lt=1)
    min_level_size: int = Field(16, ge=1)
    levels: Optional[int] = Field(None, ge=1)
    fine_octave: bool = True

    @validator("block_neighborhood")
    def check_block(cls, v):
        if v != 2:
            raise ValueError("only 2x2 block neighbourhoods are supported")
        return v

    @property
    def octave_interval(self) -> int:
        """Nombre de niveaux par octave (10 pour le ratio 2^(-1/10))"""
        return max(1, round(math.log(0.5) / math.log(self.pyramid_ratio)))

    @property
    def fine_cell_size(self) -> Optional[int]:
        if not self.fine_octave or self.cell_size // 2 < 1:
            return None
        return self.cell_size // 2

    class Config:
        frozen = True


class OpCountReport(BaseModel):
    """Décompte d'opérations par catégorie, normalisé en GOP/Mpixel"""
    macs: int = 0
    additions: int = 0
    multiplications: int = 0
    comparisons: int = 0
    divisions: int = 0
    total_ops: int = 0
    pixels: int = Field(..., ge=1)
    gop_per_mpixel: float = 0.0
    # pooling, ReLU et biais: comptés mais hors GOP/Mpixel
    excluded_ops: int = 0

    @root_validator(skip_on_failure=True)
    def derive_totals(cls, values):
        total = (2 * values["macs"] + values["additions"] + values["multiplications"]
                 + values["comparisons"] + values["divisions"])
        values["total_ops"] = total
        values["gop_per_mpixel"] = total / values["pixels"] * 1e-3
        return values

    class Config:
        frozen = True


class LayerTrace(BaseModel):
    index: int
    name: str
    kind: str
    height: int
    width: int
    channels: int


class ShapeTrace(BaseModel):
    """Propagation des dimensions couche par couche"""
    architecture: str
    input_height: int
    input_width: int
    input_channels: int
    layers: List[LayerTrace] = []
