import numpy as np
from pydantic import BaseModel, Field, root_validator

# bits fractionnaires maximaux d'un niveau de pyramide rééchantillonné
MAX_FRAC_BITS = 8


class GrayImage(BaseModel):
    """Image en niveaux de gris, stockée ligne par ligne (height, width).

    frac_bits = 0 : échantillons 8 bits. Un niveau rééchantillonné garde
    frac_bits bits fractionnaires sans arrondi (valeur = samples / 2**frac_bits).
    """
    samples: np.ndarray
    frac_bits: int = Field(0, ge=0, le=MAX_FRAC_BITS)

    @root_validator(skip_on_failure=True)
    def check_samples(cls, values):
        v = values["samples"]
        frac_bits = values["frac_bits"]
        if v.ndim != 2:
            raise ValueError("samples must be a 2-D array (height, width)")
        if frac_bits == 0 and v.dtype == np.uint8:
            return values
        high = 255 << frac_bits
        if v.size and (v.min() < 0 or v.max() > high):
            raise ValueError(f"samples must lie in [0, {high}]")
        values["samples"] = v.astype(np.uint8 if frac_bits == 0 else np.int64)
        return values

    @property
    def height(self) -> int:
        return int(self.samples.shape[0])

    @property
    def width(self) -> int:
        return int(self.samples.shape[1])

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False


class GradientField(BaseModel):
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    orientation_bin: np.ndarray
    num_bins: int

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False


class CellHistograms(BaseModel):
    """Grille (cells_y, cells_x, num_bins) d'accumulateurs entiers"""
    bins: np.ndarray
    cell_size: int

    @property
    def cells_y(self) -> int:
        return int(self.bins.shape[0])

    @property
    def cells_x(self) -> int:
        return int(self.bins.shape[1])

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False


class HogFeatureMap(BaseModel):
    """Vecteurs normalisés par cellule: (cells_y, cells_x, 4 * num_bins), ordre [facteur][bin]"""
    level: int
    scale: float
    cell_size: int
    features: np.ndarray

    @property
    def cells_y(self) -> int:
        return int(self.features.shape[0])

    @property
    def cells_x(self) -> int:
        return int(self.features.shape[1])

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False
