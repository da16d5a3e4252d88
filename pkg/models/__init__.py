# Ce fichier permet de rendre le répertoire 'models' importable
# Il importera les modèles dans la portée du module

from .errors import AnalyzerError
from .workload_models import CnnArchitecture, ConvLayerShape, HogConfig, OpCountReport, PoolLayerShape
from .technique_models import TechniqueSet
from .energy_models import ChipMeasurement, MeasurementSet, ParetoPoint
