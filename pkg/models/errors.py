"""Hiérarchie d'erreurs de l'analyseur.

Toutes les erreurs héritent de ValueError pour rester compatibles avec les
appelants qui attrapent déjà ValueError (validation pydantic, parsing).
"""


class AnalyzerError(ValueError):
    """Erreur de base levée par les modules de calcul"""


class ShapeError(AnalyzerError):
    """Chaînage de couches invalide (canaux, dimensions non entières, dimensions nulles)"""

    def __init__(self, layer: str, message: str):
        self.layer = layer
        super().__init__(f"layer '{layer}': {message}")


class ConfigError(AnalyzerError):
    """Configuration HOG ou descripteur invalide"""


class ImageFormatError(AnalyzerError):
    """Fichier PGM illisible (magic, maxval, dimensions)"""


class ImageSizeError(AnalyzerError):
    """Image trop petite pour l'étape demandée"""


class WeightFileError(AnalyzerError):
    """Manifeste de poids incohérent avec l'architecture"""


class DecodeError(AnalyzerError):
    """Flux RLC mal formé"""


class DatasetError(AnalyzerError):
    """Jeu de mesures ou de compromis incomplet"""


class TechniqueError(AnalyzerError):
    """Chaîne de techniques ou multiplicateur hors bornes"""
