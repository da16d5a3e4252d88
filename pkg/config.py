import os
import logging
from pathlib import Path
from pydantic import BaseSettings, validator
from typing import List, Union
from dotenv import load_dotenv

# Charger les variables d'environnement du fichier .env
load_dotenv()

BASE_DIR = Path(__file__).resolve().parent

LOG_LEVELS = ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG")


class Settings(BaseSettings):
    # Mode de déploiement
    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "development")  # development, production

    # Données embarquées (descripteurs, mesures des puces, compromis)
    DATA_DIR: str = os.getenv("DATA_DIR", str(BASE_DIR / "data"))

    # Répertoire des fixtures (images PGM, fichiers dorés)
    FIXTURE_DIR: str = os.getenv("FIXTURE_DIR", str(BASE_DIR / "tests" / "fixtures"))

    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Parallélisme interne des moteurs de calcul
    CNN_WORKERS: int = int(os.getenv("CNN_WORKERS", "4"))
    HOG_WORKERS: int = int(os.getenv("HOG_WORKERS", "4"))

    # Écart relatif toléré entre budget de surface dérivé et publié
    AREA_BUDGET_TOLERANCE: float = float(os.getenv("AREA_BUDGET_TOLERANCE", "0.25"))

    # CORS settings - valeur par défaut pour accepter les requêtes locales
    CORS_ORIGINS: Union[List[str], str] = "*"

    @validator("LOG_LEVEL", pre=True)
    def parse_log_level(cls, v):
        level = str(v).strip().upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"niveau de log inconnu: {v}")
        return level

    @validator("CNN_WORKERS", "HOG_WORKERS")
    def check_workers(cls, v):
        if v < 1:
            raise ValueError("le nombre de workers doit être >= 1")
        return v

    @validator("AREA_BUDGET_TOLERANCE")
    def check_area_tolerance(cls, v):
        if not 0 < v < 1:
            raise ValueError("la tolérance de surface doit être dans ]0, 1[")
        return v

    @validator("CORS_ORIGINS", pre=True)
    def parse_cors_origins(cls, v):
        # Si c'est déjà une liste, la renvoyer telle quelle
        if isinstance(v, list):
            return v

        # Si c'est une chaîne "*", autoriser toutes les origines
        if v == "*":
            return ["*"]

        # Sinon, diviser la chaîne en liste
        if isinstance(v, str):
            origins = [origin.strip() for origin in v.split(",") if origin.strip()]
            return origins or ["*"]

        return ["*"]

    @property
    def data_path(self) -> Path:
        return Path(self.DATA_DIR)

    @property
    def fixture_path(self) -> Path:
        return Path(self.FIXTURE_DIR)

    class Config:
        env_file = ".env"
        env_file_encoding = 'utf-8'
        # Rendre le chargement des variables d'environnement insensible à la casse
        case_sensitive = False


# Créer une instance de Settings
try:
    settings = Settings()
except Exception as e:
    logging.getLogger(__name__).error(f"Erreur lors du chargement des paramètres: {e}")

    # Valeurs par défaut en cas d'erreur
    class DefaultSettings:
        ENVIRONMENT = "development"
        DATA_DIR = str(BASE_DIR / "data")
        FIXTURE_DIR = str(BASE_DIR / "tests" / "fixtures")
        LOG_LEVEL = "INFO"
        CNN_WORKERS = 4
        HOG_WORKERS = 4
        AREA_BUDGET_TOLERANCE = 0.25
        CORS_ORIGINS = ["*"]  # Autoriser toutes les origines par défaut

        @property
        def data_path(self) -> Path:
            return Path(self.DATA_DIR)

        @property
        def fixture_path(self) -> Path:
            return Path(self.FIXTURE_DIR)

    settings = DefaultSettings()
