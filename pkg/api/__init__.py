# Ce fichier initialise le package api
# Un routeur par module de calcul

from .workload_routes import router as workload_router
from .hog_routes import router as hog_router
from .cnn_routes import router as cnn_router
from .energy_routes import router as energy_router
from .verify_routes import router as verify_router
