import logging
from typing import Any, Dict, List, Optional

from fastapi import APIRouter, File, Form, HTTPException, UploadFile
from pydantic import BaseModel, ValidationError

from models.errors import AnalyzerError
from models.workload_models import HogConfig, OpCountReport
from utils.hog import extract, features_document
from utils.pgm import parse_pgm
from utils.workload import get_workload, hog_gop_per_mpixel

logger = logging.getLogger(__name__)

router = APIRouter()


class FeatureMapSummary(BaseModel):
    level: int
    scale: float
    cell_size: int
    cells_y: int
    cells_x: int


class ExtractResponse(BaseModel):
    width: int
    height: int
    maps: List[FeatureMapSummary]
    ops: OpCountReport
    analytical_match: bool
    features: Optional[Dict[str, Any]] = None


@router.post("/extract", response_model=ExtractResponse)
async def extract_features(
    file: UploadFile = File(...),
    cell_size: Optional[int] = Form(None),
    num_bins: Optional[int] = Form(None),
    levels: Optional[int] = Form(None),
    include_features: bool = Form(False),
):
    """Extraction HOG instrumentée sur une image PGM (P5) envoyée en multipart"""
    contents = await file.read()
    logger.info(f"PGM reçu: {file.filename}, {len(contents)} octets")
    try:
        overrides = {key: value for key, value in
                     (("cell_size", cell_size), ("num_bins", num_bins), ("levels", levels)) if value is not None}
        config = HogConfig(**{**get_workload("hog").dict(), **overrides})
        image = parse_pgm(contents)
        maps, report = extract(image, config)
    except ValidationError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except AnalyzerError as e:
        raise HTTPException(status_code=400, detail=str(e))

    analytical = hog_gop_per_mpixel(config, (image.height, image.width))
    return ExtractResponse(
        width=image.width,
        height=image.height,
        maps=[FeatureMapSummary(level=m.level, scale=m.scale, cell_size=m.cell_size,
                                cells_y=m.cells_y, cells_x=m.cells_x) for m in maps],
        ops=report,
        analytical_match=analytical == report,
        features=features_document(maps, config) if include_features else None,
    )
