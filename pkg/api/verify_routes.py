from typing import List, Optional

from fastapi import APIRouter, HTTPException, Query
from pydantic import BaseModel

from models.report_models import VerificationCheck
from utils.verification import GROUPS, run_verification

router = APIRouter()


class VerificationResponse(BaseModel):
    passed: bool
    checks: List[VerificationCheck]


@router.get("/", response_model=VerificationResponse)
def verify(group: Optional[List[str]] = Query(None), seed: int = Query(0)):
    """Matrice de vérification complète (ou restreinte à quelques groupes)"""
    unknown = [name for name in group or [] if name not in GROUPS]
    if unknown:
        raise HTTPException(status_code=404, detail=f"Groupes inconnus: {', '.join(unknown)}")
    rows = run_verification(group, seed=seed)
    return VerificationResponse(passed=not any(row.failed for row in rows), checks=rows)
