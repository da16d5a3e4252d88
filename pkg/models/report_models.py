from typing import Literal, Optional

from pydantic import BaseModel


class VerificationCheck(BaseModel):
    """Une ligne de la matrice de vérification"""
    group: str
    check: str
    expected: str
    observed: str
    deviation: Optional[float] = None
    # advisory: affiché mais sans effet sur le code de sortie
    verdict: Literal["pass", "fail", "advisory"]

    @property
    def failed(self) -> bool:
        return self.verdict == "fail"
