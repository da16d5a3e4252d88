"""Compteur d'opérations instrumenté.

Chaque étape des moteurs HOG et CNN incrémente le compteur du nombre exact
d'évènements arithmétiques qu'elle exécute. Les compteurs sont accumulés par
worker puis sommés, l'ordre de fusion n'a donc aucun effet sur le résultat.
"""
from dataclasses import dataclass, fields
from typing import Iterable

from models.workload_models import OpCountReport


@dataclass
class OpCounter:
    macs: int = 0
    additions: int = 0
    multiplications: int = 0
    comparisons: int = 0
    divisions: int = 0
    excluded: int = 0

    def add(self, macs: int = 0, additions: int = 0, multiplications: int = 0,
            comparisons: int = 0, divisions: int = 0, excluded: int = 0) -> "OpCounter":
        if min(macs, additions, multiplications, comparisons, divisions, excluded) < 0:
            raise ValueError("op counts are monotone, negative increments are rejected")
        self.macs += int(macs)
        self.additions += int(additions)
        self.multiplications += int(multiplications)
        self.comparisons += int(comparisons)
        self.divisions += int(divisions)
        self.excluded += int(excluded)
        return self

    def merge(self, other: "OpCounter") -> "OpCounter":
        return self.add(**{f.name: getattr(other, f.name) for f in fields(other)})

    @classmethod
    def sum(cls, counters: Iterable["OpCounter"]) -> "OpCounter":
        total = cls()
        for counter in counters:
            total.merge(counter)
        return total

    @property
    def total_ops(self) -> int:
        return 2 * self.macs + self.additions + self.multiplications + self.comparisons + self.divisions

    def report(self, pixels: int) -> OpCountReport:
        return OpCountReport(
            macs=self.macs,
            additions=self.additions,
            multiplications=self.multiplications,
            comparisons=self.comparisons,
            divisions=self.divisions,
            pixels=pixels,
            excluded_ops=self.excluded,
        )
