"""Registry of the implemented reductions, keyed by tag."""
from __future__ import annotations

from .base import UniquenessFailure
from .connectivity import (BipartitenessToStconn, CcViaStconn, ListRankingViaOrd, MincutViaCc,
                           MsfViaStconn, OrdToCycles, StconnToBipartiteness)
from .paths import (ApspViaSp, SpToBetweenness, SpToDiameter, SpToMedian, SpToRadius, SpToStreach,
                    StreachToSp, betweenness_promise)
from .core import Outcome, Reduction, Run, execute, oracle_solver, run_reduction

_CLASSES = (OrdToCycles, StconnToBipartiteness, BipartitenessToStconn, ListRankingViaOrd,
            CcViaStconn, MsfViaStconn, MincutViaCc, StreachToSp, SpToStreach, ApspViaSp,
            SpToDiameter, SpToRadius, SpToMedian, SpToBetweenness)

REDUCTIONS: dict[str, type[Reduction]] = {c.tag: c for c in _CLASSES}


def get(tag: str, **options) -> Reduction:
    try:
        return REDUCTIONS[tag](**options)
    except KeyError:
        raise KeyError(f"unknown reduction {tag!r}; choose from {', '.join(REDUCTIONS)}") from None


__all__ = ["REDUCTIONS", "Outcome", "Reduction", "Run", "UniquenessFailure", "betweenness_promise", "execute", "get",
           "oracle_solver", "run_reduction"]
