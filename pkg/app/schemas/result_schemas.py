"""
Pydantic models for decomposition results: regions, trees, theories, attributions
"""
from typing import Dict, FrozenSet, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from app.schemas.network_schemas import (
    ActivationPattern,
    ArrayModel,
    HalfSpace,
    LocalLinearModel,
    Matrix,
    Vector,
)
from app.utils.errors import ShapeError


# Region enumeration
class RegionWitness(ArrayModel):
    pattern: ActivationPattern
    witness: Vector


class RegionCensus(ArrayModel):
    strategy: Literal["sample", "exhaustive", "grid"]
    regions: Tuple[RegionWitness, ...]
    lp_solves: int = 0
    rejected_witnesses: int = 0

    def pattern_keys(self) -> set:
        return {region.pattern.key() for region in self.regions}


# Multivariate regression tree
class MrtLeaf(ArrayModel):
    model: LocalLinearModel
    feasible: Optional[bool] = None  # None until a feasibility check ran


class MrtSplit(ArrayModel):
    layer: int
    neuron: int
    condition: HalfSpace  # true branch iff condition holds (unit active)
    true_child: "MrtNode"
    false_child: "MrtNode"


MrtNode = Union[MrtSplit, MrtLeaf]
MrtSplit.model_rebuild()


class MultivariateRegressionTree(ArrayModel):
    root: MrtNode
    input_dim: int
    output_dim: int


class TreeStats(BaseModel):
    mode: Literal["materialize", "lazy"]
    hidden_neurons: int
    depth: int
    leaves: int
    feasible_leaves: Optional[int] = None


# Propositional export
class TheoryAtom(ArrayModel):
    name: str
    layer: int
    neuron: int
    prefix: str  # bits of earlier layers the condition depends on
    normal: Vector
    offset: float

    def halfspace(self) -> HalfSpace:
        return HalfSpace(normal=self.normal, offset=self.offset)


class TheoryTerm(BaseModel):
    region_id: str
    literals: List[str]  # atom name, "~" prefix for negation


class TheoryExport(ArrayModel):
    atoms: Tuple[TheoryAtom, ...]
    terms: Tuple[TheoryTerm, ...]


# SHAP
class CoalitionMask(BaseModel):
    included: FrozenSet[int] = frozenset()

    @model_validator(mode="after")
    def _check_indices(self):
        if any(index < 0 for index in self.included):
            raise ShapeError("coalition indices must be non-negative")
        return self


class Attribution(ArrayModel):
    values: Matrix  # n features x m outputs
    input: Vector
    baseline: Vector
    mode: Literal["local", "global", "bruteforce"]
    approximate: bool = False
    stats: Dict[str, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.values.shape[0] != self.input.shape[0] or self.input.shape != self.baseline.shape:
            raise ShapeError(
                f"attribution has {self.values.shape[0]} rows for input {self.input.shape} "
                f"and baseline {self.baseline.shape}"
            )
        return self

    def totals(self) -> np.ndarray:
        return self.values.sum(axis=0)


# Verification
class PropertyResult(BaseModel):
    name: str
    passed: bool
    checked: int
    max_error: float = 0.0
    skipped: bool = False
    detail: str = ""


class VerifyReport(BaseModel):
    family: str
    samples: int
    seed: int
    tolerance: float
    properties: List[PropertyResult]

    @property
    def passed(self) -> bool:
        return all(p.passed or p.skipped for p in self.properties)
