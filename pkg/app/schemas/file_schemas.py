"""
JSON file schemas: model files and result files
"""
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

FORMAT_VERSION = "1.0"

Family = Literal["feedforward", "gcn", "tensor"]
ResultKind = Literal["linear_model", "region", "tree", "theory", "attribution", "census", "verify_report"]


class ArrayPayload(BaseModel):
    """Numeric array as nested row-major lists with its declared shape"""

    shape: List[int] = Field(..., min_length=1)
    data: Any


class FeedforwardLayerFile(BaseModel):
    weight: ArrayPayload
    bias: ArrayPayload


class GcnLayerFile(BaseModel):
    operator: ArrayPayload
    weight: ArrayPayload
    bias: ArrayPayload


class TensorLayerFile(BaseModel):
    modes: List[ArrayPayload] = Field(..., min_length=1)
    bias: ArrayPayload


class ModelFile(BaseModel):
    format_version: str
    family: Family
    layers: List[Dict[str, Any]] = Field(..., min_length=1)
    metadata: Dict[str, Any] = {}


class Provenance(BaseModel):
    model_hash: Optional[str] = None
    input: Optional[Any] = None
    seed: Optional[int] = None
    tool_version: str
    created_at: datetime


class ResultFile(BaseModel):
    kind: ResultKind
    payload: Dict[str, Any]
    provenance: Provenance
