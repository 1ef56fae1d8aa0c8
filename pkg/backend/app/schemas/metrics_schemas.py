from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field


class EstimatorKind(str, Enum):
    IPW = "ipw"
    AIPWE = "aipwe"
    TRUE = "true"


class MetricsRecord(BaseModel):
    value: float
    benefit: float
    estimator: EstimatorKind
    agreement: Optional[float] = Field(default=None, ge=0.0, le=1.0)
