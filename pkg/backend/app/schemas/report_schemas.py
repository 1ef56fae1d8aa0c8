from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class CVTraceEntry(BaseModel):
    stage: str
    parameters: Dict[str, float]
    fold_scores: List[float]
    mean_score: float
    selected: bool


class StudyFitReport(BaseModel):
    study: int
    method: str
    selected_lambda: float = Field(gt=0)
    selected_kappa: Optional[float] = Field(default=None, ge=0)
    selected_kappa_cross: Optional[float] = Field(default=None, ge=0)
    objective: Optional[float] = None
    iterations: Optional[int] = None
    converged: Optional[bool] = None
    agreement_with_sepl: Optional[float] = Field(default=None, ge=0, le=1)
    cv_trace: List[CVTraceEntry] = []


class FitReport(BaseModel):
    method: str
    kernel: str
    studies: List[StudyFitReport]


class ExperimentRow(BaseModel):
    method: str
    study: int
    metric: str
    rmse: float
    mean_bias: float
    sd: float
    q025: float
    q975: float


class FailureRecord(BaseModel):
    replication: int
    seed: int
    error: str


class ExperimentDocument(BaseModel):
    scenario: Dict
    replications_requested: int
    replications_completed: int
    failures: List[FailureRecord]
    rows: List[ExperimentRow]
