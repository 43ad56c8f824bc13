"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

MAX_GROUP_SIZE = 512


class RewardConfigOverrides(BaseModel):
    tau_c: Optional[float] = None
    tau_p: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    epsilon: Optional[float] = None
    strict_m: Optional[bool] = None


class RewardRequest(BaseModel):
    reference: str
    candidates: list[str] = Field(min_length=1)
    config: Optional[RewardConfigOverrides] = None


class CandidateReward(BaseModel):
    r_sim: float
    r_prov: float
    r_total: float


class RewardResponse(BaseModel):
    per_candidate: list[CandidateReward]
    advantages: list[float]
    timing_ms: float


class ValidateRequest(BaseModel):
    text: str
    documents: list[list[str]] = Field(min_length=1)
    mode: Literal["strict", "lenient"] = "lenient"


class ViolationModel(BaseModel):
    kind: str
    segment_index: Optional[int]
    detail: str


class ValidationReportModel(BaseModel):
    valid: bool
    violations: list[ViolationModel]
    warnings: list[ViolationModel]


class InstanceModel(BaseModel):
    id: str
    question: str
    documents: list[list[str]] = Field(min_length=1)
    reference: str


class PredictionModel(BaseModel):
    id: str
    output: str


class EvaluateRequest(BaseModel):
    instances_ref: list[InstanceModel] = Field(min_length=1)
    predictions: list[PredictionModel] = Field(min_length=1)
    aggregate: Literal["mean", "global"] = "mean"


class PrfModel(BaseModel):
    precision: float
    recall: float
    f1: float


class EvalReportModel(BaseModel):
    rouge_l: float
    bleu: float
    provenance: PrfModel
    per_relation: dict[str, PrfModel]
    format_validity_rate: float
    plug_in_scores: dict[str, float]


class EmbedderHealth(BaseModel):
    kind: str
    reachable: bool


class HealthResponse(BaseModel):
    status: str
    embedder: EmbedderHealth
