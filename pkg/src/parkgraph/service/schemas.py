from typing import List, Literal

from pydantic import BaseModel, Field


class StepForecast(BaseModel):
    offset_min: int = Field(..., description="minutes after the last observed frame")
    clusters: List[float] = Field(..., description="expected free lots per cluster")
    city_total: float


class PredictResponse(BaseModel):
    model: str
    generated_at: str
    steps: List[StepForecast]


class HealthResponse(BaseModel):
    status: Literal["warming", "ready"]
    buffer_steps: int
    model: str


class ErrorResponse(BaseModel):
    detail: str
    buffer_steps: int | None = None
    required_steps: int | None = None
