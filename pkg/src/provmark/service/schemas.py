"""Request and response bodies of the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class RegisterRequest(BaseModel):
    user_id: str = Field(min_length=1)
    seed: int | None = None


class RegisterResponse(BaseModel):
    user_id: str
    fingerprint: str
    created_at: int
    registered_users: int


class GenerateRequest(BaseModel):
    user_id: str = Field(min_length=1)
    n: int = Field(default=1, ge=1, le=10_000)
    timestamps: list[int] | None = None
    preview: bool = False


class GenerateResponse(BaseModel):
    user_id: str
    paths: list[str]
    timestamps: list[int]


class CalibrateRequest(BaseModel):
    user_id: str = Field(min_length=1)
    seed: int = 0


class CalibrateResponse(BaseModel):
    user_id: str
    seed: int
    ks_stat: float
    ks_pvalue: float
    abnormal_rate: float
    tau_vanilla: float
    valid_moment_mean: float
    valid_moment_max: float
    invalid_moment_min: float
    fpr_invalid: float
    fpr_plain: float
    ownership_pool_total: int
    ownership_eigenvalues: list[float]
    out_of_range_fraction: float


class VerifyRequest(BaseModel):
    path: str
    user_id: str | None = None
    from_preview: bool = False


class VerifyResponse(BaseModel):
    path: str
    user_id: str
    timestamp: int
    second_moment: float
    tau_vanilla: float
    vanilla_pass: bool
    d2_detection: float
    tau_sq_detection: float
    distance_detection: float
    d2_ownership: float
    tau_sq_ownership: float
    distance_ownership: float
    classification: str
    ownership_affirmed: bool
    attack_flagged: bool


class LocalizeRequest(BaseModel):
    path: str
    user_id: str | None = None


class LocalizeResponse(BaseModel):
    path: str
    user_id: str
    flagged: bool
    tampered_pixels: int
    mask: list[list[int]]


class AttackRequest(BaseModel):
    user_id: str = Field(min_length=1)
    seed: int = 0
    include_optimization: bool = True
    csv_path: str | None = None


class AttackResponse(BaseModel):
    summary: dict
    csv_path: str
    n_rows: int


class LocalizationBenchRequest(BaseModel):
    user_id: str = Field(min_length=1)
    seed: int = 0


class HealthResponse(BaseModel):
    status: str
    workspace: str
    calibrated: bool
    registered_users: list[str]


class ErrorBody(BaseModel):
    error: str
    exit_code: int
