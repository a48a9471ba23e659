"""HTTP facade over one workspace.

Every route body is synchronous on purpose: the underlying flows are
CPU-bound numpy work, and FastAPI moves sync handlers off the event
loop into its thread pool.  Domain errors surface as JSON bodies that
carry the process exit code a CLI should use, so the thin client can
translate without parsing messages.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse

from ..errors import ProvmarkError
from ..workspace import Workspace
from . import schemas

# domain exit code -> HTTP status
_STATUS = {2: 409, 3: 409, 4: 422, 5: 409}


def create_app(workspace_root: str | Path) -> FastAPI:
    workspace = Workspace(workspace_root)
    app = FastAPI(title="provmark", description="watermark provenance service")
    app.state.workspace = workspace

    @app.exception_handler(ProvmarkError)
    async def _domain_error(_: Request, exc: ProvmarkError):
        body = schemas.ErrorBody(error=str(exc), exit_code=exc.exit_code)
        return JSONResponse(status_code=_STATUS.get(exc.exit_code, 400),
                            content=body.model_dump())

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(
            status="ok", workspace=str(workspace.root),
            calibrated=workspace.is_calibrated(),
            registered_users=workspace.keystore().user_ids())

    @app.post("/register", response_model=schemas.RegisterResponse)
    def register(req: schemas.RegisterRequest):
        return workspace.register_user(req.user_id, seed=req.seed)

    @app.post("/generate", response_model=schemas.GenerateResponse)
    def generate(req: schemas.GenerateRequest):
        return workspace.generate(req.user_id, n=req.n,
                                  timestamps=req.timestamps,
                                  preview=req.preview)

    @app.post("/calibrate", response_model=schemas.CalibrateResponse)
    def calibrate(req: schemas.CalibrateRequest):
        return workspace.calibrate(req.user_id, seed=req.seed)

    @app.post("/verify", response_model=schemas.VerifyResponse)
    def verify(req: schemas.VerifyRequest):
        return workspace.verify(req.path, user_id=req.user_id,
                                from_preview=req.from_preview)

    @app.post("/localize", response_model=schemas.LocalizeResponse)
    def localize(req: schemas.LocalizeRequest):
        return workspace.localize(req.path, user_id=req.user_id)

    @app.post("/attack", response_model=schemas.AttackResponse)
    def attack(req: schemas.AttackRequest):
        return workspace.attack_bench(req.user_id, seed=req.seed,
                                      include_optimization=req.include_optimization,
                                      csv_path=req.csv_path)

    @app.post("/localization-bench")
    def localization_bench(req: schemas.LocalizationBenchRequest):
        return workspace.localization_bench(req.user_id, seed=req.seed)

    @app.get("/theory")
    def theory(m: float = Query(default=1.1),
               q: float = Query(default=0.9),
               n_trials: int = Query(default=4000, ge=1),
               seed: int = Query(default=0)):
        return workspace.theory(m=m, q=q, n_trials=n_trials, seed=seed)

    return app
