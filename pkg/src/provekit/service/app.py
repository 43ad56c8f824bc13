"""FastAPI reward service wrapping the core library.

Endpoints call the same library functions as the CLI, so results agree
bit-for-bit under the local embedder. Error mapping: schema problems
are 400 with field paths, annotated-text parse failures are 422 with
offset detail, and an unreachable remote embedder is 503.
"""

from __future__ import annotations

import time
from dataclasses import replace

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from provekit import __version__
from provekit.corpus import Instance, Prediction, DocumentSet, instance_from_dict
from provekit.errors import ParseError, RemoteUnavailableError, SchemaError
from provekit.metrics import evaluate_corpus
from provekit.reporting import eval_report_to_dict, validation_report_to_dict
from provekit.reward import DEFAULT_CONFIG, RewardConfig, score_group
from provekit.embedding import EmbeddingProvider, LocalHashedTfEmbedder
from provekit.syntax import parse_annotated, validate
from provekit.service.schemas import (
    MAX_GROUP_SIZE,
    EvaluateRequest,
    EvalReportModel,
    HealthResponse,
    RewardRequest,
    RewardResponse,
    ValidateRequest,
    ValidationReportModel,
)

MAX_BODY_BYTES = 8 * 1024 * 1024


def _parse_or_422(text: str, mode: str, where: str):
    try:
        return parse_annotated(text, mode=mode)
    except ParseError as exc:
        raise HTTPException(
            status_code=422,
            detail={"where": where, "position": exc.position, "reason": exc.reason},
        )


def create_app(
    embedder: EmbeddingProvider | None = None,
    config: RewardConfig | None = None,
) -> FastAPI:
    provider = embedder if embedder is not None else LocalHashedTfEmbedder()
    base_config = config if config is not None else DEFAULT_CONFIG

    app = FastAPI(title="provekit reward service", version=__version__)

    @app.exception_handler(RequestValidationError)
    async def schema_error_handler(request: Request, exc: RequestValidationError):
        fields = [
            ".".join(str(part) for part in err.get("loc", ()) if part != "body")
            for err in exc.errors()
        ]
        return JSONResponse(
            status_code=400,
            content={"error": "schema", "fields": fields, "detail": exc.errors()},
        )

    @app.exception_handler(RemoteUnavailableError)
    async def embedder_down_handler(request: Request, exc: RemoteUnavailableError):
        return JSONResponse(status_code=503, content={"error": "embedder", "detail": str(exc)})

    @app.middleware("http")
    async def cap_body_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and length.isdigit() and int(length) > MAX_BODY_BYTES:
            return JSONResponse(
                status_code=413,
                content={"error": "request too large", "limit_bytes": MAX_BODY_BYTES},
            )
        return await call_next(request)

    @app.post("/v1/reward", response_model=RewardResponse)
    def reward_endpoint(request: RewardRequest) -> RewardResponse:
        if len(request.candidates) > MAX_GROUP_SIZE:
            raise HTTPException(
                status_code=400,
                detail=f"candidate group exceeds {MAX_GROUP_SIZE}",
            )
        cfg = base_config
        if request.config is not None:
            overrides = {
                k: v for k, v in request.config.model_dump().items() if v is not None
            }
            if overrides:
                try:
                    cfg = replace(base_config, **overrides)
                except ValueError as exc:
                    raise HTTPException(status_code=400, detail=str(exc))
        reference = _parse_or_422(request.reference, "strict", "reference")
        candidates = [
            _parse_or_422(text, "lenient", f"candidates[{i}]")
            for i, text in enumerate(request.candidates)
        ]
        started = time.perf_counter()
        breakdowns, advantages = score_group(reference, candidates, provider, cfg)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        return RewardResponse(
            per_candidate=[
                {"r_sim": b.r_sim, "r_prov": b.r_prov, "r_total": b.r_total}
                for b in breakdowns
            ],
            advantages=advantages,
            timing_ms=elapsed_ms,
        )

    @app.post("/v1/validate", response_model=ValidationReportModel)
    def validate_endpoint(request: ValidateRequest) -> ValidationReportModel:
        try:
            docs = DocumentSet.from_lists(request.documents)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=f"documents: {exc}")
        answer = _parse_or_422(request.text, request.mode, "text")
        report = validate(answer, docs)
        return ValidationReportModel(**validation_report_to_dict(report))

    @app.post("/v1/evaluate", response_model=EvalReportModel)
    def evaluate_endpoint(request: EvaluateRequest) -> EvalReportModel:
        instances: list[Instance] = []
        for i, model in enumerate(request.instances_ref):
            try:
                instances.append(instance_from_dict(model.model_dump(), line=i))
            except SchemaError as exc:
                raise HTTPException(
                    status_code=400,
                    detail={"field": f"instances_ref[{i}].{exc.field or ''}", "reason": str(exc)},
                )
        predictions = [Prediction(p.id, p.output) for p in request.predictions]
        try:
            evaluation = evaluate_corpus(
                instances, predictions, aggregate=request.aggregate
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return EvalReportModel(**eval_report_to_dict(evaluation.report))

    @app.get("/healthz", response_model=HealthResponse)
    def health_endpoint() -> HealthResponse:
        reachable = True
        try:
            provider.embed_batch(["health probe"])
        except Exception:
            reachable = False
        return HealthResponse(
            status="ok" if reachable else "degraded",
            embedder={"kind": provider.kind, "reachable": reachable},
        )

    return app
