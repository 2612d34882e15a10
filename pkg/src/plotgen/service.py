"""HTTP front of the annotation campaign: task assignment, submission,
stats, preference export, and static hosting for the built UI."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .annotation import AnnotationResponse, Campaign, DuplicateError, ValidationError
from .questions import CHOICE_QUESTION_IDS


def create_app(campaign: Campaign, static_dir: Optional[Path | str] = None) -> FastAPI:
    app = FastAPI(title="plot annotation service")

    @app.get("/api/tasks/next")
    def next_task(annotator: str = Query(..., min_length=1)) -> Response:
        task = campaign.next_task(annotator)
        if task is None:
            return Response(status_code=204)
        return JSONResponse(task.to_dict())

    @app.post("/api/annotations")
    async def submit(request: Request) -> Response:
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return JSONResponse(
                {"errors": [{"field": "", "code": "BAD_JSON", "message": "invalid JSON body"}]},
                status_code=422,
            )
        resp = AnnotationResponse(
            pair_id=str(body.get("pair_id", "")),
            annotator_id=str(body.get("annotator_id", "")),
            choices=dict(body.get("choices") or {}),
            q2_explanation=str(body.get("q2_explanation", "")),
        )
        try:
            stored = campaign.submit(resp)
        except ValidationError as exc:
            return JSONResponse({"errors": [exc.to_dict()]}, status_code=422)
        except DuplicateError as exc:
            return JSONResponse(
                {"errors": [{"field": "pair_id", "code": "DUPLICATE", "message": str(exc)}]},
                status_code=409,
            )
        return JSONResponse({"status": "ok", "submitted_at": stored.submitted_at}, status_code=201)

    @app.get("/api/stats")
    def stats() -> dict[str, Any]:
        return {"responses": len(campaign.store), "questions": campaign.label_stats()}

    @app.get("/api/export")
    def export(
        question: str = Query(...),
        explanations: bool = Query(False),
    ) -> Response:
        if question not in CHOICE_QUESTION_IDS:
            return JSONResponse(
                {"errors": [{
                    "field": "question",
                    "code": "BAD_QUESTION",
                    "message": f"question must be one of {', '.join(CHOICE_QUESTION_IDS)}",
                }]},
                status_code=422,
            )
        rows = campaign.export_preferences(question, include_explanations=explanations)
        body = "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows)
        return PlainTextResponse(body, media_type="application/x-ndjson")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(
    campaign: Campaign,
    port: int,
    static_dir: Optional[Path | str] = None,
    host: str = "127.0.0.1",
) -> None:
    import uvicorn

    uvicorn.run(create_app(campaign, static_dir), host=host, port=port, log_level="warning")
