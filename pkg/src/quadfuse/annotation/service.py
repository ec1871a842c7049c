"""HTTP facade over the annotation store (FastAPI, /api/v1).

Auth is a static bearer-token table mapping tokens to annotator names. All
errors, including auth and validation, use one JSON shape:
``{"code": ..., "message": ..., "field"?: ...}``.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from quadfuse.records import record_to_doc, save_dataset

from .store import (
    AnnotationError,
    AnnotationStore,
    Unauthorized,
    load_schema,
)

API_PREFIX = "/api/v1"


def create_app(store: AnnotationStore, tokens: dict[str, str],
               static_dir: str | Path | None = None) -> FastAPI:
    """Build the service app.

    ``tokens`` maps bearer tokens to annotator names. ``static_dir``, when
    given, is served at the root so a built UI bundle can ride along.
    """
    if not tokens:
        raise ValueError("token table must not be empty")
    app = FastAPI(title="annotation service", docs_url=None, redoc_url=None)

    def annotator_for(request: Request) -> str:
        header = request.headers.get("authorization", "")
        scheme, _, token = header.partition(" ")
        if scheme.lower() != "bearer" or not token:
            raise Unauthorized("missing bearer token")
        try:
            return tokens[token.strip()]
        except KeyError:
            raise Unauthorized("unknown bearer token") from None

    @app.exception_handler(AnnotationError)
    async def on_annotation_error(request: Request, exc: AnnotationError):
        return JSONResponse(status_code=exc.status, content=exc.to_doc())

    @app.get(API_PREFIX + "/schema")
    def get_schema():
        return load_schema()

    @app.get(API_PREFIX + "/tasks/next")
    def get_next_task(request: Request):
        annotator = annotator_for(request)
        return store.next_task(annotator).to_doc()

    @app.post(API_PREFIX + "/tasks/{task_id}/submit")
    def submit_task(task_id: str, request: Request, payload: dict = Body(...)):
        annotator = annotator_for(request)
        key = request.headers.get("idempotency-key")
        task = store.submit(task_id, annotator, payload, idempotency_key=key)
        return task.to_doc()

    @app.get(API_PREFIX + "/users/{user_id}/homepage")
    def get_homepage(user_id: str, request: Request):
        annotator_for(request)
        return store.homepage_view(user_id)

    @app.post(API_PREFIX + "/export")
    def export_dataset(request: Request, options: dict | None = Body(default=None)):
        annotator_for(request)
        ds = store.export_labeled()
        doc = {"count": len(ds),
               "records": [record_to_doc(rec) for rec in ds.records]}
        path = (options or {}).get("path")
        if path:
            save_dataset(ds, path)
            doc["path"] = str(path)
        return doc

    @app.get(API_PREFIX + "/stats")
    def get_stats(request: Request):
        annotator_for(request)
        return store.stats()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")
    return app
