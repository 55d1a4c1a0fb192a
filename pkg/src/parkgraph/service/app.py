"""Read-only HTTP prediction service."""

from __future__ import annotations

import logging
import threading
from contextlib import asynccontextmanager
from typing import Callable

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from ..forecast import MAX_STEPS
from .schemas import ErrorResponse, HealthResponse, PredictResponse
from .state import ServiceState, WarmingUp, run_feed

log = logging.getLogger(__name__)

FeedFactory = Callable[[threading.Event], tuple]


def create_app(state: ServiceState, feed: FeedFactory | None = None) -> FastAPI:
    """Build the app around ``state``.  ``feed(stop)`` returns ``(lot_ids, rows)`` and
    is drained on a background thread for the lifetime of the app."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        stop = threading.Event()
        worker = None
        if feed is not None:
            def drain():
                try:
                    lot_ids, rows = feed(stop)
                    n = run_feed(state, lot_ids, rows)
                    log.info("feed finished after %d frames", n)
                except Exception:
                    log.exception("feed failed")

            worker = threading.Thread(target=drain, name="frame-feed", daemon=True)
            worker.start()
        yield
        stop.set()
        if worker is not None:
            worker.join(timeout=2.0)

    app = FastAPI(title="parkgraph", lifespan=lifespan)
    app.state.service = state

    @app.exception_handler(RequestValidationError)
    async def bad_request(request: Request, exc: RequestValidationError):
        detail = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
        return JSONResponse(status_code=400, content=ErrorResponse(detail=detail).model_dump(exclude_none=True))

    @app.get("/health", response_model=HealthResponse)
    def health():
        return state.health()

    @app.get("/predict", response_model=PredictResponse, responses={400: {"model": ErrorResponse},
                                                                     503: {"model": ErrorResponse}})
    def predict(steps: int = Query(8, ge=1, le=MAX_STEPS)):
        try:
            return state.predict(steps)
        except WarmingUp as exc:
            body = ErrorResponse(detail=str(exc), buffer_steps=exc.have, required_steps=exc.need)
            return JSONResponse(status_code=503, content=body.model_dump())

    return app
