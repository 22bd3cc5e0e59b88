"""Prediction HTTP service: POST /predict and GET /health."""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .model import ClassifierArtifact


class TupleIn(BaseModel):
    article_id: str
    text: str


class PredictRequest(BaseModel):
    tuples: list[TupleIn]


def create_app(artifact: ClassifierArtifact) -> FastAPI:
    app = FastAPI(title="tuple-classifier")

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "model_version": artifact.model_version}

    @app.post("/predict")
    def predict(request: PredictRequest):
        if not request.tuples:
            return JSONResponse(status_code=400,
                                content={"error": "empty tuple list"})
        texts = [t.text for t in request.tuples]
        probs = artifact.predict_probs(texts)
        predictions = []
        for tup, row in zip(request.tuples, probs):
            predictions.append({
                "article_id": tup.article_id,
                "probs": [float(p) for p in row],
                "argmax": artifact.labels[int(row.argmax())],
            })
        return {
            "model_version": artifact.model_version,
            "labels": list(artifact.labels),
            "predictions": predictions,
        }

    return app


def serve(model_dir: str | Path, port: int) -> None:
    import uvicorn

    artifact = ClassifierArtifact.load(model_dir)
    uvicorn.run(create_app(artifact), host="0.0.0.0", port=port)
