"""HTTP surface for the rating study.

GET  /api/task?annotator=ID   next task (or {"done": true, ...})
POST /api/rating              {"annotator", "image_id", "score"}
GET  /api/progress            server-side aggregate, incl. method coverage
GET  /api/image/{id}          PNG payload
/ui/                          the built annotation frontend, when present
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import FileResponse, JSONResponse, RedirectResponse
from pydantic import BaseModel

from detailscribe.annotation.store import RatingStore, ScoreOutOfRange, UnknownImage
from detailscribe.annotation.study import Study


class RatingSubmission(BaseModel):
    annotator: str
    image_id: str
    score: int


def default_ui_dir() -> Path:
    return Path(__file__).resolve().parents[3] / "frontend" / "dist"


def create_app(study: Study, store: RatingStore, ui_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="detailscribe annotation service")
    ui = ui_dir if ui_dir is not None else default_ui_dir()

    @app.get("/api/task")
    def get_task(annotator: str):
        if not annotator:
            return JSONResponse({"error": "annotator id is required"}, status_code=400)
        task = study.next_task(annotator, store)
        if task is None:
            rated = len(store.scores_for(annotator))
            return {"done": True, "rated": rated, "total": study.total_prompts}
        return task.to_dict()

    @app.post("/api/rating")
    def post_rating(submission: RatingSubmission):
        try:
            study.image(submission.image_id)
            rating = store.append(submission.annotator, submission.image_id, submission.score)
        except UnknownImage as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        except ScoreOutOfRange as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        return {"ok": True, "image_id": rating.image_id, "score": rating.score}

    @app.get("/api/progress")
    def get_progress():
        return study.progress(store)

    @app.get("/api/image/{image_id}")
    def get_image(image_id: str):
        try:
            img = study.image(image_id)
        except UnknownImage as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        return FileResponse(img.png_path, media_type="image/png")

    if ui.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui, html=True), name="ui")

        @app.get("/")
        def root():
            return RedirectResponse(url="/ui/")

    return app


def serve(study: Study, store: RatingStore, host: str, port: int, ui_dir: Path | None = None):
    import uvicorn

    app = create_app(study, store, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
