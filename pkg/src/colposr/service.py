"""Local HTTP backend for the browser annotation tool.

Serves corpus images and their detected specular masks, accepts painted
hidden masks, validates them against the dataset invariants, and persists
accepted masks into the corpus manifest.  Plain localhost HTTP, no auth;
manifest writes are atomic (write-temp-then-rename) and submissions for the
same image are serialized, last writer wins.
"""

from __future__ import annotations

import threading
import uuid
from collections import defaultdict
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.staticfiles import StaticFiles

from .dataset import (
    CorpusImage,
    ManifestEntry,
    MaskValidationError,
    read_manifest,
    validate_hidden_mask,
    write_manifest,
)
from .imaging import (
    decode_mask_png_bytes,
    encode_mask_png_bytes,
    read_image_png,
    read_mask_png,
    write_mask_png,
)


class UnknownImageError(KeyError):
    pass


class AnnotationSession:
    """Annotation state over one corpus manifest."""

    def __init__(self, manifest_path):
        self.session_id = uuid.uuid4().hex
        self.manifest_path = Path(manifest_path)
        if not self.manifest_path.exists():
            raise FileNotFoundError(f"corpus manifest not found: {self.manifest_path}")
        self.root = self.manifest_path.parent
        self.entries: dict[str, ManifestEntry] = {
            e.image_id: e for e in read_manifest(self.manifest_path)
        }
        self._image_locks: defaultdict[str, threading.Lock] = defaultdict(threading.Lock)
        self._manifest_lock = threading.Lock()

    def _entry(self, image_id: str) -> ManifestEntry:
        try:
            return self.entries[image_id]
        except KeyError:
            raise UnknownImageError(image_id) from None

    def _corpus_image(self, entry: ManifestEntry) -> CorpusImage:
        return CorpusImage(
            image_id=entry.image_id,
            patient_id=entry.patient_id,
            image=read_image_png(self.root / entry.image_path),
            real_mask=read_mask_png(self.root / entry.real_mask_path),
        )

    def list_images(self) -> list[dict]:
        out = []
        for entry in self.entries.values():
            mask = read_mask_png(self.root / entry.real_mask_path)
            out.append(
                {
                    "image_id": entry.image_id,
                    "status": "committed" if entry.hidden_mask_paths else "unannotated",
                    "height": int(mask.shape[0]),
                    "width": int(mask.shape[1]),
                    "version": entry.version,
                }
            )
        return out

    def image_bytes(self, image_id: str) -> bytes:
        entry = self._entry(image_id)
        return (self.root / entry.image_path).read_bytes()

    def sr_mask_bytes(self, image_id: str) -> bytes:
        entry = self._entry(image_id)
        return encode_mask_png_bytes(read_mask_png(self.root / entry.real_mask_path))

    def hidden_mask_bytes(self, image_id: str) -> bytes | None:
        entry = self._entry(image_id)
        if not entry.hidden_mask_paths:
            return None
        return encode_mask_png_bytes(read_mask_png(self.root / entry.hidden_mask_paths[0]))

    def submit_mask(self, image_id: str, png_bytes: bytes) -> dict:
        """Validate and commit a painted hidden mask; returns the new status."""
        entry = self._entry(image_id)
        mask = decode_mask_png_bytes(png_bytes)  # ValueError on bad payloads
        validate_hidden_mask(mask, self._corpus_image(entry))
        with self._image_locks[image_id]:
            rel = f"masks/{image_id}_hidden.png"
            write_mask_png(mask, self.root / rel)
            entry.version += 1
            entry.hidden_mask_paths = [rel]
            with self._manifest_lock:
                write_manifest(list(self.entries.values()), self.manifest_path)
        return {"image_id": image_id, "status": "committed", "version": entry.version}


def create_app(manifest_path, ui_dir=None) -> FastAPI:
    session = AnnotationSession(manifest_path)
    app = FastAPI(title="colposr annotation service")
    app.state.session = session

    @app.get("/api/images")
    def list_images():
        return session.list_images()

    def _png(data: bytes) -> Response:
        return Response(content=data, media_type="image/png")

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        try:
            return _png(session.image_bytes(image_id))
        except UnknownImageError:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")

    @app.get("/api/images/{image_id}/srmask")
    def get_sr_mask(image_id: str):
        try:
            return _png(session.sr_mask_bytes(image_id))
        except UnknownImageError:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")

    @app.get("/api/images/{image_id}/mask")
    def get_hidden_mask(image_id: str):
        try:
            data = session.hidden_mask_bytes(image_id)
        except UnknownImageError:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        if data is None:
            raise HTTPException(status_code=404, detail=f"no committed mask for {image_id!r}")
        return _png(data)

    @app.post("/api/images/{image_id}/mask")
    async def submit_mask(image_id: str, request: Request):
        payload = await request.body()
        try:
            return session.submit_mask(image_id, payload)
        except UnknownImageError:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        except MaskValidationError as err:
            raise HTTPException(
                status_code=422,
                detail={"message": str(err), "offending_pixels": err.offending_pixels},
            )
        except ValueError as err:
            raise HTTPException(status_code=400, detail=f"bad mask payload: {err}")

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(manifest_path, host: str = "127.0.0.1", port: int = 8008, ui_dir=None) -> None:
    import uvicorn

    uvicorn.run(create_app(manifest_path, ui_dir=ui_dir), host=host, port=port)
