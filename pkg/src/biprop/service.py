"""Local HTTP/JSON service for interactive sessions.

Single-user tool: sessions live in memory, one segmentation job per
session at a time, masks of finished frames are fetchable while the job
is still running so the user can pick a correction keyframe early.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.staticfiles import StaticFiles

from . import io as bio
from .core import SCRIBBLE_BG, SCRIBBLE_FG, FrameSequence
from .pipeline import RunConfig, SegmentationRun

_CONFIG_KEYS = {
    "mode", "dynamic", "verify", "lam", "k_regions", "compactness", "slic_iters",
    "binary_path", "gamma_smooth", "n_comp", "k_hard", "variance_floor", "em_iters",
}


@dataclass
class Session:
    id: str
    frames_path: str
    frames: FrameSequence
    scribbles: dict[int, np.ndarray] = field(default_factory=dict)
    dirty_frames: set[int] = field(default_factory=set)
    state: str = "idle"  # idle | queued | running | done | failed
    progress: float = 0.0
    frames_done: int = 0
    message: str = ""
    run: SegmentationRun | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    thread: threading.Thread | None = None

    def status(self) -> dict:
        return {
            "state": self.state,
            "progress": self.progress,
            "frames_done": self.frames_done,
            "message": self.message,
        }


def create_app(static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="biprop service")
    sessions: dict[str, Session] = {}

    def get_session(session_id: str) -> Session:
        try:
            return sessions[session_id]
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.post("/sessions")
    async def create_session(body: dict):
        frames_path = body.get("frames_path")
        if not frames_path:
            raise HTTPException(status_code=400, detail="frames_path is required")
        try:
            frames = bio.load_sequence(frames_path)
        except (FileNotFoundError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        sid = secrets.token_hex(16)
        sessions[sid] = Session(id=sid, frames_path=str(frames_path), frames=frames)
        return {"id": sid}

    @app.post("/sessions/{session_id}/scribbles/{frame}")
    async def submit_scribbles(session_id: str, frame: int, request: Request):
        ses = get_session(session_id)
        if not 0 <= frame < ses.frames.count:
            raise HTTPException(status_code=404, detail="frame out of range")
        body = await request.body()
        try:
            mask = bio.parse_scribbles(body)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if mask.shape != (ses.frames.height, ses.frames.width):
            raise HTTPException(status_code=400, detail="scribble dimensions do not match the frames")
        with ses.lock:
            if ses.state in ("queued", "running"):
                raise HTTPException(status_code=409, detail="a job is running; wait before scribbling")
            if frame in ses.scribbles:
                merged = ses.scribbles[frame].copy()
                touched = mask != 0
                merged[touched] = mask[touched]
                ses.scribbles[frame] = merged
            else:
                ses.scribbles[frame] = mask.copy()
            ses.dirty_frames.add(frame)
        return {"stored": True, "frame": frame}

    @app.get("/sessions/{session_id}/scribbles/{frame}")
    async def fetch_scribbles(session_id: str, frame: int):
        ses = get_session(session_id)
        mask = ses.scribbles.get(frame)
        if mask is None:
            raise HTTPException(status_code=404, detail="no scribbles for this frame")
        return Response(content=bio.encode_gray_png(mask), media_type="image/png")

    @app.post("/sessions/{session_id}/run")
    async def start_run(session_id: str, body: dict | None = None):
        ses = get_session(session_id)
        body = body or {}
        with ses.lock:
            if ses.state in ("queued", "running"):
                raise HTTPException(status_code=409, detail="a job is already running")
            seed0 = ses.scribbles.get(0)
            if ses.run is None:
                if seed0 is None or not (
                    (seed0 == SCRIBBLE_FG).any() and (seed0 == SCRIBBLE_BG).any()
                ):
                    raise HTTPException(
                        status_code=400,
                        detail="seed incomplete: frame 0 needs both FG and BG scribbles",
                    )
            unknown = set(body) - _CONFIG_KEYS
            if unknown:
                raise HTTPException(status_code=400, detail=f"unknown config keys: {sorted(unknown)}")
            try:
                cfg = RunConfig(**body)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            ses.state = "queued"
            ses.progress = 0.0
            ses.frames_done = 0
            ses.message = ""
            dirty = sorted(ses.dirty_frames)
            ses.dirty_frames = set()
            ses.thread = threading.Thread(
                target=_job, args=(ses, cfg, dirty), daemon=True
            )
            ses.thread.start()
        return {"state": "queued"}

    def _job(ses: Session, cfg: RunConfig, dirty: list[int]) -> None:
        def progress(done: int, total: int) -> None:
            with ses.lock:
                ses.frames_done = done
                ses.progress = done / total

        try:
            with ses.lock:
                ses.state = "running"
            rerun_from = min(dirty) if dirty else 0
            if ses.run is None or rerun_from == 0 or ses.run.cfg != cfg:
                run = SegmentationRun(ses.frames, cfg)
                for f, mask in ses.scribbles.items():
                    run.set_scribbles(f, mask)
                with ses.lock:
                    ses.run = run  # masks become fetchable as frames finish
                run.execute(progress=progress)
            else:
                # corrective keyframes, applied in order; each re-runs forward
                run = ses.run
                for k in sorted(dirty):
                    run.correct(k, ses.scribbles[k], progress=progress)
            with ses.lock:
                ses.state = "done"
                ses.progress = 1.0
                ses.frames_done = ses.frames.count
        except Exception as exc:  # surfaced through /status
            with ses.lock:
                ses.state = "failed"
                ses.message = str(exc)

    @app.get("/sessions/{session_id}/status")
    async def get_status(session_id: str):
        return get_session(session_id).status()

    @app.get("/sessions/{session_id}/masks/{frame}")
    async def get_mask(session_id: str, frame: int):
        ses = get_session(session_id)
        if not 0 <= frame < ses.frames.count:
            raise HTTPException(status_code=404, detail="frame out of range")
        with ses.lock:
            run = ses.run
            if run is None or run.labelings[frame] is None:
                raise HTTPException(status_code=404, detail="mask not yet available")
            mask = run.masks[frame].copy()
        return Response(content=bio.encode_gray_png(mask), media_type="image/png")

    @app.get("/sessions/{session_id}/frames/{frame}")
    async def get_frame(session_id: str, frame: int):
        ses = get_session(session_id)
        if not 0 <= frame < ses.frames.count:
            raise HTTPException(status_code=404, detail="frame out of range")
        import io as _stdio

        from PIL import Image

        buf = _stdio.BytesIO()
        Image.fromarray(ses.frames[frame].astype(np.uint8), mode="RGB").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/sessions/{session_id}/meta")
    async def get_meta(session_id: str):
        ses = get_session(session_id)
        return {
            "frame_count": ses.frames.count,
            "width": ses.frames.width,
            "height": ses.frames.height,
        }

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
