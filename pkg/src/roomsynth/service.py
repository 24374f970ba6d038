"""HTTP service exposing graph generation and scene instantiation.

Checkpoints are loaded once at startup and treated as immutable, so
concurrent requests share one model snapshot safely. Generation is
deterministic given (checkpoint, request), and identical requests are
answered from a small response cache, byte for byte.

Endpoints:
  GET  /healthz          liveness probe, plain "ok"
  GET  /api/v1/schema    room types, condition labels, category registry
  POST /api/v1/generate  sample a graph and instantiate it into a scene
  POST /api/v1/extract   scene payload -> typed scene graph
"""

from __future__ import annotations

import json
import os
import threading
import time

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from pydantic import BaseModel

from .generator import ConditionalGraphGenerator
from .graphs import SceneGraphExtractor, graph_to_dict
from .placement import InstantiationError, SceneInstantiator
from .scenes import (
    ConditionCode,
    ConditionSchema,
    DatasetFormatError,
    RoomShell,
    SchemaMismatchError,
    scene_from_dict,
    scene_to_dict,
    shell_from_dict,
    shell_to_dict,
)
from . import synthetic

GENERATOR_CKPT = "condgen_{room}.json"
INSTANTIATOR_CKPT = "placement_{room}.json"
_CACHE_MAX = 256


class GenerateBody(BaseModel):
    room_type: str
    label: str
    seed: int = 0
    shell: dict | None = None


class _RoomModels:
    def __init__(self, room_type: str, generator: ConditionalGraphGenerator,
                 instantiator: SceneInstantiator):
        self.room_type = room_type
        self.generator = generator
        self.instantiator = instantiator
        self.schema = ConditionSchema(
            room_type=room_type, labels=tuple(generator.condition_labels_)
        )
        self.registry = dict(getattr(generator, "registry_", {}) or {})
        if room_type in synthetic.ROOM_SCHEMAS:
            self.default_shell: RoomShell | None = synthetic.default_shell(room_type)
            if not self.registry:
                self.registry = synthetic.default_registry(room_type)
        else:
            self.default_shell = None


def _load_models(checkpoint_dir: str,
                 room_types: list[str] | None) -> dict[str, _RoomModels]:
    if room_types is None:
        room_types = sorted(
            name[len("condgen_"):-len(".json")]
            for name in os.listdir(checkpoint_dir)
            if name.startswith("condgen_") and name.endswith(".json")
        )
        if not room_types:
            raise FileNotFoundError(
                f"no generator checkpoints (condgen_*.json) in {checkpoint_dir!r}"
            )
    models = {}
    for room in room_types:
        gen_path = os.path.join(checkpoint_dir, GENERATOR_CKPT.format(room=room))
        inst_path = os.path.join(checkpoint_dir, INSTANTIATOR_CKPT.format(room=room))
        for path in (gen_path, inst_path):
            if not os.path.isfile(path):
                raise FileNotFoundError(f"missing checkpoint: {path}")
        models[room] = _RoomModels(
            room, ConditionalGraphGenerator.load(gen_path),
            SceneInstantiator.load(inst_path),
        )
    return models


def create_app(checkpoint_dir: str,
               room_types: list[str] | None = None) -> FastAPI:
    """Build the service around the checkpoints in checkpoint_dir.

    Expects condgen_<room>.json and placement_<room>.json per room type;
    any missing file aborts startup with the offending path.
    """
    models = _load_models(checkpoint_dir, room_types)
    app = FastAPI(title="roomsynth", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    cache: dict[tuple, bytes] = {}
    cache_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def _on_invalid(request: Request, exc: RequestValidationError):
        detail = [
            {
                "field": ".".join(
                    str(part) for part in err["loc"] if part != "body"
                ) or "body",
                "message": err["msg"],
            }
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.exception_handler(DatasetFormatError)
    async def _on_format(request: Request, exc: DatasetFormatError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(SchemaMismatchError)
    async def _on_schema(request: Request, exc: SchemaMismatchError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(InstantiationError)
    async def _on_nospace(request: Request, exc: InstantiationError):
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/healthz", response_class=PlainTextResponse)
    async def healthz() -> str:
        return "ok"

    @app.get("/api/v1/schema")
    async def schema():
        payload = {
            "room_types": {
                room: {
                    "labels": list(bundle.schema.labels),
                    "registry": {
                        str(code): name
                        for code, name in sorted(bundle.registry.items())
                    },
                    "default_shell": (
                        shell_to_dict(bundle.default_shell)
                        if bundle.default_shell is not None
                        else None
                    ),
                }
                for room, bundle in models.items()
            }
        }
        return JSONResponse(payload)

    @app.post("/api/v1/generate")
    def generate(body: GenerateBody):
        bundle = models.get(body.room_type)
        if bundle is None:
            raise SchemaMismatchError(
                f"unknown room type {body.room_type!r}; "
                f"expected one of {sorted(models)}"
            )
        label_index = bundle.schema.index_of(body.label)
        shell_json = (
            json.dumps(body.shell, sort_keys=True) if body.shell is not None else ""
        )
        key = (body.room_type, body.label, body.seed, shell_json)
        with cache_lock:
            hit = cache.get(key)
        if hit is not None:
            return Response(content=hit, media_type="application/json")

        shell = (
            shell_from_dict(body.shell) if body.shell is not None
            else bundle.default_shell
        )
        if shell is None:
            raise SchemaMismatchError(
                f"room type {body.room_type!r} has no default shell; "
                "provide one in the request"
            )
        cond = ConditionCode(room_type=body.room_type, label_index=label_index)
        t0 = time.perf_counter()
        graph = bundle.generator.generate(cond, body.seed)
        scene, report = bundle.instantiator.sample_scene(
            graph, cond, shell, body.seed, return_report=True
        )
        timing_ms = (time.perf_counter() - t0) * 1000.0
        payload = {
            "scene": scene_to_dict(scene),
            "graph": graph_to_dict(graph),
            "timing_ms": round(timing_ms, 3),
            "violations": report["violations"],
            "node_items": {str(k): v for k, v in report["node_items"].items()},
        }
        body_bytes = json.dumps(
            payload, sort_keys=True, separators=(",", ":")
        ).encode("utf-8")
        with cache_lock:
            if len(cache) >= _CACHE_MAX:
                cache.pop(next(iter(cache)))
            cache[key] = body_bytes
        return Response(content=body_bytes, media_type="application/json")

    @app.post("/api/v1/extract")
    def extract(payload: dict):
        scene = scene_from_dict(payload)
        graph = SceneGraphExtractor().transform([scene])[0]
        body_bytes = json.dumps(
            graph_to_dict(graph), sort_keys=True, separators=(",", ":")
        ).encode("utf-8")
        return Response(content=body_bytes, media_type="application/json")

    return app


def run(checkpoint_dir: str, host: str = "127.0.0.1", port: int = 8000,
        room_types: list[str] | None = None) -> None:
    import uvicorn

    port = int(os.environ.get("PORT", port))
    uvicorn.run(create_app(checkpoint_dir, room_types), host=host, port=port)
