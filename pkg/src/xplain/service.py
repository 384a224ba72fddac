"""HTTP/JSON facade over the toolkit.

Every response is an envelope {ok, data | error}. Models and datasets live
in an in-memory registry keyed by a content hash, so re-uploading the same
material lands on the same id. Tree views are per-session state with
optimistic concurrency: each toggle must quote the revision it was computed
against, and a mismatch is rejected as stale instead of double-applied.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.responses import JSONResponse

from .attribution import Explainer, bind_background
from .counterfactual import query_from_dict, search_exhaustive, search_sampling
from .dataset import LabeledDataset, load_dataset
from .edge_cases import (EdgeCriterion, FeaturePredicate, Locality,
                         RiskFunction, mine_edge_cases)
from .errors import (DataError, GridTooLargeError, LeafToggleError, QueryError,
                     SchemaError, StaleViewError, XplainError)
from .models import Model, train_model
from .schema import instance_from_payload
from .tree import (CollapsedView, DecisionTree, collapse_to_depth, frontier,
                   induce_tree, prediction_range, superleaf_summary, toggle_node)
from .verifiability import verifiability_study

DEFAULT_TREE_DEPTH = 2


@dataclass(frozen=True)
class ServiceConfig:
    port: int = 8000
    data_dir: Optional[str] = None
    session_ttl_s: float = 1800.0

    @classmethod
    def load(cls, path: Optional[str] = None, port: Optional[int] = None,
             data_dir: Optional[str] = None,
             session_ttl_s: Optional[float] = None) -> "ServiceConfig":
        """Layered config: file, then XPLAIN_* env vars, then explicit args."""
        values: dict = {}
        if path:
            raw = Path(path).read_bytes()
            if path.endswith(".toml"):
                if sys.version_info >= (3, 11):
                    import tomllib
                else:
                    import tomli as tomllib
                values.update(tomllib.loads(raw.decode("utf-8")))
            else:
                values.update(json.loads(raw))
        if "XPLAIN_PORT" in os.environ:
            values["port"] = int(os.environ["XPLAIN_PORT"])
        if "XPLAIN_DATA_DIR" in os.environ:
            values["data_dir"] = os.environ["XPLAIN_DATA_DIR"]
        if "XPLAIN_SESSION_TTL_S" in os.environ:
            values["session_ttl_s"] = float(os.environ["XPLAIN_SESSION_TTL_S"])
        if port is not None:
            values["port"] = port
        if data_dir is not None:
            values["data_dir"] = data_dir
        if session_ttl_s is not None:
            values["session_ttl_s"] = session_ttl_s
        known = {k: values[k] for k in ("port", "data_dir", "session_ttl_s")
                 if k in values}
        return cls(**known)


@dataclass
class ModelEntry:
    model_id: str
    model: Model
    data: LabeledDataset
    tree: DecisionTree


@dataclass
class Session:
    session_id: str
    model_id: str
    view: CollapsedView
    created: float
    expires: float
    last_query: Optional[dict] = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class _ApiError(Exception):
    def __init__(self, status: int, code: str, message: str,
                 fields: Optional[list] = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.fields = fields or []


def _ok(data) -> JSONResponse:
    return JSONResponse({"ok": True, "data": data})


def _view_payload(entry: ModelEntry, view: CollapsedView) -> dict:
    tree = entry.tree
    front = frontier(tree, view)
    return {
        "view": view.to_dict(),
        "frontier": [
            {
                "node_id": nid,
                "kind": "leaf" if tree.nodes[nid].is_leaf else "superleaf",
                "summary": superleaf_summary(tree, nid).to_dict(),
            }
            for nid in front
        ],
        "nodes": {
            str(n.id): {
                "depth": n.depth,
                "children": list(n.children),
                "n_support": n.n_support,
            }
            for n in tree.nodes
        },
    }


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    config = config or ServiceConfig()

    models: dict[str, ModelEntry] = {}
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        if config.data_dir:
            out = Path(config.data_dir)
            out.mkdir(parents=True, exist_ok=True)
            doc = [
                {
                    "session_id": s.session_id,
                    "model_id": s.model_id,
                    "view": s.view.to_dict(),
                    "created": s.created,
                    "expires": s.expires,
                }
                for s in sessions.values()
            ]
            (out / "sessions-snapshot.json").write_text(
                json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")

    app = FastAPI(title="xplain service", lifespan=lifespan)

    # -- helpers ----------------------------------------------------------

    def get_model(model_id: str) -> ModelEntry:
        with registry_lock:
            entry = models.get(model_id)
        if entry is None:
            raise _ApiError(404, "unknown-model", f"no model {model_id!r}")
        return entry

    def get_session(session_id: str) -> Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise _ApiError(404, "unknown-session", f"no session {session_id!r}")
        if time.time() > session.expires:
            with registry_lock:
                sessions.pop(session_id, None)
            raise _ApiError(404, "session-expired",
                            f"session {session_id!r} expired")
        return session

    async def read_json(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise _ApiError(400, "malformed-payload", "body is not valid JSON")
        if not isinstance(body, dict):
            raise _ApiError(400, "malformed-payload", "body must be an object")
        return body

    def require(body: dict, *names: str) -> None:
        missing = [n for n in names if n not in body]
        if missing:
            raise _ApiError(400, "malformed-payload",
                            f"missing field(s): {missing}", fields=missing)

    # -- error mapping ------------------------------------------------------

    @app.exception_handler(_ApiError)
    async def api_error_handler(_req, exc: _ApiError):
        payload = {"code": exc.code, "message": exc.message}
        if exc.fields:
            payload["fields"] = exc.fields
        return JSONResponse(status_code=exc.status,
                            content={"ok": False, "error": payload})

    @app.exception_handler(XplainError)
    async def domain_error_handler(_req, exc: XplainError):
        if isinstance(exc, (LeafToggleError, StaleViewError)):
            status, code = 409, "illegal-toggle"
        elif isinstance(exc, GridTooLargeError):
            status, code = 422, "grid-too-large"
        elif isinstance(exc, QueryError):
            status, code = 422, "infeasible-query"
        elif isinstance(exc, (SchemaError, DataError)):
            status, code = 400, "malformed-payload"
        else:
            status, code = 400, "domain-error"
        return JSONResponse(status_code=status,
                            content={"ok": False,
                                     "error": {"code": code, "message": str(exc)}})

    # -- model registry -----------------------------------------------------

    @app.post("/models")
    def post_models(csv: UploadFile = File(...),
                    schema_file: UploadFile = File(..., alias="schema"),
                    kind: str = Form("cart"), max_depth: int = Form(4),
                    min_leaf: int = Form(1), lam: float = Form(0.0),
                    seed: int = Form(42)):
        csv_bytes = csv.file.read()
        schema_bytes = schema_file.file.read()
        data = load_dataset(csv_bytes, schema_bytes)
        digest = hashlib.sha256()
        for chunk in (csv_bytes, schema_bytes,
                      f"{kind}|{max_depth}|{min_leaf}|{lam}|{seed}".encode()):
            digest.update(chunk)
        model_id = "m-" + digest.hexdigest()[:12]

        if kind == "logistic":
            model = train_model(data, "logistic", seed=seed)
        else:
            model = train_model(
                data, "cart-tree",
                {"max_depth": max_depth, "min_leaf": min_leaf, "lam": lam},
                seed=seed)
        if hasattr(model, "tree"):
            tree = model.tree
        else:
            tree = induce_tree(data, max_depth=max_depth, min_leaf=min_leaf,
                               seed=seed)
        entry = ModelEntry(model_id=model_id, model=model, data=data, tree=tree)
        with registry_lock:
            models[model_id] = entry
        return _ok({"model_id": model_id,
                    "training_accuracy": model.training_accuracy})

    @app.get("/models/{model_id}/schema")
    def get_schema(model_id: str):
        entry = get_model(model_id)
        return _ok({"model_id": entry.model_id,
                    "schema": entry.model.schema.to_dict(),
                    "training_accuracy": entry.model.training_accuracy})

    @app.post("/models/{model_id}/predict")
    async def post_predict(model_id: str, request: Request):
        entry = get_model(model_id)
        body = await read_json(request)
        require(body, "instance")
        x = instance_from_payload(entry.model.schema, body["instance"])
        proba = entry.model.predict_proba(x)
        classes = entry.model.schema.classes
        return _ok({
            "class": classes[entry.model.predict(x)],
            "proba": {c: float(p) for c, p in zip(classes, proba)},
        })

    @app.post("/models/{model_id}/edge-cases")
    async def post_edge_cases(model_id: str, request: Request):
        entry = get_model(model_id)
        body = await read_json(request)
        require(body, "risk", "criterion")
        schema = entry.model.schema
        risk = RiskFunction.from_dict(schema, body["risk"])
        crit_doc = body["criterion"]
        if "risk_threshold" not in crit_doc:
            raise _ApiError(400, "malformed-payload",
                            "criterion.risk_threshold is required",
                            fields=["criterion.risk_threshold"])
        predicates = tuple(
            FeaturePredicate(feature=schema.feature_index(p["feature"]),
                             op=p["op"],
                             value=tuple(p["value"]) if p["op"] == "in"
                             else p["value"])
            for p in crit_doc.get("predicates", []))
        locality = None
        if "locality" in crit_doc and crit_doc["locality"] is not None:
            loc = crit_doc["locality"]
            locality = Locality(
                x_opt=instance_from_payload(schema, loc["instance"]),
                max_distance=float(loc.get("max_distance", 1.0)),
                require_prediction_flip=bool(loc.get("require_prediction_flip",
                                                     False)))
        crit = EdgeCriterion(
            risk_threshold=float(crit_doc["risk_threshold"]),
            require_misprediction=bool(crit_doc.get("require_misprediction", True)),
            extra_predicates=predicates, locality=locality)
        out = mine_edge_cases(entry.model, entry.data, risk, crit,
                              bins=int(body.get("bins", 10)))
        return _ok(out.to_dict())

    @app.post("/models/{model_id}/counterfactuals")
    async def post_counterfactuals(model_id: str, request: Request):
        entry = get_model(model_id)
        body = await read_json(request)
        require(body, "instance", "target_class")
        q = query_from_dict(entry.model.schema, body)
        engine = body.get("engine", "sample")
        if engine == "exact":
            out = search_exhaustive(entry.model, q,
                                    grid_steps=int(body.get("grid_steps", 11)))
        else:
            out = search_sampling(entry.model, q,
                                  seed=int(body.get("seed", 42)),
                                  budget=int(body.get("budget", 2000)))
        return _ok(out.to_dict(include_timing=True))

    @app.post("/models/{model_id}/attributions")
    async def post_attributions(model_id: str, request: Request):
        entry = get_model(model_id)
        body = await read_json(request)
        require(body, "instance", "explainer")
        schema = entry.model.schema
        aliases = {"ablation": "feature-ablation", "shapley": "shapley-sampling",
                   "permutation": "feature-permutation"}
        kind = aliases.get(body["explainer"], body["explainer"])
        explainer = bind_background(Explainer(kind), entry.data)
        x = instance_from_payload(schema, body["instance"])
        target = None
        if body.get("target") is not None:
            target = schema.class_index(body["target"])
        out = explainer.explain(entry.model, x, target_class=target,
                                seed=int(body.get("seed", 42)))
        return _ok(out.to_dict(schema))

    # -- sessions -------------------------------------------------------------

    @app.post("/sessions")
    async def post_sessions(request: Request):
        body = await read_json(request)
        require(body, "model_id")
        entry = get_model(body["model_id"])
        now = time.time()
        session = Session(
            session_id="s-" + uuid.uuid4().hex[:12],
            model_id=entry.model_id,
            view=collapse_to_depth(entry.tree,
                                   int(body.get("depth", DEFAULT_TREE_DEPTH)),
                                   tree_id=entry.model_id),
            created=now,
            expires=now + config.session_ttl_s)
        with registry_lock:
            sessions[session.session_id] = session
        return _ok({"session_id": session.session_id,
                    **_view_payload(entry, session.view)})

    @app.get("/sessions/{session_id}/tree")
    def get_tree(session_id: str):
        session = get_session(session_id)
        entry = get_model(session.model_id)
        return _ok(_view_payload(entry, session.view))

    @app.post("/sessions/{session_id}/tree/toggle")
    async def post_toggle(session_id: str, request: Request):
        session = get_session(session_id)
        entry = get_model(session.model_id)
        body = await read_json(request)
        require(body, "node_id", "revision")
        with session.lock:
            if int(body["revision"]) != session.view.revision:
                raise StaleViewError(
                    f"view revision {body['revision']} is stale; "
                    f"current is {session.view.revision}")
            session.view = toggle_node(entry.tree, session.view,
                                       int(body["node_id"]))
            return _ok(_view_payload(entry, session.view))

    @app.post("/sessions/{session_id}/tree/route")
    async def post_route(session_id: str, request: Request):
        session = get_session(session_id)
        entry = get_model(session.model_id)
        body = await read_json(request)
        require(body, "instance")
        x = instance_from_payload(entry.model.schema, body["instance"])
        node_id, cluster = prediction_range(entry.tree, session.view, x)
        return _ok({
            "node_id": node_id,
            "cluster": [{"class": c, "count": n} for c, n in cluster],
        })

    # -- studies ----------------------------------------------------------------

    @app.post("/studies/verifiability")
    async def post_verifiability(request: Request):
        body = await read_json(request)
        require(body, "model_ids", "explainers")
        entries = [get_model(mid) for mid in body["model_ids"]]
        data = entries[0].data
        aliases = {"ablation": "feature-ablation", "shapley": "shapley-sampling",
                   "permutation": "feature-permutation"}
        explainers = [bind_background(Explainer(aliases.get(e, e)), data)
                      for e in body["explainers"]]
        report = verifiability_study([e.model for e in entries], data,
                                     explainers, seed=int(body.get("seed", 42)))
        return _ok(report.to_dict())

    return app
