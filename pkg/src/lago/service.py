"""HTTP API over the engine, one thin endpoint per library operation.

All payloads go through serialize.dumps, so a CLI verb and its endpoint
return byte-identical bodies for the same inputs. Sessions are in-memory;
per-session mutations are serialized by a lock, different sessions never
contend.

Status codes: 201 session created, 400 invalid input (ValidationReport body),
404 unknown session, 409 operation out of order (e.g. optimize before fit).
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .cost_model import CostModel, cost_curve
from .errors import DataError, LagoError
from .inference import design_effect, power_two_proportions, project_outcome
from .optimizer import OptimizationCriteria, confidence_set, optimize_package
from .outcome_model import OutcomeFit, fit_logistic
from .serialize import dump_csv, dumps
from .stage_engine import final_analysis
from .trial_model import StageDataset, TrialConfig, combine_stages, load_observations, validate_config


@dataclass
class Session:
    """One trial's mutable server-side state."""

    session_id: str
    config: TrialConfig
    cost: CostModel
    created: str
    updated: str
    datasets: dict[int, StageDataset] = field(default_factory=dict)
    fit: OutcomeFit | None = None
    fit_scales: dict[str, float] | None = None
    criteria: OptimizationCriteria | None = None
    latest_optimize: dict | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def combined(self):
        return combine_stages(
            self.datasets.values(), upto=max(self.datasets) if self.datasets else 0
        )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _json_response(payload, status: int = 200) -> Response:
    return Response(content=dumps(payload), media_type="application/json", status_code=status)


def _invalid(violations) -> Response:
    return _json_response({"ok": False, "violations": list(violations)}, 400)


def _conflict(message: str) -> Response:
    return _json_response({"error": message}, 409)


def _parse_json(body: bytes):
    if not body:
        return {}
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise DataError(f"body is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError("body must be a JSON object")
    return doc


def create_app() -> FastAPI:
    app = FastAPI(title="lago", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()

    def _session(session_id: str) -> Session | None:
        with sessions_lock:
            return sessions.get(session_id)

    def _not_found(session_id: str) -> Response:
        return _json_response({"error": f"unknown session {session_id!r}"}, 404)

    @app.post("/api/sessions")
    async def create_session(request: Request) -> Response:
        body = await request.body()
        try:
            doc = _parse_json(body)
            config = TrialConfig.from_dict(doc)
        except LagoError as exc:
            return _invalid([str(exc)])
        report = validate_config(config)
        if not report.ok:
            return _invalid(report.violations)
        session = Session(
            session_id=uuid.uuid4().hex,
            config=config,
            cost=CostModel.from_config(config),
            created=_now(),
            updated=_now(),
        )
        with sessions_lock:
            sessions[session.session_id] = session
        return _json_response(
            {"session_id": session.session_id, "created": session.created}, 201
        )

    @app.post("/api/sessions/{session_id}/data")
    async def upload_data(session_id: str, request: Request) -> Response:
        body = await request.body()
        session = _session(session_id)
        if session is None:
            return _not_found(session_id)
        with session.lock:
            try:
                datasets = load_observations(body, session.config)
            except LagoError as exc:
                return _invalid([str(exc)])
            for ds in datasets:
                session.datasets[ds.stage_index] = ds
            session.updated = _now()
            return _json_response(
                {
                    "stages_loaded": sorted(session.datasets),
                    "rows_total": sum(len(d.records) for d in session.datasets.values()),
                }
            )

    @app.post("/api/sessions/{session_id}/fit")
    async def fit_session(session_id: str, request: Request) -> Response:
        body = await request.body()
        session = _session(session_id)
        if session is None:
            return _not_found(session_id)
        with session.lock:
            if not session.datasets:
                return _conflict("no data uploaded yet")
            try:
                doc = _parse_json(body)
                scales = doc.get("scales")
                combined = session.combined()
                fit = fit_logistic(combined, session.config, report_scales=scales)
            except LagoError as exc:
                return _invalid([str(exc)])
            session.fit = fit
            session.fit_scales = scales
            session.updated = _now()
            return _json_response(fit.to_dict())

    def _criteria_op(session_id: str, body: bytes, op) -> Response:
        session = _session(session_id)
        if session is None:
            return _not_found(session_id)
        with session.lock:
            if session.fit is None:
                return _conflict("no fit yet; upload data and call fit first")
            try:
                doc = _parse_json(body)
                criteria = OptimizationCriteria.from_dict(doc, session.config)
                if session.datasets:
                    criteria = criteria.resolve_baseline(session.combined())
                result = op(session.fit, session.cost, criteria, session.config)
            except LagoError as exc:
                return _invalid([str(exc)])
            session.criteria = criteria
            session.updated = _now()
            if op is optimize_package:
                session.latest_optimize = result.to_dict()
            return _json_response(result.to_dict())

    @app.post("/api/sessions/{session_id}/optimize")
    async def optimize_session(session_id: str, request: Request) -> Response:
        return _criteria_op(session_id, await request.body(), optimize_package)

    @app.post("/api/sessions/{session_id}/confidence-set")
    async def confidence_set_session(session_id: str, request: Request) -> Response:
        return _criteria_op(session_id, await request.body(), confidence_set)

    @app.get("/api/sessions/{session_id}/cost-curve")
    def cost_curve_session(session_id: str, component: str | None = None) -> Response:
        session = _session(session_id)
        if session is None:
            return _not_found(session_id)
        if component is None:
            return _invalid(["query parameter 'component' is required"])
        try:
            points = cost_curve(session.cost, session.config, component)
        except LagoError as exc:
            return _invalid([str(exc)])
        return Response(content=dump_csv(["dose", "cost"], points), media_type="text/csv")

    @app.get("/api/sessions/{session_id}/report")
    def report_session(
        session_id: str, comparison: str = "arm", method: str | None = None
    ) -> Response:
        session = _session(session_id)
        if session is None:
            return _not_found(session_id)
        with session.lock:
            if session.fit is None:
                return _conflict("nothing fitted yet")
            if session.criteria is None:
                return _conflict("no criteria yet; call optimize or confidence-set first")
            missing = [
                s for s in range(1, session.config.num_stages + 1)
                if s not in session.datasets
            ]
            if missing:
                return _conflict(f"no data for stage {missing[0]}")
            try:
                report = final_analysis(
                    list(session.datasets.values()),
                    session.config,
                    session.cost,
                    session.criteria,
                    comparison=comparison,
                    method=method,
                    report_scales=session.fit_scales,
                )
            except LagoError as exc:
                return _invalid([str(exc)])
            return _json_response(report.to_dict())

    @app.post("/api/project")
    async def project(request: Request) -> Response:
        body = await request.body()
        try:
            doc = _parse_json(body)
            if "baseline_rate" not in doc:
                raise DataError("'baseline_rate' is required")
            baseline = float(doc["baseline_rate"])
            if "or" in doc:
                components = [("overall", float(doc["or"]), 1.0)]
            elif "components" in doc:
                components = [
                    (str(c["name"]), float(c["or_per_unit"]), float(c["dose"]))
                    for c in doc["components"]
                ]
            else:
                raise DataError("provide 'or' or 'components'")
            projection = project_outcome(baseline, components)
        except (LagoError, KeyError, TypeError, ValueError) as exc:
            return _invalid([str(exc)])
        return _json_response(projection.to_dict())

    @app.post("/api/power")
    async def power(request: Request) -> Response:
        body = await request.body()
        try:
            doc = _parse_json(body)
            p0 = float(doc["p0"])
            p1 = float(doc["p1"])
            n_per_arm = float(doc["n_per_arm"])
            cluster_size = float(doc.get("cluster_size", 1.0))
            icc = float(doc.get("icc", 0.0))
            alpha = float(doc.get("alpha", 0.05))
            value = power_two_proportions(
                p0, p1, n_per_arm, cluster_size=cluster_size, icc=icc, alpha=alpha
            )
        except KeyError as exc:
            return _invalid([f"missing key {exc}"])
        except (LagoError, TypeError, ValueError) as exc:
            return _invalid([str(exc)])
        return _json_response(
            {
                "p0": p0,
                "p1": p1,
                "n_per_arm": n_per_arm,
                "cluster_size": cluster_size,
                "icc": icc,
                "alpha": alpha,
                "design_effect": design_effect(cluster_size, icc),
                "power": value,
            }
        )

    return app


app = create_app()
