"""HTTP front end over the experiment drivers.

Every endpoint does the work synchronously in the request and reports artifact
paths on the shared filesystem. Domain failures map onto structured error
bodies: config problems are 400/"config", data problems 400/"data", and
solver-side numerical or protocol failures 500/"solver".
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import (
    ConfigError,
    DataError,
    DimensionError,
    InfeasibleError,
    NumericalError,
    ProtocolError,
)
from ..experiments import run_detect, run_fit, run_sweep, run_synth
from .schemas import (
    DetectRequest,
    DetectResponse,
    FitRequest,
    FitResponse,
    HealthResponse,
    MetricsRecord,
    SweepCell,
    SweepRequest,
    SweepResponse,
    SynthRequest,
    SynthResponse,
)

_ERROR_KINDS = (
    (ConfigError, 400, "config"),
    (DataError, 400, "data"),
    (DimensionError, 400, "data"),
    (NumericalError, 500, "solver"),
    (ProtocolError, 500, "solver"),
    (InfeasibleError, 500, "solver"),
)


def create_app() -> FastAPI:
    app = FastAPI(title="fedssp", version=__version__)

    for exc_type, status, kind in _ERROR_KINDS:
        def handler(request: Request, exc: Exception,
                    status=status, kind=kind) -> JSONResponse:
            return JSONResponse(status_code=status,
                                content={"detail": {"kind": kind,
                                                    "message": str(exc)}})
        app.add_exception_handler(exc_type, handler)

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/fit", response_model=FitResponse)
    def fit(req: FitRequest) -> FitResponse:
        art = run_fit(req.config)
        return FitResponse(
            run_dir=art.run_dir,
            rounds_completed=art.rounds_completed,
            stopped=art.result.stopped,
            final_objective=art.final_objective,
            final_consensus=art.final_consensus,
            model_path=art.model_path,
            history_path=art.history_path,
            train_scores_path=art.train_scores_path,
            config_path=art.config_path,
        )

    @app.post("/detect", response_model=DetectResponse)
    def detect(req: DetectRequest) -> DetectResponse:
        art = run_detect(req.model_dir, quantile=req.quantile,
                         test_path=req.test_path, out_dir=req.out_dir)
        return DetectResponse(report=MetricsRecord(**art.report.to_record()),
                              report_path=art.report_path,
                              scores_path=art.scores_path)

    @app.post("/sweep", response_model=SweepResponse)
    def sweep(req: SweepRequest) -> SweepResponse:
        art = run_sweep(req.config, req.p_values, req.q_values)
        return SweepResponse(cells=[SweepCell(**row) for row in art.rows],
                             csv_path=art.csv_path, json_path=art.json_path,
                             out_dir=art.out_dir)

    @app.post("/synth", response_model=SynthResponse)
    def synth(req: SynthRequest) -> SynthResponse:
        art = run_synth(req.spec, req.out_dir, seed=req.seed)
        return SynthResponse(train_path=art.train_path, test_path=art.test_path,
                             basis_path=art.basis_path, meta_path=art.meta_path,
                             n_train=art.n_train, n_test=art.n_test)

    return app


app = create_app()
