from __future__ import annotations

import os
from typing import List, Optional

from fastapi import FastAPI, File, HTTPException, Query, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from procmat import __version__
from procmat.builder import NAMED_PROCESSES, NamedProcessBuilder
from procmat.conic_solver import SolverError
from procmat.contract_adapter import ContractAdapter
from procmat.facade import AnalysisFacade
from procmat.models import (
    CausalLPRequest,
    CausalLPResponse,
    ProcessFile,
    RegionRow,
    RobustnessRequest,
    RobustnessResponse,
    ValidityResponse,
    WernerWindowResponse,
    WitnessResponse,
)
from procmat.persistence_proxy import PersistenceProxy
from procmat.process_space import FamilyParams
from procmat.store_json import JsonFileDatabase


def _data_path_from_env() -> str:
    return os.getenv(
        "PROCMAT_DATA_PATH",
        os.path.join(os.path.dirname(__file__), "data", "store.json"),
    )


def _threads_from_env() -> int:
    raw = os.getenv("PROCMAT_THREADS", "").strip()
    return max(1, int(raw)) if raw.isdigit() else 1


def create_app() -> FastAPI:
    app = FastAPI(
        title="procmat – Process Matrix Service",
        version=__version__,
        description="Processos bipartidos: validade, separabilidade causal, testemunhas e LP causal (Facade + Adapter + Proxy).",
    )

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    db = JsonFileDatabase(_data_path_from_env())
    proxy = PersistenceProxy(db)
    adapter = ContractAdapter()
    builder = NamedProcessBuilder()

    facade = AnalysisFacade(
        adapter=adapter,
        proxy=proxy,
        builder=builder,
        threads=_threads_from_env(),
    )

    # Erros de domínio: entrada inválida -> 422, solver sem convergência -> 503
    @app.exception_handler(SolverError)
    def solver_error(request: Request, exc: SolverError):
        return JSONResponse(status_code=503, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    def value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/", include_in_schema=False)
    def home():
        return {"service": "procmat", "version": __version__, "named": list(NAMED_PROCESSES)}

    # ------------------------------------------------------------------
    # /named/{name} e /processes/{name}
    # ------------------------------------------------------------------
    @app.get("/named/{name}", response_model=ProcessFile, response_model_exclude_none=True, tags=["Processes"])
    @app.get("/processes/{name}", response_model=ProcessFile, response_model_exclude_none=True,
             tags=["Compatibility"])
    def named(
        name: str,
        q: Optional[float] = Query(default=None, description="Weight of the A<B part (wqe)."),
        eps: Optional[float] = Query(default=None, description="Noise subtraction (wqe)."),
        alpha: Optional[float] = Query(default=None, description="Mixing weight (wmix, wwer)."),
        gamma: Optional[float] = Query(default=None, description="White-noise weight (wwer)."),
    ):
        if name not in NAMED_PROCESSES:
            raise HTTPException(status_code=404, detail=f"unknown process {name!r}")
        values = {k: v for k, v in (("q", q), ("eps", eps), ("alpha", alpha), ("gamma", gamma)) if v is not None}
        return facade.named(name, FamilyParams(**values))

    # ------------------------------------------------------------------
    # /validate (upload de ProcessFile)
    # ------------------------------------------------------------------
    @app.post("/validate", response_model=ValidityResponse, tags=["Analysis"])
    async def validate(file: UploadFile = File(..., description="ProcessFile JSON")):
        """
        Relatório de validade (PSD, normalização, subespaço) de um ficheiro carregado.
        Um processo inválido devolve 200 com valid=false; um ficheiro malformado devolve 422.
        """
        text = (await file.read()).decode("utf-8")
        w = facade.load_process(text, allow_invalid=True)
        return facade.validate(w)

    # ------------------------------------------------------------------
    # /robustness
    # ------------------------------------------------------------------
    @app.post("/robustness", response_model=RobustnessResponse, tags=["Analysis"])
    def robustness(req: RobustnessRequest):
        w = adapter.adapt_process(req.process)
        return facade.robustness(w, req.tol)

    # ------------------------------------------------------------------
    # /witness
    # ------------------------------------------------------------------
    @app.get("/witness", response_model=WitnessResponse, tags=["Analysis"])
    def witness(certify: bool = Query(default=False, description="Certify by SDP.")):
        return facade.witness(certify)

    # ------------------------------------------------------------------
    # /region e /werner-window
    # ------------------------------------------------------------------
    @app.get("/region", response_model=List[RegionRow], tags=["Families"])
    def region(grid: int = Query(default=101, ge=2, le=100_001)):
        return facade.region(grid)

    @app.get("/werner-window", response_model=WernerWindowResponse, tags=["Families"])
    def werner_window(
        alpha: float = Query(default=0.5, ge=0.0, le=1.0),
        gamma: Optional[float] = Query(default=0.2, ge=0.0, le=1.0, description="Membership check point."),
    ):
        return facade.werner_window(alpha, gamma)

    # ------------------------------------------------------------------
    # /causal-lp
    # ------------------------------------------------------------------
    @app.post("/causal-lp", response_model=CausalLPResponse, response_model_exclude_none=True, tags=["Analysis"])
    def causal_lp(req: CausalLPRequest):
        return facade.causal_lp(req.table, req.tol)

    @app.get("/runs", tags=["Runs"])
    def runs(command: Optional[str] = None):
        return facade.list_runs(command)

    return app


app = create_app()
