"""
ICU-SIR query server

HTTP endpoints over the closed-form toolkit:
- zone tips and memoized boundary curves
- zone classification of a state
- greedy value W, its gradient and the HJ residual
- greedy trajectory summaries
"""

from typing import Optional

import numpy as np
from fastapi import FastAPI
from loguru import logger
from pydantic import BaseModel, Field

from . import __version__
from .config import AffineCostConfig, CostConfig, build_cost, settings
from .errors import IcuSirError
from .params import EXAMPLE1, EXAMPLE1_POPULATION, EpidemicParams, State
from .policy import greedy_simulate, hj_residual, is_differentiable, value_gradient, value_W
from .zones import classify, data_tips, infection_grid, zone_curves

app = FastAPI(title="ICU-SIR", version=__version__)


class PointRequest(BaseModel):
    s: float
    i: float
    params: EpidemicParams = EXAMPLE1


class ValueRequest(PointRequest):
    cost: CostConfig = Field(default_factory=AffineCostConfig)
    hj_controls: int = Field(default=64, ge=2)


class GreedyRequest(ValueRequest):
    horizon: float = Field(default=5000.0, gt=0)
    step: float = Field(default=1e-2, gt=0)


@app.on_event("startup")
async def startup():
    logger.info(f"Starting ICU-SIR server on {settings.host}:{settings.port}")
    logger.info("✅ ICU-SIR server ready!")


@app.get("/health")
async def health():
    return {"status": "ok", "version": __version__}


@app.get("/api/zones")
async def zones(
    beta: float = EXAMPLE1.beta,
    gamma: float = EXAMPLE1.gamma,
    abar: float = EXAMPLE1.abar,
    istar: float = EXAMPLE1.istar,
    population: Optional[int] = EXAMPLE1_POPULATION,
    n: int = 64,
):
    """
    Data tips plus plotting curves read from the memoized interpolants.

    curl "http://localhost:8765/api/zones?beta=1.01"
    """
    try:
        p = EpidemicParams(beta=beta, gamma=gamma, abar=abar, istar=istar)
    except ValueError as e:
        return {"error": str(e)}
    grid = infection_grid(p, max(2, n))
    curves = {name: np.asarray(curve.smooth(grid)).tolist() for name, curve in zone_curves(p).items()}
    return {**data_tips(p, population), "i": grid.tolist(), "curves": curves}


@app.post("/api/classify")
async def classify_point(req: PointRequest):
    x = State(req.s, req.i)
    zone = classify(req.params, x)
    return {"s": x.s, "i": x.i, "zone": zone.value, "viable": zone.viable}


@app.post("/api/value")
async def value(req: ValueRequest):
    """W, gradient and HJ residual at one point."""
    p, x = req.params, State(req.s, req.i)
    try:
        c = build_cost(req.cost)
        out = {"s": x.s, "i": x.i, "zone": classify(p, x).value, "W": value_W(p, c, x)}
        if is_differentiable(p, x):
            out["gradient"] = list(value_gradient(p, c, x))
            hj = hj_residual(p, c, x, req.hj_controls)
            out["hj_residual"] = hj.max_residual
            out["argmax_a"] = hj.argmax_a
        return out
    except IcuSirError as e:
        logger.warning(f"value query failed at ({x.s}, {x.i}): {e}")
        return {"error": str(e)}


@app.post("/api/greedy")
async def greedy(req: GreedyRequest):
    p, x = req.params, State(req.s, req.i)
    try:
        res = greedy_simulate(p, x, build_cost(req.cost), req.horizon, req.step)
    except IcuSirError as e:
        return {"error": str(e)}
    tr = res.trajectory
    return {
        "cost": res.cost,
        "tau_green": res.tau_green,
        "segments": res.segments,
        "max_infection": tr.max_infection(),
        "endpoint": [tr.endpoint.s, tr.endpoint.i],
        "samples": len(tr),
    }


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("src.icusir.api:app", host=settings.host, port=settings.port, reload=True)
