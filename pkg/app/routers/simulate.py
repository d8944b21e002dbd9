import logging

from fastapi import APIRouter, HTTPException

from app.models.schemas import (
    CampaignResult,
    DesignRequest,
    DesignResponse,
    SimulateRequest,
    SimulateResponse,
)
from app.core.config import settings
from app.core.exceptions import ConfigurationError
from app.core.harness import make_sweep, parse_schemes, run_campaign, run_trial
from app.core.model import NetworkConfig
from app.core.plotting import campaign_graph_base64
from app.core.run_registry import run_registry

logger = logging.getLogger(__name__)

router = APIRouter(tags=["simulate"])


def _network_config(request) -> NetworkConfig:
    return NetworkConfig.from_db(
        request.p_db,
        n_s=request.ns,
        n_r=request.nr,
        n_d=request.nd,
        l_sr=request.lsr,
        l_rd=request.lrd,
        mode=request.mode,
        seed=request.seed,
    )


@router.post("/simulate", response_model=SimulateResponse)
def simulate(request: SimulateRequest):
    """
    Run a Monte Carlo campaign and keep it for later retrieval
    """
    if request.trials > settings.max_api_trials:
        raise HTTPException(
            status_code=400,
            detail=f"trials exceeds the API limit of {settings.max_api_trials}; use the CLI for larger campaigns"
        )

    try:
        config = _network_config(request)
        sweep = make_sweep(request.sweep.variable, request.sweep.values)
        result = run_campaign(config, request.schemes, sweep, request.trials)
    except ConfigurationError as e:
        raise HTTPException(status_code=400, detail=str(e))

    run_id = run_registry.store(result)
    logger.info("Stored run %s (%d records)", run_id, len(result.records))

    return SimulateResponse(
        run_id=run_id,
        summaries=result.summaries,
        graph=campaign_graph_base64(result) if request.include_graph else None,
    )


@router.get("/simulate/{run_id}", response_model=CampaignResult)
def get_run(run_id: str):
    """
    Fetch a stored campaign with its per-trial records
    """
    run_data = run_registry.get(run_id)
    if run_data is None:
        raise HTTPException(
            status_code=404,
            detail="Run not found or expired"
        )
    return run_data.result


@router.post("/design", response_model=DesignResponse)
def design(request: DesignRequest):
    """
    Design every requested scheme on one channel realization
    """
    try:
        config = _network_config(request)
        schemes = parse_schemes(request.schemes)
    except ConfigurationError as e:
        raise HTTPException(status_code=400, detail=str(e))

    records = run_trial(config, schemes, request.trial_index, request.p_db)
    return DesignResponse(records=records)
