from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


# Field order is the CSV column order.
class ResultRow(BaseModel):
    scenario_id: str
    iteration: int
    receiver: str
    traffic: str
    n_sim: int
    n_reported: int
    transmitted: int = 0
    succeeded: int = 0
    success_rate: Optional[float] = None  # absent when nothing was transmitted
    throughput_pps: float = 0.0
    goodput_pps: float = 0.0
    master_seed: int = 0


class ScenarioSummary(BaseModel):
    scenario_id: str
    receiver: str
    traffic: str
    n_sim: int
    n_reported: int
    iterations: int
    mean_success: Optional[float] = None
    success_stddev: float = 0.0
    pooled_success: Optional[float] = None
    mean_throughput_pps: float = 0.0
    mean_goodput_pps: float = 0.0
    cdf_mean: Optional[float] = None


class NodeRow(BaseModel):
    scenario_id: str
    iteration: int
    node_id: int
    transmitted: int = 0
    succeeded: int = 0
    success_rate: Optional[float] = None


class CdfPoint(BaseModel):
    scenario_id: str
    success: float
    cdf: float


class CampaignDocument(BaseModel):
    """JSON output: rows plus per-scenario aggregates (and per-node rows when requested)."""
    rows: List[ResultRow] = Field(default_factory=list)
    aggregates: Dict[str, ScenarioSummary] = Field(default_factory=dict)
    nodes: Optional[List[NodeRow]] = None


ROW_FIELDS = tuple(ResultRow.model_fields)
SUMMARY_FIELDS = tuple(ScenarioSummary.model_fields)
NODE_FIELDS = tuple(NodeRow.model_fields)
CDF_FIELDS = tuple(CdfPoint.model_fields)
