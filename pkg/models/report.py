from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

from models.run import StrategyId


class TableLayout(str, Enum):
    PUBLISHED = "paper-table1"
    FLAT = "flat"
    DELTA = "delta"


class MachineFormat(str, Enum):
    CSV = "csv"
    STRUCTURED = "structured"


class ReportRow(BaseModel):
    """One (model, strategy, dataset) cell group of a comparison table."""

    model_config = ConfigDict(frozen=True)

    model: str
    strategy: StrategyId
    dataset_id: str
    accuracy: float = Field(ge=0.0, le=1.0)
    macro_f1: float = Field(ge=0.0, le=1.0)
    n: int = Field(default=0, ge=0)
    unparseable_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    # "published" rows are reference values, never harness output
    source: str = "harness"
