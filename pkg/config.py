from dotenv import load_dotenv
import logging
import os
import sys
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

load_dotenv()


class Settings(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: Literal["exact", "float"] = Field("exact", description="Arithmetic used by the simplex solver")
    tolerance: float = Field(1e-9, gt=0, description="Residual tolerance in float mode")
    pivot_factor: int = Field(10, ge=1, description="Pivot limit is factor * (rows + cols)")
    lp_dump_dir: Optional[str] = Field(None, description="Write every solved LP here when set")
    log_level: str = "info"
    port: int = 8000
    verify_workers: int = Field(1, ge=1)


def get_settings() -> Settings:
    return Settings(
        mode=os.getenv("PRICING_MODE", "exact"),
        tolerance=float(os.getenv("PRICING_TOLERANCE", "1e-9")),
        pivot_factor=int(os.getenv("SIMPLEX_PIVOT_FACTOR", "10")),
        lp_dump_dir=os.getenv("LP_DUMP_DIR") or None,
        log_level=os.getenv("LOG_LEVEL", "info"),
        port=int(os.getenv("PORT", "8000")),
        verify_workers=int(os.getenv("VERIFY_WORKERS", "1")),
    )


def configure_logging(level: Optional[str] = None) -> None:
    # stdout carries JSON reports, so status lines go to stderr
    logging.basicConfig(
        stream=sys.stderr,
        level=(level or get_settings().log_level).upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
