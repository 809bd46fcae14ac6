from fastapi import FastAPI, HTTPException, UploadFile, File, BackgroundTasks
from fastapi.responses import JSONResponse
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field
from typing import Optional, Dict, Any, Literal
import logging
import os
import uuid
from datetime import datetime
from pathlib import Path

from config import configure_logging, get_settings
from pipeline import EXIT_ARBITRAGE, EXIT_INPUT_INVALID, EXIT_OK, price_document, run_arbitrage, run_pricing

logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title="Delayed-Information Pricing API",
    description="Super-replication prices, no-gap checks and price bounds for claims on scenario-tree markets",
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc"
)

UPLOAD_DIR = Path(os.getenv("UPLOAD_DIR", "uploads"))

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Data models
Mode = Literal["exact", "float"]


class PricingRequest(BaseModel):
    market_path: str = Field(..., description="Path to an existing market JSON file")
    claim_path: Optional[str] = Field(None, description="Path to an existing claim JSON file")
    mode: Optional[Mode] = Field(None, description="Simplex arithmetic; defaults to PRICING_MODE")


class PricingResponse(BaseModel):
    request_id: str
    status: str
    message: str
    timestamp: str


class PricingResult(BaseModel):
    request_id: str
    task: str
    status: str
    exit_code: int
    document: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[str] = None
    timestamp: str
    processing_time: float


# Storage for pricing jobs (in-process only)
pricing_results: Dict[str, PricingResult] = {}
pricing_queue: Dict[str, Dict[str, Any]] = {}


# Utility functions
def save_uploaded_file(upload_file: UploadFile) -> str:
    """Save uploaded file and return the file path"""
    UPLOAD_DIR.mkdir(parents=True, exist_ok=True)
    file_path = UPLOAD_DIR / f"{uuid.uuid4()}{Path(upload_file.filename).suffix}"
    with open(file_path, "wb") as buffer:
        buffer.write(upload_file.file.read())
    return str(file_path)


def cleanup_file(file_path: str):
    try:
        if os.path.exists(file_path):
            os.remove(file_path)
            logger.info(f"✅ Cleaned up temporary file: {file_path}")
    except OSError as e:
        logger.warning(f"⚠️ Could not remove {file_path}: {e}")


def _check_json(upload: UploadFile, label: str):
    if not upload.filename.lower().endswith(".json"):
        raise HTTPException(status_code=400, detail=f"{label} must be a .json document")


def _enqueue(task: str, paths: Dict[str, Optional[str]], mode: Optional[str], uploaded: bool) -> str:
    request_id = str(uuid.uuid4())
    pricing_queue[request_id] = {
        "status": "queued",
        "task": task,
        "mode": mode or get_settings().mode,
        "uploaded": uploaded,
        "timestamp": datetime.now().isoformat(),
        **{k: v for k, v in paths.items() if v},
    }
    return request_id


def process_job(request_id: str):
    """Background task running the pricing pipeline"""
    start_time = datetime.now()
    job = pricing_queue[request_id]
    job["status"] = "processing"
    try:
        if job["task"] == "arbitrage":
            state = run_arbitrage(job["market_path"], mode=job["mode"])
            document = {"exit_code": state.get("exit_code", EXIT_OK)}
            if state.get("witness") is not None:
                document["witness"] = state["witness"].model_dump(mode="json")["q"]
            if state.get("error"):
                document["error"] = state["error"]
        else:
            state = run_pricing(job["market_path"], job.get("claim_path"), mode=job["mode"])
            document = price_document(state)
        exit_code = state.get("exit_code", EXIT_OK)
        error = state.get("error")
    except Exception as e:
        logger.error(f"❌ Job {request_id} crashed: {e}")
        document, exit_code, error = {}, -1, str(e)

    status = "completed" if exit_code == EXIT_OK else "failed"
    pricing_results[request_id] = PricingResult(
        request_id=request_id,
        task=job["task"],
        status=status,
        exit_code=exit_code,
        document=document,
        error=error,
        timestamp=datetime.now().isoformat(),
        processing_time=(datetime.now() - start_time).total_seconds(),
    )
    job["status"] = status
    if error:
        job["error"] = error
    if job.get("uploaded"):
        for key in ("market_path", "claim_path"):
            if key in job:
                cleanup_file(job[key])


# API Endpoints
@app.get("/", response_model=Dict[str, Any])
async def root():
    return {
        "message": "Delayed-Information Pricing API",
        "version": "1.0.0",
        "docs": "/docs",
        "health": "/health"
    }


@app.get("/health", response_model=Dict[str, Any])
async def health_check():
    settings = get_settings()
    return {
        "status": "healthy",
        "timestamp": datetime.now().isoformat(),
        "mode": settings.mode,
        "tolerance": settings.tolerance,
    }


@app.post("/price/upload", response_model=PricingResponse)
async def price_upload(
    background_tasks: BackgroundTasks,
    market_file: UploadFile = File(..., description="Market JSON document"),
    claim_file: UploadFile = File(..., description="Claim JSON document"),
    mode: Optional[Mode] = None,
):
    """Upload a market and a claim and price the claim"""
    _check_json(market_file, "market_file")
    _check_json(claim_file, "claim_file")
    paths = {"market_path": save_uploaded_file(market_file), "claim_path": save_uploaded_file(claim_file)}
    request_id = _enqueue("price", paths, mode, uploaded=True)
    background_tasks.add_task(process_job, request_id)
    return PricingResponse(
        request_id=request_id,
        status="queued",
        message="Pricing started successfully",
        timestamp=datetime.now().isoformat()
    )


@app.post("/price/file", response_model=PricingResponse)
async def price_existing_files(background_tasks: BackgroundTasks, request: PricingRequest):
    """Price a claim from files already on the server"""
    for path in (request.market_path, request.claim_path):
        if not path:
            raise HTTPException(status_code=400, detail="market_path and claim_path are required")
        if not os.path.exists(path):
            raise HTTPException(status_code=404, detail=f"File not found: {path}")
    paths = {"market_path": request.market_path, "claim_path": request.claim_path}
    request_id = _enqueue("price", paths, request.mode, uploaded=False)
    background_tasks.add_task(process_job, request_id)
    return PricingResponse(
        request_id=request_id,
        status="queued",
        message="Pricing started successfully",
        timestamp=datetime.now().isoformat()
    )


@app.post("/arbitrage/upload", response_model=PricingResponse)
async def arbitrage_upload(
    background_tasks: BackgroundTasks,
    market_file: UploadFile = File(..., description="Market JSON document"),
    mode: Optional[Mode] = None,
):
    """Search for an equivalent martingale measure"""
    _check_json(market_file, "market_file")
    request_id = _enqueue("arbitrage", {"market_path": save_uploaded_file(market_file)}, mode, uploaded=True)
    background_tasks.add_task(process_job, request_id)
    return PricingResponse(
        request_id=request_id,
        status="queued",
        message="Arbitrage check started successfully",
        timestamp=datetime.now().isoformat()
    )


@app.get("/status/{request_id}", response_model=Dict[str, Any])
async def get_status(request_id: str):
    if request_id not in pricing_queue:
        raise HTTPException(status_code=404, detail="Request ID not found")
    queue_info = pricing_queue[request_id]
    response = {"request_id": request_id, "status": queue_info["status"], "queue_info": queue_info}
    if request_id in pricing_results:
        response["result"] = pricing_results[request_id].model_dump()
    return response


@app.get("/results/{request_id}", response_model=PricingResult)
async def get_results(request_id: str):
    if request_id not in pricing_results:
        raise HTTPException(status_code=404, detail="Pricing results not found")
    result = pricing_results[request_id]
    if result.exit_code == EXIT_INPUT_INVALID:
        raise HTTPException(status_code=422, detail=f"Invalid input: {result.error}")
    if result.exit_code == EXIT_ARBITRAGE:
        raise HTTPException(status_code=409, detail=f"Market admits arbitrage: {result.error}")
    if result.exit_code != EXIT_OK:
        raise HTTPException(status_code=500, detail=f"Pricing failed: {result.error}")
    return result


@app.get("/queue", response_model=Dict[str, Any])
async def get_queue_status():
    statuses = [r["status"] for r in pricing_queue.values()]
    return {
        "total_requests": len(pricing_queue),
        "completed": statuses.count("completed"),
        "processing": statuses.count("processing"),
        "queued": statuses.count("queued"),
        "failed": statuses.count("failed"),
        "requests": pricing_queue
    }


@app.delete("/cleanup/all")
async def cleanup_all():
    for queue_info in pricing_queue.values():
        if queue_info.get("uploaded"):
            for key in ("market_path", "claim_path"):
                if key in queue_info:
                    cleanup_file(queue_info[key])
    pricing_results.clear()
    pricing_queue.clear()
    return {"message": "Cleaned up all pricing jobs"}


@app.delete("/cleanup/{request_id}")
async def cleanup_job(request_id: str):
    pricing_results.pop(request_id, None)
    queue_info = pricing_queue.pop(request_id, None)
    if queue_info and queue_info.get("uploaded"):
        for key in ("market_path", "claim_path"):
            if key in queue_info:
                cleanup_file(queue_info[key])
    return {"message": f"Cleaned up pricing job {request_id}"}


# Error handlers
@app.exception_handler(Exception)
async def global_exception_handler(request, exc):
    return JSONResponse(
        status_code=500,
        content={
            "error": "Internal server error",
            "detail": str(exc),
            "timestamp": datetime.now().isoformat()
        }
    )


if __name__ == "__main__":
    import uvicorn

    configure_logging()
    settings = get_settings()
    print("🚀 Starting Delayed-Information Pricing API...")
    print(f"📚 API Documentation available at: http://localhost:{settings.port}/docs")

    uvicorn.run(
        "api:app",
        host="0.0.0.0",
        port=settings.port,
        reload=True,
        log_level=settings.log_level
    )
