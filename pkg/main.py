import logging

from fastapi import FastAPI, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from config import configure_logging
from database import Base, engine
from experiments_router import router as experiments_router
from ranking_router import router as ranking_router
import models  # noqa: F401 - registers the tables on Base

logger = logging.getLogger(__name__)

app = FastAPI(title="ltr-noise-lab")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

@app.exception_handler(RequestValidationError)
async def invalid_request_handler(request: Request, exc: RequestValidationError):
    """Malformed bodies and out-of-range parameters are client errors"""
    return JSONResponse(status_code=400, content={"detail": jsonable_encoder(exc.errors())})

@app.on_event("startup")
async def startup_event():
    configure_logging()
    Base.metadata.create_all(bind=engine)
    logger.info("ltr-noise-lab ready")

app.include_router(ranking_router)
app.include_router(experiments_router)

@app.get("/")
def read_root():
    return {"message": "ltr-noise-lab: label noise and order preservation in learning to rank"}
