import os

# in-memory database for the app's own engine; set before database.py is imported
os.environ.setdefault("DATABASE_URL", "sqlite://")

import numpy as np
import pytest
from fastapi.testclient import TestClient
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

import config
from data import Dataset, QueryGroup, SyntheticSpec, generate_synthetic
from database import Base
from dependencies import get_db
from main import app


@pytest.fixture
def separable_ds():
    """Threshold labels and one shared theta: a linear scorer can rank every query perfectly"""
    return generate_synthetic(SyntheticSpec(num_queries=100, docs_per_query=10, feature_dim=5, seed=1,
                                            label_mode="threshold", theta_mode="shared"))


@pytest.fixture
def pool_ds():
    return generate_synthetic(SyntheticSpec(num_queries=200, docs_per_query=10, feature_dim=5, seed=2,
                                            prevalence_range=(0.1, 0.9)))


@pytest.fixture
def tiny_ds():
    return Dataset((
        QueryGroup("a", np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]), np.array([1, 0, 1])),
        QueryGroup("b", np.array([[0.2, 0.1], [0.9, 0.3]]), np.array([0, 1])),
    ), feature_dim=2)


@pytest.fixture
def db_session():
    engine = create_engine("sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool)
    Base.metadata.create_all(bind=engine)
    session = sessionmaker(autocommit=False, autoflush=False, bind=engine)()
    try:
        yield session
    finally:
        session.close()
        engine.dispose()


@pytest.fixture
def client(db_session, tmp_path, monkeypatch):
    monkeypatch.setattr(config, "LTR_OUTPUT_DIR", str(tmp_path))
    app.dependency_overrides[get_db] = lambda: db_session
    with TestClient(app) as c:
        yield c
    app.dependency_overrides.clear()
