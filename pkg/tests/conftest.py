import numpy as np
import pytest

from src.model import (
    GaussianSpec,
    ProblemSpec,
    SeededRng,
    SensingSequence,
    SignalModel,
    draw_sensing,
    generate,
    measure,
)


@pytest.fixture(autouse=True)
def quiet_env(monkeypatch):
    monkeypatch.delenv("VERBOSE", raising=False)
    monkeypatch.delenv("DEBUG", raising=False)


@pytest.fixture
def jsm2r_spec():
    return ProblemSpec(
        n_vars=20,
        n_anomalies=2,
        anomaly_set=(4, 11),
        prevalent=GaussianSpec(0.0, 1.0),
        anomalous=GaussianSpec(7.0, 1.0),
        model=SignalModel.JSM2R,
    )


@pytest.fixture
def jsm3r_spec():
    return ProblemSpec(
        n_vars=20,
        n_anomalies=2,
        anomaly_set=(4, 11),
        prevalent=GaussianSpec(7.0, 1.0),
        anomalous=GaussianSpec(0.0, 10.0),
        model=SignalModel.JSM3R,
    )


@pytest.fixture
def identity_sensing():
    """Factory: T copies of the N x N identity."""

    def build(n_vars, n_steps=1):
        return SensingSequence(np.broadcast_to(np.eye(n_vars), (n_steps, n_vars, n_vars)))

    return build


@pytest.fixture
def draw():
    """Factory: seeded (signals, sensing, measurements) for a spec."""

    def build(spec, m_per_step, n_steps, seed=0):
        rng = SeededRng(seed)
        signals = generate(spec, n_steps, rng)
        sensing = draw_sensing(m_per_step, spec.n_vars, n_steps, rng)
        return signals, sensing, measure(sensing, signals)

    return build
