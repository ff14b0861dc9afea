import json

import pytest

from analysis import CoefficientSummary, reynolds, strouhal
from campaign import SweepTable
from config import GridSpec, SimulationConfig

AIR_NU = 1.5e-5
DIAMETERS = {"ID": 0.10, "MD1": 0.05, "MD2": 0.05}

# Published results: speed -> {design: (frequency Hz, CL, CD, printed drift)}
PUBLISHED_RESULTS = {
    1.0: {"ID": (2.00, 140.00, 198.30, 0.71), "MD1": (5.00, 18.00, 19.20, 0.94), "MD2": (6.75, 6.00, 4.00, 1.50)},
    2.0: {"ID": (5.00, 124.16, 149.16, 0.83), "MD1": (9.00, 18.50, 16.00, 1.16), "MD2": (14.00, 7.50, 4.00, 1.88)},
    3.0: {"ID": (7.50, 123.75, 128.75, 0.96), "MD1": (13.50, 15.04, 16.00, 0.94), "MD2": (20.00, 10.00, 4.00, 2.50)},
    4.0: {"ID": (10.00, 99.00, 117.70, 0.84), "MD1": (17.50, 15.59, 16.90, 0.92), "MD2": (25.00, 11.20, 4.00, 2.80)},
    5.0: {"ID": (9.30, 95.70, 78.50, 1.22), "MD1": (17.00, 10.77, 11.68, 0.92), "MD2": (28.00, 12.00, 4.00, 3.00)},
}

# ID only starts to oscillate at 3 m/s, the modified designs already at 1 m/s
ONSET_SPEEDS = {"ID": 3.0, "MD1": 1.0, "MD2": 1.0}


def published_rows():
    """(design, U, frequency, CL, CD, printed drift) for all 15 published cases."""
    return [(tag, speed, *values) for speed, row in PUBLISHED_RESULTS.items() for tag, values in row.items()]


def make_summary(tag, speed, frequency, cl, cd, oscillating=True):
    d = DIAMETERS.get(tag, 0.1)
    return CoefficientSummary(design=tag, U=speed, frequency_hz=frequency, cl=cl, cd=cd,
                              strouhal=strouhal(frequency, d, speed), reynolds=reynolds(speed, d, AIR_NU),
                              oscillating=oscillating)


@pytest.fixture
def published_summaries():
    return [make_summary(tag, speed, f, cl, cd, speed >= ONSET_SPEEDS[tag])
            for tag, speed, f, cl, cd, _ in published_rows()]


@pytest.fixture
def published_table(published_summaries):
    return SweepTable.from_summaries(published_summaries, config_digest="published")


@pytest.fixture
def small_grid_spec():
    return GridSpec(nx=64, ny=32)


@pytest.fixture
def short_cfg():
    """Laminar surrogate run lasting one second on a coarse grid."""
    return SimulationConfig(re_surrogate=100.0, t_end=1.0)


@pytest.fixture
def smoke_config(tmp_path):
    data = {
        "designs": ["MD1"],
        "speeds": [1, 2],
        "target_speed": 1.5,
        "re_surrogate": 100,
        "t_end": 1.0,
        "grid": {"nx": 64, "ny": 32},
    }
    path = tmp_path / "smoke.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path
