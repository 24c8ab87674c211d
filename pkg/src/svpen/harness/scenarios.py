"""Registry of the spectroscopy cases and turbofan design cases, one entry per reproducible run."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..errorkit import CAC_NAMES, TURBOFAN_CASES, Bounds
from ..spectro import LineDatabase, SpectralGrid, SpectroModel

DATA_DIR = Path(__file__).resolve().parents[1] / "data"
DEFAULT_LINE_DB = DATA_DIR / "co2_desk.lines"

# The "desk" model keeps lines at or above this reference intensity that sit
# inside the band; the "reference" model keeps every line and lets
# neighbouring line wings leak in. Their gap plays the two-simulator mismatch.
DESK_LINE_CUTOFF = 1e-22

MAS_STATE_NORM = Bounds((600.0, 0.05), (2000.0, 0.07), ("T", "X"))

BAND_A = SpectralGrid(2375.0, 2395.0, 0.1)
BAND_SHIFT = SpectralGrid(2330.0, 2350.0, 0.1)
BAND_WIDE = SpectralGrid(2330.0, 2370.0, 0.1)

# CAC feasible domain; eta_LC / eta_HC ranges follow the ordering that the
# optimized designs respect (lower pressure compressor below high pressure).
TURBOFAN_DOMAIN = Bounds(
    (5.0, 1.3, 1.2, 8.0, 1300.0, 0.85, 0.82, 0.84, 0.95, 0.86, 0.87),
    (6.0, 2.5, 2.0, 15.0, 1800.0, 0.95, 0.92, 0.94, 0.995, 0.96, 0.97),
    CAC_NAMES,
)
F_REQ = 121.0  # kN
TSFC_REQ = 10.63  # g/(kN s)


@dataclass(frozen=True)
class MasScenario:
    name: str
    truth: tuple  # (T [K], X)
    grid: SpectralGrid
    domain: Bounds
    epsilon: float
    mode: str = "absorption"
    observation_model: str = "desk"  # model that produced the measured spectrum
    description: str = ""


@dataclass(frozen=True)
class TurbofanScenario:
    name: str
    case: str
    epsilon: float = 1e-12  # never met: runs to max_iters and reports the best state
    description: str = ""


MAS_SCENARIOS = {
    s.name: s
    for s in (
        MasScenario("i", (1500.0, 0.06), BAND_A, Bounds((300.0, 0.01), (2000.0, 0.15)), 0.15,
                    observation_model="reference", description="in-range state, measured with the reference physics"),
        MasScenario("ii_low", (300.0, 0.03), BAND_A, Bounds((100.0, 0.01), (1000.0, 0.1)), 0.15,
                    description="cold outlier"),
        MasScenario("ii_high", (3000.0, 0.3), BAND_A, Bounds((2000.0, 0.1), (4000.0, 0.4)), 0.1,
                    description="hot outlier"),
        MasScenario("iii", (300.0, 0.03), BAND_SHIFT, Bounds((100.0, 0.01), (1000.0, 0.1)), 0.15,
                    description="band shifted to 2330-2350"),
        MasScenario("iv", (300.0, 0.03), BAND_WIDE, Bounds((100.0, 0.01), (1000.0, 0.1)), 0.15,
                    description="band widened to 2330-2370"),
        MasScenario("v", (3000.0, 0.3), BAND_WIDE, Bounds((2000.0, 0.1), (4000.0, 0.4)), 0.15, mode="emission",
                    description="emission spectrum"),
    )
}

TURBOFAN_SCENARIOS = {
    "benchmark": TurbofanScenario("benchmark", "benchmark", description="cost and matching regularized"),
    "relax_comp": TurbofanScenario("relax_comp", "relax_comp", description="component parameters made cheap"),
    "relax_match": TurbofanScenario("relax_match", "relax_match", description="matching penalty only above 0.4"),
    "tsfc20": TurbofanScenario("tsfc20", "tsfc20", description="TSFC 20-25 percent below requirement"),
    "unlock": TurbofanScenario("unlock", "unlock", description="push thrust up and TSFC down, no regularizers"),
}
assert set(TURBOFAN_SCENARIOS) == set(TURBOFAN_CASES)


def get_scenario(problem, name):
    table = MAS_SCENARIOS if problem == "mas" else TURBOFAN_SCENARIOS
    if name not in table:
        raise KeyError(f"unknown {problem} scenario {name!r}; choose from {sorted(table)}")
    return table[name]


def load_line_db(path=None):
    return LineDatabase.load(path or DEFAULT_LINE_DB)


def desk_model(db, grid=BAND_A, mode="absorption", cutoff=DESK_LINE_CUTOFF):
    return SpectroModel(db, grid, mode=mode, line_cutoff=cutoff, wing=0.0)


def reference_model(db, grid=BAND_A, mode="absorption"):
    return SpectroModel(db, grid, mode=mode)
