"""Two-spool separate-flow turbofan cycle at a fixed operating point.

Design-point thermodynamics with two calorically perfect gases. Thrust is in
kN and TSFC in g/(kN s). Infeasible cycles raise ``InfeasibleCycleError`` so
callers can turn them into a penalty instead of crashing.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np


class InfeasibleCycleError(ValueError):
    """The requested cycle cannot run (no fuel needed, over-extraction, nozzle cannot expand)."""

    def __init__(self, message, station=None):
        super().__init__(message if station is None else f"{station}: {message}")
        self.station = station


@dataclass(frozen=True)
class Gas:
    cp: float  # J/(kg K)
    gamma: float

    @property
    def exponent(self):
        """(gamma - 1) / gamma."""
        return (self.gamma - 1.0) / self.gamma


COLD = Gas(1005.0, 1.4)
HOT = Gas(1148.0, 4.0 / 3.0)


@dataclass(frozen=True)
class CacParameters:
    BPR: float
    pi_fan: float
    pi_LC: float
    pi_HC: float
    T_max: float
    eta_fan: float
    eta_LC: float
    eta_HC: float
    eta_B: float
    eta_HT: float
    eta_LT: float

    def __post_init__(self):
        if min(self.pi_fan, self.pi_LC, self.pi_HC) < 1.0:
            raise ValueError("pressure ratios must be >= 1")
        effs = (self.eta_fan, self.eta_LC, self.eta_HC, self.eta_B, self.eta_HT, self.eta_LT)
        if not all(0.0 < e <= 1.0 for e in effs):
            raise ValueError("efficiencies must lie in (0, 1]")
        if self.T_max <= 0 or self.BPR <= 0:
            raise ValueError("T_max and BPR must be positive")

    def as_array(self):
        return np.array([getattr(self, f.name) for f in fields(self)])

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (11,):
            raise ValueError(f"expected 11 CAC values, got shape {values.shape}")
        return cls(*(float(v) for v in values))


# published estimate of the CFM56-7B take-off design
CFM56_7B = CacParameters(5.313, 1.636, 2.84, 9.0, 1624.0, 0.864, 0.87, 0.915, 0.85, 0.985, 0.985)


@dataclass(frozen=True)
class FixedParameters:
    m_total: float = 361.0  # kg/s
    eta_inlet: float = 0.98  # total-pressure recovery of the intake
    eta_CN: float = 0.985
    eta_FN: float = 0.99
    LHV: float = 43.1e6  # J/kg
    eta_mech: float = 0.99  # per spool
    cold: Gas = COLD
    hot: Gas = HOT

    def __post_init__(self):
        if self.m_total <= 0:
            raise ValueError("m_total must be positive")
        for name in ("eta_inlet", "eta_CN", "eta_FN", "eta_mech"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")


@dataclass(frozen=True)
class Environment:
    T_amb: float = 288.15  # K
    P_amb: float = 101325.0  # Pa
    mach: float = 0.0

    def __post_init__(self):
        if self.T_amb <= 0 or self.P_amb <= 0 or self.mach < 0:
            raise ValueError(f"invalid environment {self}")


@dataclass
class EnginePerformance:
    F: float  # kN
    TSFC: float  # g/(kN s)
    m_fuel: float  # kg/s
    stations: dict = field(default_factory=dict)  # name -> (Tt, Pt)
    works: dict = field(default_factory=dict)  # component -> W

    def station_table(self):
        rows = ["station,Tt_K,Pt_Pa"]
        rows += [f"{k},{t!r},{p!r}" for k, (t, p) in self.stations.items()]
        return "\n".join(rows) + "\n"


# ------------------------------------------------------------------ components


def compress(Tt_in, Pt_in, pi, eta, gas=COLD):
    """Returns (Tt_out, Pt_out, specific work in J/kg)."""
    if pi < 1.0:
        raise ValueError("compressor pressure ratio must be >= 1")
    if not 0.0 < eta <= 1.0:
        raise ValueError("compressor efficiency must lie in (0, 1]")
    Tt_out = Tt_in * (1.0 + (pi**gas.exponent - 1.0) / eta)
    return Tt_out, Pt_in * pi, gas.cp * (Tt_out - Tt_in)


def burn(Tt_in, T_max, eta_B, m_core, LHV=43.1e6, gas_hot=HOT, gas_cold=COLD):
    """Fuel flow (kg/s) raising the core stream from Tt_in to T_max."""
    if T_max <= Tt_in:
        raise InfeasibleCycleError(f"T_max {T_max:.1f} K does not exceed burner inlet {Tt_in:.1f} K", "burner")
    denom = eta_B * LHV - gas_hot.cp * T_max
    if denom <= 0:
        raise InfeasibleCycleError("fuel heating value cannot reach T_max", "burner")
    return m_core * (gas_hot.cp * T_max - gas_cold.cp * Tt_in) / denom


def expand_turbine(Tt_in, Pt_in, work, eta_t, gas_hot=HOT, m_hot=1.0):
    """Extract ``work`` (W) from ``m_hot`` kg/s; returns (Tt_out, Pt_out)."""
    dT = work / (m_hot * gas_hot.cp)
    if dT >= Tt_in:
        raise InfeasibleCycleError("turbine asked for more than the available enthalpy", "turbine")
    base = 1.0 - dT / (Tt_in * eta_t)
    if base <= 0:
        raise InfeasibleCycleError("turbine work exceeds what the efficiency allows", "turbine")
    return Tt_in - dT, Pt_in * base ** (1.0 / gas_hot.exponent)


def nozzle_exit_velocity(Tt_in, Pt_in, P_ambient, eta_n, gas=COLD):
    """Fully expanded exit velocity (m/s)."""
    if Pt_in <= P_ambient:
        raise InfeasibleCycleError(f"nozzle inlet pressure {Pt_in:.0f} Pa below ambient", "nozzle")
    return float(np.sqrt(2.0 * eta_n * gas.cp * Tt_in * (1.0 - (P_ambient / Pt_in) ** gas.exponent)))


# ----------------------------------------------------------------------- cycle


def simulate_turbofan(cac, fixed=FixedParameters(), env=Environment()):
    cold, hot = fixed.cold, fixed.hot
    st = {}
    Tt0 = env.T_amb * (1.0 + 0.5 * (cold.gamma - 1.0) * env.mach**2)
    Pt0 = env.P_amb * (Tt0 / env.T_amb) ** (1.0 / cold.exponent)
    st["0"] = (Tt0, Pt0)
    st["2"] = (Tt0, Pt0 * fixed.eta_inlet)

    m_core = fixed.m_total / (1.0 + cac.BPR)
    m_bypass = fixed.m_total - m_core

    T13, P13, w_fan = compress(*st["2"], cac.pi_fan, cac.eta_fan, cold)
    st["13"] = (T13, P13)
    T25, P25, w_lc = compress(T13, P13, cac.pi_LC, cac.eta_LC, cold)
    st["25"] = (T25, P25)
    T3, P3, w_hc = compress(T25, P25, cac.pi_HC, cac.eta_HC, cold)
    st["3"] = (T3, P3)

    m_fuel = burn(T3, cac.T_max, cac.eta_B, m_core, fixed.LHV, hot, cold)
    m_hot = m_core + m_fuel
    st["4"] = (cac.T_max, P3)

    W_hc = m_core * w_hc
    W_lp = fixed.m_total * w_fan + m_core * w_lc
    W_ht = W_hc / fixed.eta_mech
    W_lt = W_lp / fixed.eta_mech
    try:
        st["45"] = expand_turbine(cac.T_max, P3, W_ht, cac.eta_HT, hot, m_hot)
        st["5"] = expand_turbine(*st["45"], W_lt, cac.eta_LT, hot, m_hot)
    except InfeasibleCycleError as exc:
        raise InfeasibleCycleError(str(exc), "turbines") from None

    try:
        v_core = nozzle_exit_velocity(*st["5"], env.P_amb, fixed.eta_CN, hot)
    except InfeasibleCycleError:
        raise InfeasibleCycleError(f"core nozzle inlet {st['5'][1]:.0f} Pa below ambient", "core nozzle") from None
    try:
        v_fan = nozzle_exit_velocity(T13, P13, env.P_amb, fixed.eta_FN, cold)
    except InfeasibleCycleError:
        raise InfeasibleCycleError(f"fan nozzle inlet {P13:.0f} Pa below ambient", "fan nozzle") from None

    v_flight = env.mach * np.sqrt(cold.gamma * (cold.cp * cold.exponent) * env.T_amb)
    F = m_bypass * v_fan + m_hot * v_core - fixed.m_total * v_flight
    if F <= 0:
        raise InfeasibleCycleError("net thrust is not positive", "nozzles")
    F_kN = F / 1e3
    works = {"fan": fixed.m_total * w_fan, "LPC": m_core * w_lc, "HPC": W_hc, "HPT": W_ht, "LPT": W_lt}
    return EnginePerformance(F_kN, m_fuel * 1e3 / F_kN, m_fuel, st, works)


# ------------------------------------------------------------------ config file


def _parser():
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep eta_CN / eta_FN case
    return cp


def save_engine_config(path, fixed=FixedParameters(), env=Environment()):
    cp = _parser()
    flat = {k: v for k, v in asdict(fixed).items() if k not in ("cold", "hot")}
    flat.update(cold_cp=fixed.cold.cp, cold_gamma=fixed.cold.gamma, hot_cp=fixed.hot.cp, hot_gamma=fixed.hot.gamma)
    cp["fixed"] = {k: repr(v) for k, v in flat.items()}
    cp["environment"] = {k: repr(v) for k, v in asdict(env).items()}
    buf = io.StringIO()
    cp.write(buf)
    Path(path).write_text(buf.getvalue())


def load_engine_config(path):
    cp = _parser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    f = {k: float(v) for k, v in cp["fixed"].items()} if cp.has_section("fixed") else {}
    cold = Gas(f.pop("cold_cp", COLD.cp), f.pop("cold_gamma", COLD.gamma))
    hot = Gas(f.pop("hot_cp", HOT.cp), f.pop("hot_gamma", HOT.gamma))
    fixed = FixedParameters(cold=cold, hot=hot, **f)
    env = Environment(**{k: float(v) for k, v in cp["environment"].items()}) if cp.has_section("environment") else Environment()
    return fixed, env
