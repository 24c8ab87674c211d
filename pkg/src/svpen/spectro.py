"""Line-by-line absorption and emission spectra of a single absorbing species.

Wavenumbers are in cm^-1, line intensities in cm^-1/(molecule cm^-2), number
densities in molecules/cm^3. Pressure is given in Pa and converted to atm
where the broadening parameters need it.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import constants as const

T_REF = 296.0
ATM = const.atm  # Pa
# second radiation constant hc/k in cm K
C2 = const.h * const.c * 100.0 / const.k
LINE_FIELDS = ("v0", "S0", "E_lower", "gamma_air", "n_air", "delta_air")


class SpectroError(ValueError):
    """Invalid spectroscopic input (bad database, conditions or grid)."""


@dataclass(frozen=True)
class LineRecord:
    v0: float
    S0: float
    E_lower: float
    gamma_air: float
    n_air: float = 0.75
    delta_air: float = 0.0

    def __post_init__(self):
        if not (self.v0 > 0 and self.S0 > 0 and self.gamma_air > 0):
            raise SpectroError(f"invalid line record {self}")


@dataclass(frozen=True)
class PartitionModel:
    """Power-law partition function Q(T) = Q(T0) (T/T0)**beta."""

    Q_T0: float = 286.09
    beta: float = 1.5

    def __call__(self, T):
        return self.Q_T0 * (np.asarray(T, dtype=float) / T_REF) ** self.beta


@dataclass(frozen=True)
class LineDatabase:
    species: str
    molar_mass: float  # g/mol
    partition: PartitionModel
    lines: tuple[LineRecord, ...]

    def __post_init__(self):
        if not self.lines:
            raise SpectroError("line database is empty")
        ordered = tuple(sorted(self.lines, key=lambda r: r.v0))
        object.__setattr__(self, "lines", ordered)

    def __len__(self):
        return len(self.lines)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.lines], dtype=float)

    def with_cutoff(self, s_min):
        """Drop lines weaker than ``s_min`` at the reference temperature."""
        kept = tuple(r for r in self.lines if r.S0 >= s_min)
        if not kept:
            raise SpectroError(f"cutoff {s_min:g} removes every line")
        return replace(self, lines=kept)

    @classmethod
    def load(cls, path):
        text = Path(path).read_text()
        return cls.loads(text)

    @classmethod
    def loads(cls, text):
        meta = {}
        body = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            body.append(line)
        reader = csv.DictReader(body)
        missing = set(LINE_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise SpectroError(f"line file header lacks {sorted(missing)}")
        lines = [LineRecord(**{k: float(row[k]) for k in LINE_FIELDS}) for row in reader]
        try:
            partition = PartitionModel(float(meta.get("Q_T0", 286.09)), float(meta.get("beta", 1.5)))
            return cls(meta.get("species", "unknown"), float(meta["molar_mass"]), partition, tuple(lines))
        except KeyError as exc:
            raise SpectroError(f"line file preamble lacks {exc}") from None

    def dumps(self):
        out = io.StringIO()
        out.write(f"# species={self.species}\n# molar_mass={self.molar_mass!r}\n")
        out.write(f"# Q_T0={self.partition.Q_T0!r}\n# beta={self.partition.beta!r}\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(LINE_FIELDS)
        for r in self.lines:
            writer.writerow([repr(getattr(r, k)) for k in LINE_FIELDS])
        return out.getvalue()

    def save(self, path):
        Path(path).write_text(self.dumps())


@dataclass(frozen=True)
class GasConditions:
    T: float  # K
    X: float  # mole fraction
    P: float = ATM  # Pa
    l: float = 10.0  # cm

    def __post_init__(self):
        if not (self.T > 0 and 0 <= self.X <= 1 and self.P > 0 and self.l > 0):
            raise SpectroError(f"invalid gas conditions {self}")

    @property
    def number_density(self):
        """Absorber molecules per cm^3."""
        return self.P * self.X / (const.k * self.T) * 1e-6


@dataclass(frozen=True)
class SpectralGrid:
    """Half-open grid [v_start, v_end) with spacing ``step``."""

    v_start: float
    v_end: float
    step: float = 0.1

    def __post_init__(self):
        if not (self.v_end > self.v_start and self.step > 0):
            raise SpectroError(f"invalid grid {self}")

    @property
    def size(self):
        return int(round((self.v_end - self.v_start) / self.step))

    @property
    def wavenumbers(self):
        return self.v_start + self.step * np.arange(self.size)


@dataclass(frozen=True)
class Spectrum:
    grid: SpectralGrid
    values: np.ndarray
    kind: str = "absorptivity"

    def to_text(self):
        rows = ["wavenumber,value"]
        rows += [f"{v!r},{a!r}" for v, a in zip(self.grid.wavenumbers.tolist(), self.values.tolist())]
        return "\n".join(rows) + "\n"


def line_intensity(line, T, partition=PartitionModel()):
    """Line intensity S(T) scaled from the 296 K reference value."""
    if np.any(np.asarray(T) <= 0):
        raise SpectroError("temperature must be positive")
    if isinstance(line, LineRecord):
        S0, E, v0 = line.S0, line.E_lower, line.v0
    else:
        S0, E, v0 = line
    T = np.asarray(T, dtype=float)
    boltz = np.exp(-C2 * E / T) / np.exp(-C2 * E / T_REF)
    stim = -np.expm1(-C2 * v0 / T) / -np.expm1(-C2 * v0 / T_REF)
    return S0 * partition(T_REF) * T_REF * boltz * stim / (partition(T) * T)


def doppler_hwhm(v0, T, molar_mass):
    m = molar_mass * 1e-3 / const.N_A
    return v0 / const.c * np.sqrt(2.0 * np.log(2.0) * const.k * T / m)


def lorentz_hwhm(gamma_air, n_air, T, P):
    return gamma_air * (P / ATM) * (T_REF / T) ** n_air


def voigt_hwhm(alpha_d, gamma_l):
    """Olivero-Longbothum approximation of the Voigt half width."""
    return 0.5346 * gamma_l + np.sqrt(0.2166 * gamma_l**2 + alpha_d**2)


def pseudo_voigt(v, center, alpha_d, gamma_l):
    """Area-normalized Gaussian/Lorentzian blend weighted by gamma_l/(gamma_l+alpha_d).

    Both components share the Voigt half width, so the pure-Doppler and
    pure-Lorentz limits come out exact.
    """
    eta = gamma_l / (gamma_l + alpha_d)
    hw = voigt_hwhm(alpha_d, gamma_l)
    dv = v - center
    gauss = np.sqrt(np.log(2.0) / np.pi) / hw * np.exp(-np.log(2.0) * (dv / hw) ** 2)
    lorentz = hw / np.pi / (dv**2 + hw**2)
    return eta * lorentz + (1.0 - eta) * gauss


def line_shape(line, T, P, molar_mass, v_grid):
    """Pseudo-Voigt profile (cm) of one line at temperature T and pressure P."""
    if T <= 0 or P <= 0:
        raise SpectroError("temperature and pressure must be positive")
    v_grid = np.asarray(v_grid, dtype=float)
    center = line.v0 + line.delta_air * P / ATM
    alpha_d = doppler_hwhm(line.v0, T, molar_mass)
    gamma_l = lorentz_hwhm(line.gamma_air, line.n_air, T, P)
    return pseudo_voigt(v_grid, center, alpha_d, gamma_l)


def absorption_coefficient(db, cond, grid):
    """Spectral absorption coefficient k_v (cm^-1) summed over all lines."""
    if not isinstance(db, LineDatabase) or len(db) == 0:
        raise SpectroError("absorption needs a nonempty line database")
    v = grid.wavenumbers
    v0 = db.column("v0")[:, None]
    S = line_intensity((db.column("S0"), db.column("E_lower"), db.column("v0")), cond.T, db.partition)
    center = v0 + db.column("delta_air")[:, None] * cond.P / ATM
    alpha_d = doppler_hwhm(v0, cond.T, db.molar_mass)
    gamma_l = lorentz_hwhm(db.column("gamma_air"), db.column("n_air"), cond.T, cond.P)[:, None]
    phi = pseudo_voigt(v[None, :], center, alpha_d, gamma_l)
    return (S[:, None] * phi).sum(axis=0) * cond.number_density


def beer_lambert(k_v, l):
    return -np.expm1(-np.asarray(k_v) * l)


def simulate_absorption(db, cond, grid):
    alpha = beer_lambert(absorption_coefficient(db, cond, grid), cond.l)
    return Spectrum(grid, alpha, "absorptivity")


def planck_radiance(v, T):
    """Blackbody spectral radiance in W m^-2 sr^-1 Hz^-1 at wavenumber v (cm^-1)."""
    nu = const.c * 100.0 * np.asarray(v, dtype=float)
    x = const.h * nu / (const.k * T)
    with np.errstate(over="ignore"):
        return 2.0 * const.h * nu**3 / const.c**2 / np.expm1(x)


def emission_from_absorptivity(alpha, v, T, convention="transmitted"):
    blackbody = planck_radiance(v, T)
    if convention == "transmitted":
        return blackbody * (1.0 - alpha)
    if convention == "kirchhoff":
        return blackbody * alpha
    raise SpectroError(f"unknown emission convention {convention!r}")


def simulate_emission(db, cond, grid, convention="transmitted"):
    """Emission radiance; ``transmitted`` uses I_B (1 - alpha), ``kirchhoff`` uses I_B alpha."""
    alpha = simulate_absorption(db, cond, grid).values
    return Spectrum(grid, emission_from_absorptivity(alpha, grid.wavenumbers, cond.T, convention), "radiance")


@dataclass(frozen=True)
class SpectroModel:
    """Forward map (T, X) -> spectrum for a fixed database, band and optical setup."""

    db: LineDatabase
    grid: SpectralGrid
    P: float = ATM
    l: float = 10.0
    mode: str = "absorption"
    convention: str = "transmitted"
    line_cutoff: float = 0.0
    wing: float = np.inf

    def __post_init__(self):
        if self.mode not in ("absorption", "emission"):
            raise SpectroError(f"unknown spectrum mode {self.mode!r}")
        lo, hi = self.grid.v_start - self.wing, self.grid.v_end + self.wing
        kept = tuple(r for r in self.db.lines if r.S0 >= self.line_cutoff and lo <= r.v0 <= hi)
        if not kept:
            raise SpectroError("no database line survives the cutoff and wing window")
        object.__setattr__(self, "_active", replace(self.db, lines=kept))

    @property
    def active_db(self):
        """Lines actually summed: intensity above ``line_cutoff`` and centered within ``wing`` of the band."""
        return self._active

    def with_grid(self, grid):
        return replace(self, grid=grid)

    def __call__(self, state):
        T, X = float(state[0]), float(state[1])
        cond = GasConditions(T, X, self.P, self.l)
        if self.mode == "absorption":
            return simulate_absorption(self._active, cond, self.grid).values
        return simulate_emission(self._active, cond, self.grid, self.convention).values
