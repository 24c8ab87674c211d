"""Error calculation: discrepancy terms, feasible-domain regularizers and weighted totals.

All functions take plain floats or numpy arrays and return nonnegative scalars
(except the ``unlock`` performance score, which is bounded below by exp(-inf)).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# cycle (first five) and component (last six) ordering of the CAC vector
CAC_NAMES = (
    "BPR", "pi_fan", "pi_LC", "pi_HC", "T_max",
    "eta_fan", "eta_LC", "eta_HC", "eta_B", "eta_HT", "eta_LT",
)
N_CYCLE = 5
TURBOFAN_CASES = ("benchmark", "relax_comp", "relax_match", "tsfc20", "unlock")
INFEASIBLE_PENALTY = 2.0


class ErrorCaseError(ValueError):
    pass


@dataclass(frozen=True)
class Bounds:
    """Per-coordinate [lower, upper] box; used both as feasible domain and as normalization reference."""

    lower: tuple
    upper: tuple
    names: tuple = ()

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be matching 1-D sequences")
        if np.any(hi <= lo):
            raise ValueError(f"upper must exceed lower: {self.lower} / {self.upper}")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @property
    def lo(self):
        return np.array(self.lower)

    @property
    def hi(self):
        return np.array(self.upper)

    def __len__(self):
        return len(self.lower)

    def normalize(self, x):
        return (np.asarray(x, float) - self.lo) / (self.hi - self.lo)

    def denormalize(self, x_norm):
        return np.asarray(x_norm, float) * (self.hi - self.lo) + self.lo

    def renormalize(self, reference):
        """This box expressed in the normalized coordinates of ``reference``."""
        return Bounds(tuple(reference.normalize(self.lo)), tuple(reference.normalize(self.hi)), self.names)


FeasibleDomain = Bounds
NormalizationSpec = Bounds


@dataclass(frozen=True)
class ScalarNormalization:
    """Global min/max normalization shared by every entry of an observation vector."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.upper > self.lower:
            raise ValueError("upper must exceed lower")

    def normalize(self, y):
        return (np.asarray(y, float) - self.lower) / (self.upper - self.lower)

    def denormalize(self, y_norm):
        return np.asarray(y_norm, float) * (self.upper - self.lower) + self.lower


@dataclass
class ErrorBreakdown:
    terms: dict
    weights: dict = field(default_factory=dict)

    @property
    def total(self):
        return float(sum(self.weights.get(k, 1.0) * v for k, v in self.terms.items()))

    def __getitem__(self, key):
        return self.terms[key]

    def as_dict(self):
        out = {k: float(v) for k, v in self.terms.items()}
        out["e"] = self.total
        return out


def normalize(value, spec):
    return spec.normalize(value)


def denormalize_cac(x_norm, domain):
    return domain.denormalize(x_norm)


# ----------------------------------------------------------------- spectroscopy


def spectral_discrepancy(alpha_norm, alpha_hat_norm):
    """ln(||a - b||_2 / d + 1) for two normalized spectra of length d."""
    a = np.asarray(alpha_norm, float)
    b = np.asarray(alpha_hat_norm, float)
    if a.shape != b.shape:
        raise ValueError(f"spectrum length mismatch: {a.shape} vs {b.shape}")
    return float(np.log(np.linalg.norm(a - b) / a.size + 1.0))


def domain_regularization(x_hat_norm, lower, upper):
    """Per-coordinate hinge distance outside [lower, upper]."""
    x = np.asarray(x_hat_norm, float)
    return np.maximum(x - upper, 0.0) + np.maximum(lower - x, 0.0)


def mas_total_error(e_y, e_reg_T, e_reg_X):
    return e_y + e_reg_T + e_reg_X


def mas_breakdown(alpha_norm, alpha_hat_norm, x_hat_norm, domain_norm):
    reg = domain_regularization(x_hat_norm, domain_norm.lo, domain_norm.hi)
    terms = {
        "e_y": spectral_discrepancy(alpha_norm, alpha_hat_norm),
        "e_reg_T": float(reg[0]),
        "e_reg_X": float(reg[1]),
    }
    return ErrorBreakdown(terms, {k: 1.0 for k in terms})


# --------------------------------------------------------------------- turbofan


def tf_thrust_error_v1(F_hat, F_req):
    r = F_hat / F_req
    return max(1.0 - r, 0.0) + max(r - 1.05, 0.0)


def tf_tsfc_error_v1(TSFC_hat, TSFC_req):
    r = TSFC_hat / TSFC_req
    return max(0.95 - r, 0.0) + max(r - 1.0, 0.0)


def tf_tsfc_error_v2(TSFC_hat, TSFC_req):
    r = TSFC_hat / TSFC_req
    return max(0.75 - r, 0.0) + max(r - 0.8, 0.0)


def tf_perf_error_v1(F_hat, TSFC_hat, F_req, TSFC_req):
    return (tf_thrust_error_v1(F_hat, F_req) + tf_tsfc_error_v1(TSFC_hat, TSFC_req)) / 2.0


def tf_tech_cost(x_cac_norm, weighting="v1"):
    x = np.asarray(x_cac_norm, float)
    if x.size != len(CAC_NAMES):
        raise ValueError("technology cost needs the 11 CAC coordinates")
    if weighting == "v1":
        return float(x.mean())
    if weighting == "v2":
        return float((0.99 * x[:N_CYCLE].sum() + 0.01 * x[N_CYCLE:].sum()) / x.size)
    raise ErrorCaseError(f"unknown technology cost weighting {weighting!r}")


def tf_tech_match(x_cac_norm, mode="v1"):
    x = np.asarray(x_cac_norm, float)
    if x.size != len(CAC_NAMES):
        raise ValueError("technology match needs the 11 CAC coordinates")
    v1 = float(np.linalg.norm(x - x.mean()) / x.size)
    if mode == "v1":
        return v1
    if mode == "v2":
        return max(v1 - 0.4, 0.0)
    raise ErrorCaseError(f"unknown technology match mode {mode!r}")


def tf_total_error(case, x_cac_norm, F_hat, TSFC_hat, F_req, TSFC_req):
    """Weighted turbofan error for one of the five design cases."""
    if case not in TURBOFAN_CASES:
        raise ErrorCaseError(f"unknown turbofan error case {case!r}; choose from {TURBOFAN_CASES}")
    rF, rT = F_hat / F_req, TSFC_hat / TSFC_req
    if case == "unlock":
        terms = {"e_F2": float(np.exp(1.0 - rF)), "e_TSFC3": float(np.exp(rT - 1.0))}
        return ErrorBreakdown(terms, {"e_F2": 0.5, "e_TSFC3": 0.5})
    e_F = tf_thrust_error_v1(F_hat, F_req)
    if case == "tsfc20":
        e_T = tf_tsfc_error_v2(TSFC_hat, TSFC_req)
    else:
        e_T = tf_tsfc_error_v1(TSFC_hat, TSFC_req)
    cost = tf_tech_cost(x_cac_norm, "v1" if case == "benchmark" else "v2")
    match = tf_tech_match(x_cac_norm, "v2" if case in ("relax_match", "tsfc20") else "v1")
    terms = {"e_F": e_F, "e_TSFC": e_T, "e_TC": cost, "e_TM": match}
    return ErrorBreakdown(terms, {"e_F": 0.4, "e_TSFC": 0.4, "e_TC": 0.1, "e_TM": 0.1})


def infeasible_breakdown(case=None):
    return ErrorBreakdown({"penalty": INFEASIBLE_PENALTY}, {"penalty": 1.0})
