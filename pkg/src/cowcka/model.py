"""Domain types and elementary channel/detector formulas.

Every quantity here is per pulse pair (one Alice pulse, one Bob pulse) and
assumes symmetric arms: each sender sits at half the total distance from
Charlie.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

#: Error probability of a click caused purely by a dark count.
E0 = 0.5


def _check_prob(name: str, value: float, lo: float = 0.0, hi: float = 1.0, *, open_hi: bool = False) -> None:
    if not isinstance(value, (int, float)) or math.isnan(value):
        raise ValueError(f"{name} must be a real number, got {value!r}")
    if value < lo or value > hi or (open_hi and value == hi):
        bracket = ")" if open_hi else "]"
        raise ValueError(f"{name}={value!r} outside [{lo}, {hi}{bracket}")


@dataclass(frozen=True)
class ExperimentParams:
    """Fixed hardware and channel parameters.

    Defaults are the ultralow-loss fiber values used for the distance plots,
    with an interference-basis misalignment of 1 %.
    """

    detector_efficiency: float = 0.56
    dark_count_rate: float = 1e-8
    attenuation: float = 0.167
    error_correction_efficiency: float = 1.1
    time_misalignment: float = 0.001
    interference_misalignment: float = 0.01
    total_distance_km: float = 0.0

    def __post_init__(self) -> None:
        _check_prob("detector_efficiency", self.detector_efficiency)
        _check_prob("dark_count_rate", self.dark_count_rate, open_hi=True)
        _check_prob("time_misalignment", self.time_misalignment, 0.0, 0.5)
        _check_prob("interference_misalignment", self.interference_misalignment, 0.0, 0.5)
        if not self.attenuation >= 0.0 or math.isinf(self.attenuation):
            raise ValueError(f"attenuation must be finite and nonnegative, got {self.attenuation!r}")
        if not self.error_correction_efficiency >= 1.0 or math.isinf(self.error_correction_efficiency):
            raise ValueError(f"error_correction_efficiency must be >= 1, got {self.error_correction_efficiency!r}")
        if not self.total_distance_km >= 0.0 or math.isinf(self.total_distance_km):
            raise ValueError(f"total_distance_km must be finite and nonnegative, got {self.total_distance_km!r}")

    def at_distance(self, distance_km: float) -> ExperimentParams:
        return ExperimentParams(
            self.detector_efficiency,
            self.dark_count_rate,
            self.attenuation,
            self.error_correction_efficiency,
            self.time_misalignment,
            self.interference_misalignment,
            distance_km,
        )


@dataclass(frozen=True)
class FreeParams:
    """Optimizable knobs: probability of sending |alpha> and its mean photon number."""

    send_probability: float
    intensity: float

    def __post_init__(self) -> None:
        t, mu = self.send_probability, self.intensity
        if not (isinstance(t, (int, float)) and 0.0 < t < 1.0):
            raise ValueError(f"send_probability must lie in (0, 1), got {t!r}")
        if not (isinstance(mu, (int, float)) and 0.0 < mu < math.inf):
            raise ValueError(f"intensity must be positive and finite, got {mu!r}")


@dataclass(frozen=True)
class RateBreakdown:
    """All intermediate quantities of one key-rate evaluation."""

    eta: float
    q_0a: float
    q_a0: float
    q_00: float
    q_aa: float
    e_t: float
    visibility: float
    q_mu: float
    e_mu: float
    zeta: float
    rate_unclamped: float

    @property
    def rate(self) -> float:
        return max(self.rate_unclamped, 0.0)

    def as_dict(self) -> dict[str, float]:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["rate"] = self.rate
        return d


def channel_efficiency(params: ExperimentParams) -> float:
    """Single-arm transmittance times detector efficiency (arm length L/2)."""
    half = params.total_distance_km / 2.0
    return params.detector_efficiency * 10.0 ** (-params.attenuation * half / 10.0)


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy in bits, with 0 log 0 = 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary_entropy argument {x!r} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def _check_pair_inputs(intensity_a: float, intensity_b: float, eta: float, p_d: float) -> None:
    if not (intensity_a >= 0.0 and intensity_b >= 0.0):
        raise ValueError(f"intensities must be nonnegative, got {intensity_a!r}, {intensity_b!r}")
    _check_prob("eta", eta)
    if not 0.0 <= p_d < 0.5:
        raise ValueError(f"p_d={p_d!r} outside [0, 0.5)")


def pair_gain(intensity_a: float, intensity_b: float, eta: float, p_d: float) -> float:
    """Time-basis click probability when the senders emit the given intensities.

    Written as (1 - e^-x) + 2 p_d e^-x so small-signal gains keep full precision.
    """
    _check_pair_inputs(intensity_a, intensity_b, eta, p_d)
    x = (intensity_a + intensity_b) * eta
    return -math.expm1(-x) + 2.0 * p_d * math.exp(-x)


def pair_error_rate(
    intensity_a: float, intensity_b: float, eta: float, p_d: float, misalignment: float
) -> float:
    _check_pair_inputs(intensity_a, intensity_b, eta, p_d)
    _check_prob("misalignment", misalignment, 0.0, 0.5)
    q = pair_gain(intensity_a, intensity_b, eta, p_d)
    if q == 0.0:
        # no dark counts and no light: nothing clicks, error rate is moot
        return misalignment
    x = (intensity_a + intensity_b) * eta
    return misalignment + 2.0 * p_d * (E0 - misalignment) * math.exp(-x) / q


def time_basis_error(fp: FreeParams, ep: ExperimentParams) -> float:
    """Gain-weighted error rate of the two key-encoding pairs |0>|a> and |a>|0>."""
    eta = channel_efficiency(ep)
    mu, p_d, e_d = fp.intensity, ep.dark_count_rate, ep.time_misalignment
    q_0a = pair_gain(0.0, mu, eta, p_d)
    q_a0 = pair_gain(mu, 0.0, eta, p_d)
    e_0a = pair_error_rate(0.0, mu, eta, p_d, e_d)
    e_a0 = pair_error_rate(mu, 0.0, eta, p_d, e_d)
    if q_0a == q_a0 and e_0a == e_a0:
        return e_0a
    return (e_0a * q_0a + e_a0 * q_a0) / (q_0a + q_a0)


def visibility(fp: FreeParams, ep: ExperimentParams) -> float:
    """Interference visibility from the |a>|a> error rate at one tenth of the arm efficiency."""
    eta_v = channel_efficiency(ep) / 10.0
    mu = fp.intensity
    e_v = pair_error_rate(mu, mu, eta_v, ep.dark_count_rate, ep.interference_misalignment)
    return 1.0 - 2.0 * e_v


def zeta(mu: float, visibility: float) -> float:
    if not mu >= 0.0:
        raise ValueError(f"mu must be nonnegative, got {mu!r}")
    _check_prob("visibility", visibility)
    v = visibility
    return (2.0 * v - 1.0) * math.exp(-mu) - 2.0 * math.sqrt(-math.expm1(-2.0 * mu) * v * (1.0 - v))


def overall_gain(t: float, q_00: float, q_aa: float, q_0a: float, q_a0: float) -> float:
    """Expected time-basis gain over the senders' independent intensity choices."""
    return (1.0 - t) ** 2 * q_00 + t**2 * q_aa + t * (1.0 - t) * (q_0a + q_a0)


def reference_error(t: float, q_00: float, q_aa: float, q_0a: float, e_0a: float, q_mu: float) -> float:
    """Error rate between one sender and Charlie's raw key.

    Same-state pairs err half the time; the key-encoding pairs contribute
    their own error rate. Clamped to [0, 0.5].
    """
    if q_mu == 0.0:
        return E0
    num = 0.5 * ((1.0 - t) ** 2 * q_00 + t**2 * q_aa) + 2.0 * t * (1.0 - t) * e_0a * q_0a
    return min(max(num / q_mu, 0.0), 0.5)


def sifted_gain_and_reference_error(fp: FreeParams, ep: ExperimentParams) -> tuple[float, float]:
    eta = channel_efficiency(ep)
    t, mu, p_d = fp.send_probability, fp.intensity, ep.dark_count_rate
    q_00 = pair_gain(0.0, 0.0, eta, p_d)
    q_aa = pair_gain(mu, mu, eta, p_d)
    q_0a = pair_gain(0.0, mu, eta, p_d)
    q_a0 = pair_gain(mu, 0.0, eta, p_d)
    e_0a = pair_error_rate(0.0, mu, eta, p_d, ep.time_misalignment)
    q_mu = overall_gain(t, q_00, q_aa, q_0a, q_a0)
    return q_mu, reference_error(t, q_00, q_aa, q_0a, e_0a, q_mu)
