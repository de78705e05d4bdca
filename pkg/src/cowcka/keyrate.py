"""Conference key rate, two-party COW key rate and the benchmark bounds.

Rates are secret bits per pulse-slot pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import (
    ExperimentParams,
    FreeParams,
    RateBreakdown,
    binary_entropy,
    channel_efficiency,
    overall_gain,
    pair_error_rate,
    pair_gain,
    reference_error,
    zeta,
)


@dataclass(frozen=True)
class BoundsRow:
    distance_km: float
    eta_lim: float
    repeaterless: float


@dataclass(frozen=True)
class CowInputs:
    sifted_gain: float
    qber: float
    intensity: float
    visibility: float
    leak_ec: float

    def __post_init__(self) -> None:
        for name in ("sifted_gain", "qber", "visibility"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v!r} outside [0, 1]")
        if not self.intensity >= 0.0:
            raise ValueError(f"intensity must be nonnegative, got {self.intensity!r}")
        if not self.leak_ec >= 0.0:
            raise ValueError(f"leak_ec must be nonnegative, got {self.leak_ec!r}")


def _privacy_term(mu: float, vis: float) -> tuple[float, float]:
    """Return (zeta, h((1 + zeta)/2)) with the entropy argument clamped to [0, 1]."""
    z = zeta(mu, min(max(vis, 0.0), 1.0))
    arg = min(max((1.0 + z) / 2.0, 0.0), 1.0)
    return z, binary_entropy(arg)


def cow_rate_unclamped(inputs: CowInputs) -> float:
    q = inputs.qber
    _, h_z = _privacy_term(inputs.intensity, inputs.visibility)
    return inputs.sifted_gain * (1.0 - q - (1.0 - q) * h_z) - inputs.leak_ec


def cow_key_rate(inputs: CowInputs) -> float:
    """Asymptotic two-party coherent one-way key rate, clamped at zero."""
    return max(cow_rate_unclamped(inputs), 0.0)


def assemble_rate(
    t: float,
    mu: float,
    f: float,
    *,
    eta: float,
    q_0a: float,
    q_a0: float,
    q_00: float,
    q_aa: float,
    e_t: float,
    visibility: float,
    e_mu: float,
    q_mu: float | None = None,
) -> RateBreakdown:
    """Combine gains, error rates and visibility into a RateBreakdown.

    Shared by the analytic engine and the Monte Carlo estimator so both paths
    apply the identical rate expression. ``q_mu`` defaults to the expectation
    over the four intensity pairs.
    """
    if q_mu is None:
        q_mu = overall_gain(t, q_00, q_aa, q_0a, q_a0)
    e_t = min(max(e_t, 0.0), 0.5)
    e_mu = min(max(e_mu, 0.0), 0.5)
    z, h_z = _privacy_term(mu, visibility)
    sifted = t * (1.0 - t) * (q_0a + q_a0)
    r = sifted * (1.0 - e_t - (1.0 - e_t) * h_z) - q_mu * f * binary_entropy(e_mu)
    return RateBreakdown(
        eta=eta,
        q_0a=q_0a,
        q_a0=q_a0,
        q_00=q_00,
        q_aa=q_aa,
        e_t=e_t,
        visibility=visibility,
        q_mu=q_mu,
        e_mu=e_mu,
        zeta=z,
        rate_unclamped=r,
    )


def conference_key_rate(fp: FreeParams, ep: ExperimentParams) -> RateBreakdown:
    eta = channel_efficiency(ep)
    t, mu = fp.send_probability, fp.intensity
    p_d, e_d = ep.dark_count_rate, ep.time_misalignment

    q_0a = pair_gain(0.0, mu, eta, p_d)
    q_a0 = pair_gain(mu, 0.0, eta, p_d)
    q_00 = pair_gain(0.0, 0.0, eta, p_d)
    q_aa = pair_gain(mu, mu, eta, p_d)
    e_0a = pair_error_rate(0.0, mu, eta, p_d, e_d)
    e_a0 = pair_error_rate(mu, 0.0, eta, p_d, e_d)
    # symmetric arms make the gain-weighted mean degenerate
    e_t = e_0a if e_0a == e_a0 else (e_0a * q_0a + e_a0 * q_a0) / (q_0a + q_a0)

    eta_v = eta / 10.0
    vis = 1.0 - 2.0 * pair_error_rate(mu, mu, eta_v, p_d, ep.interference_misalignment)

    q_mu = overall_gain(t, q_00, q_aa, q_0a, q_a0)
    e_mu = reference_error(t, q_00, q_aa, q_0a, e_0a, q_mu)
    return assemble_rate(
        t,
        mu,
        ep.error_correction_efficiency,
        eta=eta,
        q_0a=q_0a,
        q_a0=q_a0,
        q_00=q_00,
        q_aa=q_aa,
        e_t=e_t,
        visibility=vis,
        e_mu=e_mu,
        q_mu=q_mu,
    )


def eta_lim_bound(ep: ExperimentParams) -> float:
    """Product of both arm efficiencies including detection: eta_d 10^(-alpha L / 10)."""
    return ep.detector_efficiency * 10.0 ** (-ep.attenuation * ep.total_distance_km / 10.0)


def repeaterless_bound(ep: ExperimentParams) -> float:
    """-log2(1 - eta_arm) for one half-distance arm including detector efficiency."""
    arm = ep.detector_efficiency * 10.0 ** (-ep.attenuation * ep.total_distance_km / 20.0)
    return -math.log1p(-arm) / math.log(2.0)


def bounds(ep: ExperimentParams) -> BoundsRow:
    return BoundsRow(ep.total_distance_km, eta_lim_bound(ep), repeaterless_bound(ep))
