"""Pulse-level Monte Carlo emulation of the three-party protocol.

Slot k carries Alice's pulse a_k and Bob's pulse b_k. After Bob's pulses are
delayed by T, the interferometer sees the train a_1 b_1 a_2 b_2 ... with
period T. Each slot therefore owns two interference times:

* the *lead* time (2k-1)T, where b_{k-1} interferes with a_k (odd slot,
  D3 is the constructive port);
* the *within* time 2kT, where a_k interferes with b_k (even slot, D4 is
  the constructive port).

Randomness is drawn per fixed-size chunk from seeds derived from
(seed, chunk index), so results do not depend on how many workers run.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterator

import numpy as np

from .keyrate import assemble_rate
from .model import (
    ExperimentParams,
    FreeParams,
    RateBreakdown,
    channel_efficiency,
    pair_gain,
    sifted_gain_and_reference_error,
    time_basis_error,
    visibility,
)

CHUNK_SIZE = 1 << 18
MAX_SLOTS = 2**63 - 1

CATEGORIES = ("00", "0a", "a0", "aa")

# spawn-key tags for the per-chunk random streams
_INTENSITY, _DETECTION, _COW_INTENSITY, _COW_DETECTION = range(4)


class InsufficientStatistics(RuntimeError):
    """An empirical estimate has a zero denominator."""


class Disposition(IntEnum):
    NO_CLICK = 0
    KEY_BIT_0 = 1
    KEY_BIT_1 = 2
    RANDOM_TIE = 3
    DISCARDED_CROSS_BASIS = 4
    VISIBILITY_SAMPLE = 5
    INTERFERENCE_ONLY = 6

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


KEY_DISPOSITIONS = (Disposition.KEY_BIT_0, Disposition.KEY_BIT_1, Disposition.RANDOM_TIE)


@dataclass(frozen=True)
class SlotOutcome:
    index: int
    alice_intensity: float
    bob_intensity: float
    d1_click: bool
    d2_click: bool
    d3_lead: bool
    d4_lead: bool
    d3_within: bool
    d4_within: bool
    disposition: Disposition

    @property
    def d3_click(self) -> bool:
        return self.d3_lead or self.d3_within

    @property
    def d4_click(self) -> bool:
        return self.d4_lead or self.d4_within


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float


def _ratio(num: int, den: int) -> Estimate:
    if den == 0:
        return Estimate(math.nan, math.nan)
    p = num / den
    return Estimate(p, math.sqrt(p * (1.0 - p) / den))


def _visibility_estimate(dt: int, df: int) -> Estimate:
    n = dt + df
    if n == 0:
        return Estimate(math.nan, math.nan)
    p = df / n
    return Estimate((dt - df) / n, 2.0 * math.sqrt(p * (1.0 - p) / n))


@dataclass(frozen=True)
class Estimates:
    q_0a: Estimate
    q_a0: Estimate
    q_00: Estimate
    q_aa: Estimate
    e_t: Estimate
    visibility: Estimate
    e_mu: Estimate

    def items(self) -> Iterator[tuple[str, Estimate]]:
        for name in self.__dataclass_fields__:
            yield name, getattr(self, name)


@dataclass(frozen=True, eq=False)
class TranscriptStats:
    """Counters and sifted keys from one simulated run.

    Gains and error rates are estimated from every time-basis detection
    Charlie records, before the cross-basis discard; the sifted strings only
    hold slots that survive sifting. Category order is ``CATEGORIES``.
    """

    free_params: FreeParams
    experiment: ExperimentParams
    n_slots: int
    seed: int
    sent: np.ndarray
    clicked: np.ndarray
    erroneous: np.ndarray
    dt_count: int
    df_count: int
    evaluated_pairs: int
    dispositions: np.ndarray
    sifted_alice: np.ndarray
    sifted_bob: np.ndarray
    sifted_charlie: np.ndarray
    sifted_category: np.ndarray
    estimates: Estimates = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "estimates", _estimate(self))

    @property
    def empirical_visibility(self) -> float:
        return (self.dt_count - self.df_count) / (self.dt_count + self.df_count)

    def disposition_counts(self) -> dict[str, int]:
        return {d.label: int(self.dispositions[d]) for d in Disposition}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TranscriptStats):
            return NotImplemented
        scalars = ("free_params", "experiment", "n_slots", "seed", "dt_count", "df_count", "evaluated_pairs")
        arrays = ("sent", "clicked", "erroneous", "dispositions", "sifted_alice", "sifted_bob",
                  "sifted_charlie", "sifted_category")
        return all(getattr(self, s) == getattr(other, s) for s in scalars) and all(
            np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays
        )


def _estimate(s: TranscriptStats) -> Estimates:
    q = [_ratio(int(s.clicked[c]), int(s.sent[c])) for c in range(4)]
    return Estimates(
        q_0a=q[1],
        q_a0=q[2],
        q_00=q[0],
        q_aa=q[3],
        e_t=_ratio(int(s.erroneous[1] + s.erroneous[2]), int(s.clicked[1] + s.clicked[2])),
        visibility=_visibility_estimate(s.dt_count, s.df_count),
        e_mu=_ratio(int(s.erroneous.sum()), int(s.clicked.sum())),
    )


# --- chunk kernels --------------------------------------------------------


def _stream(seed: int, chunk: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk, tag)))


def _chunk_bounds(n_slots: int) -> list[tuple[int, int]]:
    return [(s, min(CHUNK_SIZE, n_slots - s)) for s in range(0, n_slots, CHUNK_SIZE)]


def _senders(seed: int, chunk: int, n: int, t: float) -> tuple[np.ndarray, np.ndarray]:
    u = _stream(seed, chunk, _INTENSITY).random((2, n))
    return u[0] < t, u[1] < t


def _click_prob(mean: np.ndarray, p_d: float) -> np.ndarray:
    # 1 - (1 - p_d) e^-m without cancellation at small m
    return -np.expm1(-mean) + p_d * np.exp(-mean)


def _port_means(first: np.ndarray, second: np.ndarray, mu: float, eta_v: float, e_prime: float):
    """Mean photon numbers at the (constructive, destructive) ports for a pulse pair."""
    both = first & second
    total = (first.astype(np.float64) + second) * mu * eta_v
    cons = np.where(both, total * (1.0 - e_prime), total / 2.0)
    dest = np.where(both, total * e_prime, total / 2.0)
    return both, cons, dest


@dataclass
class _ChunkResult:
    sent: np.ndarray
    clicked: np.ndarray
    erroneous: np.ndarray
    dt: int
    df: int
    evaluated: int
    dispositions: np.ndarray
    alice: np.ndarray
    bob: np.ndarray
    charlie: np.ndarray
    category: np.ndarray
    record: dict[str, np.ndarray] | None = None


def _cka_chunk(args) -> _ChunkResult:
    fp, ep, seed, chunk, start, n, record = args
    t, mu = fp.send_probability, fp.intensity
    p_d = ep.dark_count_rate
    eta = channel_efficiency(ep)
    eta_v = eta / 10.0

    a, b = _senders(seed, chunk, n, t)
    if chunk == 0:
        prev_b = False
    else:
        prev_b = bool(_senders(seed, chunk - 1, CHUNK_SIZE, t)[1][-1])
    b_before = np.concatenate(([prev_b], b[:-1]))

    u = _stream(seed, chunk, _DETECTION).random((8, n))

    # time basis: D1 watches Alice's arm, D2 Bob's; misalignment swaps the record
    c1 = u[0] < _click_prob(a * (mu * eta), p_d)
    c2 = u[1] < _click_prob(b * (mu * eta), p_d)
    swap = u[2] < ep.time_misalignment
    d1 = np.where(swap, c2, c1)
    d2 = np.where(swap, c1, c2)
    tie_bit = u[3] < 0.5

    # interference basis
    e_prime = ep.interference_misalignment
    lead_both, lead_cons, lead_dest = _port_means(b_before, a, mu, eta_v, e_prime)
    within_both, within_cons, within_dest = _port_means(a, b, mu, eta_v, e_prime)
    d3_lead = u[4] < _click_prob(lead_cons, p_d)
    d4_lead = u[5] < _click_prob(lead_dest, p_d)
    d4_within = u[6] < _click_prob(within_cons, p_d)
    d3_within = u[7] < _click_prob(within_dest, p_d)

    time_click = d1 | d2
    interf_click = d3_lead | d4_lead | d3_within | d4_within
    discarded = time_click & interf_click

    charlie = np.where(d1 & d2, tie_bit, d1)
    category = 2 * a.astype(np.int64) + b
    wrong = time_click & (charlie != a)

    # a click in an evaluated pair survives only if the time basis stayed silent
    eligible = ~time_click
    lead_eval = lead_both & eligible
    within_eval = within_both & eligible
    dt_slot = (d3_lead & lead_eval).astype(np.int64) + (d4_within & within_eval)
    df_slot = (d4_lead & lead_eval).astype(np.int64) + (d3_within & within_eval)

    disp = np.full(n, Disposition.NO_CLICK, dtype=np.int8)
    disp[time_click & ~d2] = Disposition.KEY_BIT_1
    disp[time_click & ~d1] = Disposition.KEY_BIT_0
    disp[d1 & d2] = Disposition.RANDOM_TIE
    interf_only = interf_click & ~time_click
    disp[interf_only] = Disposition.INTERFERENCE_ONLY
    disp[interf_only & ((dt_slot + df_slot) > 0)] = Disposition.VISIBILITY_SAMPLE
    disp[discarded] = Disposition.DISCARDED_CROSS_BASIS

    key = time_click & ~discarded
    res = _ChunkResult(
        sent=np.bincount(category, minlength=4),
        clicked=np.bincount(category[time_click], minlength=4),
        erroneous=np.bincount(category[wrong], minlength=4),
        dt=int(dt_slot.sum()),
        df=int(df_slot.sum()),
        evaluated=int(lead_eval.sum() + within_eval.sum()),
        dispositions=np.bincount(disp, minlength=len(Disposition)),
        alice=a[key].astype(np.uint8),
        bob=(~b[key]).astype(np.uint8),
        charlie=charlie[key].astype(np.uint8),
        category=category[key].astype(np.uint8),
    )
    if record:
        res.record = {
            "index": np.arange(start + 1, start + n + 1),
            "alice_intensity": a * mu,
            "bob_intensity": b * mu,
            "d1_click": d1,
            "d2_click": d2,
            "d3_lead": d3_lead,
            "d4_lead": d4_lead,
            "d3_within": d3_within,
            "d4_within": d4_within,
            "disposition": disp,
        }
    return res


def _check_run_args(n_slots: int, seed: int) -> None:
    if n_slots > MAX_SLOTS:
        raise OverflowError(f"n_slots={n_slots} exceeds the 64-bit counter width")
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    if seed < 0:
        raise ValueError("seed must be nonnegative")


def _map(fn, jobs: list, workers: int | None) -> list:
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


TRANSCRIPT_COLUMNS = (
    "index", "alice_intensity", "bob_intensity", "d1_click", "d2_click",
    "d3_lead", "d4_lead", "d3_within", "d4_within", "disposition",
)


def _write_transcript(path: Path, chunks: list[_ChunkResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSCRIPT_COLUMNS)
        for ch in chunks:
            rec = ch.record
            labels = [Disposition(int(d)).label for d in rec["disposition"]]
            for i in range(len(rec["index"])):
                w.writerow([
                    int(rec["index"][i]),
                    repr(float(rec["alice_intensity"][i])),
                    repr(float(rec["bob_intensity"][i])),
                    *(int(rec[c][i]) for c in TRANSCRIPT_COLUMNS[3:9]),
                    labels[i],
                ])


def read_transcript(path: str | Path) -> Iterator[SlotOutcome]:
    by_label = {d.label: d for d in Disposition}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            yield SlotOutcome(
                index=int(row["index"]),
                alice_intensity=float(row["alice_intensity"]),
                bob_intensity=float(row["bob_intensity"]),
                d1_click=row["d1_click"] == "1",
                d2_click=row["d2_click"] == "1",
                d3_lead=row["d3_lead"] == "1",
                d4_lead=row["d4_lead"] == "1",
                d3_within=row["d3_within"] == "1",
                d4_within=row["d4_within"] == "1",
                disposition=by_label[row["disposition"]],
            )


def run_protocol(
    fp: FreeParams,
    ep: ExperimentParams,
    n_slots: int,
    seed: int,
    *,
    workers: int | None = None,
    transcript: str | Path | None = None,
) -> TranscriptStats:
    """Simulate ``n_slots`` pulse pairs and return the merged statistics.

    ``transcript`` writes one CSV row per slot; keep it for small runs.
    """
    _check_run_args(n_slots, seed)
    record = transcript is not None
    jobs = [(fp, ep, seed, c, s, n, record) for c, (s, n) in enumerate(_chunk_bounds(n_slots))]
    chunks = _map(_cka_chunk, jobs, workers)
    if record:
        _write_transcript(Path(transcript), chunks)
    return TranscriptStats(
        free_params=fp,
        experiment=ep,
        n_slots=n_slots,
        seed=seed,
        sent=sum(c.sent for c in chunks),
        clicked=sum(c.clicked for c in chunks),
        erroneous=sum(c.erroneous for c in chunks),
        dt_count=sum(c.dt for c in chunks),
        df_count=sum(c.df for c in chunks),
        evaluated_pairs=sum(c.evaluated for c in chunks),
        dispositions=sum(c.dispositions for c in chunks),
        sifted_alice=np.concatenate([c.alice for c in chunks]),
        sifted_bob=np.concatenate([c.bob for c in chunks]),
        sifted_charlie=np.concatenate([c.charlie for c in chunks]),
        sifted_category=np.concatenate([c.category for c in chunks]),
    )


# --- analytic comparison and empirical rate --------------------------------


def analytic_estimates(fp: FreeParams, ep: ExperimentParams) -> dict[str, float]:
    eta = channel_efficiency(ep)
    mu, p_d = fp.intensity, ep.dark_count_rate
    _, e_mu = sifted_gain_and_reference_error(fp, ep)
    return {
        "q_0a": pair_gain(0.0, mu, eta, p_d),
        "q_a0": pair_gain(mu, 0.0, eta, p_d),
        "q_00": pair_gain(0.0, 0.0, eta, p_d),
        "q_aa": pair_gain(mu, mu, eta, p_d),
        "e_t": time_basis_error(fp, ep),
        "visibility": visibility(fp, ep),
        "e_mu": e_mu,
    }


@dataclass(frozen=True)
class Comparison:
    name: str
    empirical: float
    stderr: float
    analytic: float
    z: float
    passed: bool


def compare_to_model(stats: TranscriptStats, n_sigma: float = 3.0) -> list[Comparison]:
    """Check every empirical estimate against the analytic model at ``n_sigma``."""
    expected = analytic_estimates(stats.free_params, stats.experiment)
    out = []
    for name, est in stats.estimates.items():
        diff = est.value - expected[name]
        if math.isnan(est.value):
            z, ok = math.nan, False
        elif est.stderr > 0:
            z = diff / est.stderr
            ok = abs(z) <= n_sigma
        else:
            z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
            ok = diff == 0
        out.append(Comparison(name, est.value, est.stderr, expected[name], z, ok))
    return out


def empirical_key_rate(stats: TranscriptStats, ep: ExperimentParams) -> float:
    """Plug the run's empirical gains, error rates and visibility into the rate expression."""
    return empirical_breakdown(stats, ep).rate


def empirical_breakdown(stats: TranscriptStats, ep: ExperimentParams) -> RateBreakdown:
    s = stats
    missing = []
    if (s.sent == 0).any():
        missing.append("an intensity-pair category was never sent")
    if s.clicked[1] + s.clicked[2] == 0:
        missing.append("no time-basis clicks on key-encoding pairs")
    if s.dt_count + s.df_count == 0:
        missing.append("no interference clicks on |a>|a> pairs")
    if missing:
        raise InsufficientStatistics("; ".join(missing))
    est = s.estimates
    return assemble_rate(
        s.free_params.send_probability,
        s.free_params.intensity,
        ep.error_correction_efficiency,
        eta=channel_efficiency(ep),
        q_0a=est.q_0a.value,
        q_a0=est.q_a0.value,
        q_00=est.q_00.value,
        q_aa=est.q_aa.value,
        e_t=est.e_t.value,
        visibility=est.visibility.value,
        e_mu=est.e_mu.value,
    )


# --- folding equivalence ---------------------------------------------------


@dataclass(frozen=True)
class InterferenceSummary:
    evaluated_pairs: int
    dt_count: int
    df_count: int

    @property
    def p_dt(self) -> float:
        return self.dt_count / self.evaluated_pairs if self.evaluated_pairs else math.nan

    @property
    def p_df(self) -> float:
        return self.df_count / self.evaluated_pairs if self.evaluated_pairs else math.nan

    @property
    def visibility(self) -> Estimate:
        return _visibility_estimate(self.dt_count, self.df_count)


@dataclass(frozen=True)
class EquivalenceRecord:
    cka: InterferenceSummary
    cow: InterferenceSummary

    @property
    def delta_visibility(self) -> float:
        return self.cka.visibility.value - self.cow.visibility.value

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.cka.visibility.stderr, self.cow.visibility.stderr)

    @property
    def delta_p_dt(self) -> float:
        return self.cka.p_dt - self.cow.p_dt

    @property
    def delta_p_df(self) -> float:
        return self.cka.p_df - self.cow.p_df


def _cow_chunk(args) -> tuple[int, int, int]:
    """Interference statistics of a single-sender two-pulse-sequence COW link.

    The sender emits both pulses of every sequence down one channel, so the
    train reaching the interferometer is already uniform and the constructive
    port is D3 at every time. Only the interference basis is modelled.
    """
    fp, ep, seed, chunk, n = args
    t, mu = fp.send_probability, fp.intensity
    p_d = ep.dark_count_rate
    eta_v = channel_efficiency(ep) / 10.0

    def train(c: int, size: int) -> np.ndarray:
        return _stream(seed, c, _COW_INTENSITY).random(2 * size) < t

    pulses = train(chunk, n)
    prev = False if chunk == 0 else bool(train(chunk - 1, CHUNK_SIZE)[-1])
    before = np.concatenate(([prev], pulses[:-1]))
    both, cons, dest = _port_means(before, pulses, mu, eta_v, ep.interference_misalignment)
    u = _stream(seed, chunk, _COW_DETECTION).random((2, 2 * n))
    d3 = u[0] < _click_prob(cons, p_d)
    d4 = u[1] < _click_prob(dest, p_d)
    return int(both.sum()), int((d3 & both).sum()), int((d4 & both).sum())


def run_cow_interference(
    fp: FreeParams, ep: ExperimentParams, n_sequences: int, seed: int, *, workers: int | None = None
) -> InterferenceSummary:
    _check_run_args(n_sequences, seed)
    jobs = [(fp, ep, seed, c, n) for c, (_, n) in enumerate(_chunk_bounds(n_sequences))]
    parts = _map(_cow_chunk, jobs, workers)
    return InterferenceSummary(*(sum(p[i] for p in parts) for i in range(3)))


def folding_equivalence_stats(
    fp: FreeParams, ep: ExperimentParams, n_slots: int, seed: int, *, workers: int | None = None
) -> EquivalenceRecord:
    """Compare interference statistics of the three-party layout and an unfolded COW link.

    Both runs use the same parameters, seed and per-pulse channel efficiency;
    the COW run draws from separate random streams so the samples are independent.
    """
    stats = run_protocol(fp, ep, n_slots, seed, workers=workers)
    cka = InterferenceSummary(stats.evaluated_pairs, stats.dt_count, stats.df_count)
    cow = run_cow_interference(fp, ep, n_slots, seed, workers=workers)
    return EquivalenceRecord(cka, cow)
