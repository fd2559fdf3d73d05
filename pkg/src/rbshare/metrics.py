"""Evaluation accounting: licensed spectral efficiency (with and without the
missed-bits deduction), the coexisting unlicensed link, acceptance / missed
ratios, latency CDFs and windowed learning curves, plus CSV/JSON emission.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rbshare import channel as ch


class UnlicensedLink:
    """Single opportunistic link, repositioned every coherence period.

    Shares the licensed channel parameters, CQI table and per-RB power.
    """

    def __init__(self, params: ch.ChannelParams, table: ch.CqiTable,
                 rng: np.random.Generator):
        self.params = params
        self.table = table
        self.rng = rng
        self._steps = 0
        self._redraw()

    def _redraw(self):
        self.link = ch.draw_link(self.params, self.rng)
        self.bits_per_rb = ch.link_deliverable_bits(self.link, self.params, self.table)

    def advance_time_step(self):
        self._steps += 1
        if self._steps % self.params.coherence_time == 0:
            self._redraw()


@dataclass
class RunMetrics:
    """Per-run accumulators, fed one environment step-info dict at a time."""

    rb_bits: float                     # W*T, bits per unit spectral efficiency
    num_rbs: int
    continuity_len: int
    unlicensed: UnlicensedLink | None = None

    se_samples: list = field(default_factory=list)   # per-RL-step SE, b/s/Hz
    alloc_samples: list = field(default_factory=list)  # (rl step, achievable SE)
    time_steps: int = 0
    delivered_bits: int = 0
    missed_bits: int = 0               # bits credited to later-missed requests
    arrivals: int = 0
    accepted: int = 0
    dropped: int = 0
    missed: int = 0
    satisfied: int = 0
    latency: dict = field(default_factory=dict)      # type id -> [(latency, missed)]
    unlicensed_bits: int = 0
    unlicensed_rb_steps: int = 0       # grid cells with continuity >= C

    def record(self, info: dict):
        alloc_se = info.get("alloc_se_sample")
        if alloc_se is not None:
            self.alloc_samples.append((len(self.se_samples), alloc_se))
        self.se_samples.append(info["se_sample"])
        self.delivered_bits += info["delivered_bits"]
        self.arrivals += info["arrivals"]
        self.accepted += info["accepted"]
        self.dropped += info["dropped"]
        for svc_id, latency, was_missed in info.get("latency_samples", []):
            self.latency.setdefault(svc_id, []).append((latency, was_missed))
            if was_missed:
                self.missed += 1
            else:
                self.satisfied += 1
        for _svc_id, bits in info["missed"]:
            self.missed_bits += bits
        if info["time_step_finalized"]:
            self.time_steps += 1
            if self.unlicensed is not None:
                v = info["v_final"]
                for k in range(self.num_rbs):
                    if v[k] >= self.continuity_len:
                        self.unlicensed_rb_steps += 1
                        self.unlicensed_bits += int(self.unlicensed.bits_per_rb[k])
                self.unlicensed.advance_time_step()

    # -- derived quantities ------------------------------------------------------

    def se_licensed(self, adjusted: bool = False) -> float:
        if self.time_steps < 1:
            raise ValueError("no time steps recorded")
        total = self.delivered_bits - (self.missed_bits if adjusted else 0)
        return total / (self.rb_bits * self.num_rbs * self.time_steps)

    def se_unlicensed(self) -> float:
        if self.unlicensed_rb_steps == 0:
            return 0.0
        return self.unlicensed_bits / (self.rb_bits * self.unlicensed_rb_steps)

    def ratios(self) -> tuple[float, float]:
        if self.arrivals == 0:
            raise ValueError("no arrivals recorded")
        acceptance = self.accepted / self.arrivals
        missed = self.missed / self.accepted if self.accepted else 0.0
        return acceptance, missed

    def latency_cdf(self, service_id: int) -> list[tuple[int, float]]:
        samples = sorted(lat for lat, _ in self.latency.get(service_id, []))
        if not samples:
            raise ValueError(f"no latency samples for service type {service_id}")
        n = len(samples)
        out = []
        for i, lat in enumerate(samples, start=1):
            if i == n or samples[i] != lat:
                out.append((lat, i / n))
        return out

    def windowed_se(self, window: int, sample_every_steps: int = 100):
        """Trailing-window mean of the RL-step SE samples.

        The learning curve averages the achievable-SE samples of the attempted
        allocations that fall inside the trailing `window` RL steps (idle RBs
        and empty-buffer steps contribute no sample).  Sampled once every
        `sample_every_steps` time steps; returns a list of (time_step, mean)
        pairs, with 0.0 for a window holding no allocation attempts.
        """
        if window < 1:
            raise ValueError("window must be >= 1")
        idx = np.array([i for i, _ in self.alloc_samples], dtype=np.int64)
        cum = np.concatenate([[0.0], np.cumsum([v for _, v in self.alloc_samples])])
        out = []
        for n in range(sample_every_steps, self.time_steps + 1, sample_every_steps):
            hi = np.searchsorted(idx, n * self.num_rbs, side="left")
            lo = np.searchsorted(idx, n * self.num_rbs - window, side="left")
            out.append((n, float((cum[hi] - cum[lo]) / (hi - lo)) if hi > lo else 0.0))
        return out

    def merge(self, other: "RunMetrics"):
        """Fold another run's accumulators in (counters add, samples concat)."""
        offset = len(self.se_samples)
        self.alloc_samples.extend((offset + i, v) for i, v in other.alloc_samples)
        self.se_samples.extend(other.se_samples)
        self.time_steps += other.time_steps
        self.delivered_bits += other.delivered_bits
        self.missed_bits += other.missed_bits
        self.arrivals += other.arrivals
        self.accepted += other.accepted
        self.dropped += other.dropped
        self.missed += other.missed
        self.satisfied += other.satisfied
        for svc_id, samples in other.latency.items():
            self.latency.setdefault(svc_id, []).extend(samples)
        self.unlicensed_bits += other.unlicensed_bits
        self.unlicensed_rb_steps += other.unlicensed_rb_steps

    # -- emission ------------------------------------------------------------------

    def summary(self) -> dict:
        acceptance, missed = self.ratios() if self.arrivals else (1.0, 0.0)
        return {
            "time_steps": self.time_steps,
            "se_licensed": self.se_licensed(),
            "se_licensed_adjusted": self.se_licensed(adjusted=True),
            "se_unlicensed": self.se_unlicensed(),
            "acceptance_ratio": acceptance,
            "missed_ratio": missed,
            "arrivals": self.arrivals,
            "accepted": self.accepted,
            "dropped": self.dropped,
            "missed": self.missed,
            "satisfied": self.satisfied,
            "delivered_bits": self.delivered_bits,
            "missed_bits": self.missed_bits,
            "unlicensed_bits": self.unlicensed_bits,
            "unlicensed_rb_steps": self.unlicensed_rb_steps,
        }

    def write_csvs(self, outdir, learning_window: int = 1000):
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "learning_curve.csv", "w") as f:
            f.write("step,value\n")
            for step, value in self.windowed_se(learning_window):
                f.write(f"{step},{value!r}\n")
        for svc_id in sorted(self.latency):
            with open(outdir / f"latency_type{svc_id}.csv", "w") as f:
                f.write("latency,cdf\n")
                for lat, frac in self.latency_cdf(svc_id):
                    f.write(f"{lat},{frac!r}\n")
        with open(outdir / "summary.json", "w") as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)
            f.write("\n")
