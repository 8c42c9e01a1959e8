"""Execution time, energy and endurance from a :class:`CostLedger`.

Time charges critical-path activation phases: a row activation drives every
column at once, so it costs one latency no matter how many columns take part.
Energy charges every sensed or written bit. Both are exact linear functions of
the technology parameters, so a ledger simulated once can be priced at any
number of technology points.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .ledger import CostLedger

LATENCY_GRID = (1, 3, 5, 10, 20)        # ns per bit
RD_ENERGY_GRID = (20, 50, 100)          # pJ per bit
WR_ENERGY_GRID = (30, 70, 400)          # pJ per bit

# Published reference figures for the same design, reported next to ours.
REFERENCE_READ_SLOWDOWN = 4.7
REFERENCE_WRITE_SLOWDOWN = 6.5
REFERENCE_WRITE_ENERGY_EXCESS = 0.19
REFERENCE_ENDURANCE = 4e9

YEAR_S = 365.25 * 24 * 3600


@dataclass(frozen=True)
class TechParams:
    rd_lat: float = 5.0      # ns
    wr_lat: float = 10.0     # ns
    rd_energy: float = 50.0  # pJ/bit
    wr_energy: float = 70.0  # pJ/bit
    name: str = "custom"

    def __post_init__(self):
        for f in ("rd_lat", "wr_lat", "rd_energy", "wr_energy"):
            if not getattr(self, f) > 0:
                raise ValueError(f"{f} must be strictly positive")

    def replace(self, **kw) -> "TechParams":
        d = dict(rd_lat=self.rd_lat, wr_lat=self.wr_lat, rd_energy=self.rd_energy,
                 wr_energy=self.wr_energy, name="custom")
        d.update(kw)
        return TechParams(**d)


TECH_PRESETS = {
    "baseline": TechParams(5, 10, 50, 70, "baseline"),
    "fast": TechParams(1, 3, 20, 30, "fast"),
    "slow-write": TechParams(5, 20, 50, 400, "slow-write"),
}

DEVICE_PRESETS = {"embedded": 128, "portable": 1024, "hpc": 4096}
CROSSBAR_COLUMNS = 256


@dataclass(frozen=True)
class DeviceConfig:
    num_crossbars: int
    preset: str | None = None

    def __post_init__(self):
        if self.num_crossbars < 1:
            raise ValueError("need at least one crossbar")

    @property
    def columns(self) -> int:
        return CROSSBAR_COLUMNS * self.num_crossbars

    @property
    def cells(self) -> int:
        return CROSSBAR_COLUMNS * self.columns

    @classmethod
    def from_preset(cls, name: str) -> "DeviceConfig":
        try:
            return cls(DEVICE_PRESETS[name], name)
        except KeyError:
            raise ValueError(f"unknown device preset {name!r}; expected one of {sorted(DEVICE_PRESETS)}") from None


def total_time(ledger: CostLedger, tech: TechParams) -> float:
    """Nanoseconds on the critical path."""
    return ledger.read_phases * tech.rd_lat + ledger.write_phases * tech.wr_lat


def total_energy(ledger: CostLedger, tech: TechParams) -> float:
    """Picojoules over all cells touched."""
    return ledger.read_bits * tech.rd_energy + ledger.write_bits * tech.wr_energy


def energy_shares(ledger: CostLedger, tech: TechParams) -> tuple[float, float]:
    """(read share, write share) of total energy."""
    rd = ledger.read_bits * tech.rd_energy
    wr = ledger.write_bits * tech.wr_energy
    tot = rd + wr
    return (rd / tot, wr / tot) if tot else (0.0, 0.0)


@dataclass(frozen=True)
class Endurance:
    mean_writes: float
    max_writes: float
    duration_s: float
    batch_time_ns: float

    @property
    def order(self) -> int:
        return int(math.floor(math.log10(self.mean_writes))) if self.mean_writes > 0 else 0


def endurance_estimate(ledger: CostLedger, wall_duration_s: float, device: DeviceConfig | None = None, *,
                       tech: TechParams | None = None, time_ns: float | None = None) -> Endurance:
    """Writes per cell after running the ledger's batch back to back for ``wall_duration_s``.

    The mean spreads all written bits over the device (``device`` cells, or the
    simulated array when omitted); the max follows the busiest cell.
    """
    if time_ns is None:
        time_ns = total_time(ledger, tech or TECH_PRESETS["baseline"])
    if wall_duration_s < 0:
        raise ValueError("negative duration")
    if wall_duration_s == 0:
        return Endurance(0.0, 0.0, 0.0, time_ns)
    if time_ns <= 0:
        raise ValueError("ledger has zero modeled time; nothing to extrapolate")
    cells = device.cells if device is not None else ledger.cells
    if cells <= 0:
        raise ValueError("no cells to spread writes over")
    repeats = wall_duration_s * 1e9 / time_ns
    return Endurance(ledger.write_bits / cells * repeats, ledger.max_cell_writes * repeats,
                     wall_duration_s, time_ns)


def tech_grid(latencies: Sequence[float] = LATENCY_GRID, rd_energies: Sequence[float] = RD_ENERGY_GRID,
              wr_energies: Sequence[float] = WR_ENERGY_GRID) -> list[TechParams]:
    """Cross product, ordered by (rd_lat, wr_lat, rd_energy, wr_energy)."""
    return [TechParams(rl, wl, re, we) for rl, wl, re, we
            in itertools.product(latencies, latencies, rd_energies, wr_energies)]


@dataclass
class SensitivityReport:
    rows: list[tuple[TechParams, float, float]]
    base: TechParams
    read_slowdown: float
    write_slowdown: float
    read_energy_share: float
    write_energy_share: float
    reference: dict = field(default_factory=lambda: {
        "read_slowdown": REFERENCE_READ_SLOWDOWN,
        "write_slowdown": REFERENCE_WRITE_SLOWDOWN,
        "write_energy_excess": REFERENCE_WRITE_ENERGY_EXCESS,
    })

    @property
    def write_energy_excess(self) -> float:
        """How much more energy writes use than reads (0.19 means 19% more)."""
        return self.write_energy_share / self.read_energy_share - 1 if self.read_energy_share else float("inf")

    def lines(self) -> list[str]:
        out = [
            f"slowdown from 10x read latency:  {self.read_slowdown:.3f} (reference {self.reference['read_slowdown']})",
            f"slowdown from 10x write latency: {self.write_slowdown:.3f} (reference {self.reference['write_slowdown']})",
            f"energy share read/write: {self.read_energy_share:.4f}/{self.write_energy_share:.4f}"
            f" (write excess {self.write_energy_excess:+.3f}, reference {self.reference['write_energy_excess']:+.2f})",
        ]
        return out


def sensitivity_report(ledger: CostLedger, grid: Iterable[TechParams] | None = None,
                       base: TechParams | None = None) -> SensitivityReport:
    """Price ``ledger`` over ``grid`` and derive the latency and energy ratios.

    Slowdowns compare ``base`` with the same point after a 10x increase of one
    latency. Energy shares are taken at ``base`` energies.
    """
    base = base or TechParams(1, 1, 50, 70, "unit-latency")
    grid = list(grid) if grid is not None else tech_grid()
    rows = [(t, total_time(ledger, t), total_energy(ledger, t)) for t in grid]
    t0 = total_time(ledger, base)
    rs = total_time(ledger, base.replace(rd_lat=10 * base.rd_lat)) / t0 if t0 else float("nan")
    ws = total_time(ledger, base.replace(wr_lat=10 * base.wr_lat)) / t0 if t0 else float("nan")
    rd_share, wr_share = energy_shares(ledger, base)
    return SensitivityReport(rows, base, rs, ws, rd_share, wr_share)
