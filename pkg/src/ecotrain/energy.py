"""Analytic operation counters and the precision-scaled energy model.

Counts are kept per (op_class, bit_width). FLOPs are multiply + add counts.
Energy defaults to count * unit_cost_32(op_class) * (bits/32)^2; the
"paper_calibrated" model replaces the quadratic ratio at 8 bits with
measured 45nm ratios (multiply 0.05, add 0.03, data_move 0.25) and keeps
the quadratic law elsewhere.
"""

import json
from dataclasses import dataclass, field

from .errors import ConfigError

OP_CLASSES = ("multiply", "add", "data_move")
VALID_BITS = (1, 4, 8, 10, 16, 32)

# pJ-scale unit costs for a 45nm-class design at 32 bits
DEFAULT_UNIT_COSTS = {"multiply": 3.7, "add": 0.9, "data_move": 5.0}

# measured 8-bit vs 32-bit cost ratios (95% / 97% / 75% savings)
CALIBRATED_8BIT_RATIOS = {"multiply": 0.05, "add": 0.03, "data_move": 0.25}

ENERGY_MODELS = ("quadratic", "paper_calibrated")


def cost_ratio(bits: int, op_class: str, model: str = "quadratic") -> float:
    """Per-op cost at `bits` relative to the same op at 32 bits."""
    if model == "paper_calibrated" and bits == 8:
        return CALIBRATED_8BIT_RATIOS[op_class]
    return (bits / 32.0) ** 2


def energy_of(count, bits: int, op_class: str, model: str = "quadratic",
              unit_costs=None) -> float:
    if op_class not in OP_CLASSES:
        raise ConfigError(f"unknown op class {op_class!r}")
    if bits not in VALID_BITS:
        raise ConfigError(f"unknown bit width {bits}; valid: {VALID_BITS}")
    units = unit_costs or DEFAULT_UNIT_COSTS
    return count * units[op_class] * cost_ratio(bits, op_class, model)


class EnergyLedger:
    """Monotone per-(op_class, bits) counters owned by one training loop."""

    def __init__(self, model: str = "quadratic", unit_costs=None):
        if model not in ENERGY_MODELS:
            raise ConfigError(f"unknown energy model {model!r}; valid: {ENERGY_MODELS}")
        self.model = model
        self.unit_costs = dict(unit_costs or DEFAULT_UNIT_COSTS)
        self.counters: dict[tuple[str, int], int] = {}
        self._paused = 0

    def record(self, op_class: str, count, bits: int):
        if self._paused:
            return
        if op_class not in OP_CLASSES:
            raise ConfigError(f"unknown op class {op_class!r}")
        if bits not in VALID_BITS:
            raise ConfigError(f"unknown bit width {bits}; valid: {VALID_BITS}")
        if count < 0:
            raise ConfigError(f"count must be >= 0, got {count}")
        if count == 0:
            return
        key = (op_class, bits)
        self.counters[key] = self.counters.get(key, 0) + int(count)

    def pause(self):
        self._paused += 1

    def resume(self):
        if self._paused == 0:
            raise ConfigError("resume() without matching pause()")
        self._paused -= 1

    def flops(self) -> int:
        return sum(c for (op, _), c in self.counters.items() if op in ("multiply", "add"))

    def energy(self) -> float:
        return sum(
            energy_of(c, bits, op, self.model, self.unit_costs)
            for (op, bits), c in self.counters.items()
        )

    def snapshot(self) -> dict:
        counters = {f"{op}@{bits}": c for (op, bits), c in sorted(self.counters.items())}
        return {"flops": self.flops(), "energy": self.energy(), "counters": counters}

    def copy(self) -> "EnergyLedger":
        dup = EnergyLedger(self.model, self.unit_costs)
        dup.counters = dict(self.counters)
        return dup

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.snapshot(), fh, indent=1, sort_keys=True)
            fh.write("\n")


@dataclass
class SavingsReport:
    computational_savings: float
    energy_savings: float
    attribution: dict = field(default_factory=dict)


def savings_report(run_totals: dict, baseline_totals: dict,
                   attribution: dict | None = None) -> SavingsReport:
    """Relative FLOP and energy savings of a run against a named baseline.

    Totals are {"flops": ..., "energy": ...} dicts (ledger snapshots work).
    """
    base_flops = baseline_totals["flops"]
    base_energy = baseline_totals["energy"]
    if base_flops == 0:
        raise ConfigError("baseline has zero FLOPs; cannot form a savings ratio")
    if base_energy == 0:
        raise ConfigError("baseline has zero energy; cannot form a savings ratio")
    return SavingsReport(
        computational_savings=1.0 - run_totals["flops"] / base_flops,
        energy_savings=1.0 - run_totals["energy"] / base_energy,
        attribution=dict(attribution or {}),
    )
