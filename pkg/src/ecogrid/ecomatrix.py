"""Extended ecological flow matrix for a solved grid operating point.

Actors are generators, bus shunts, and buses of the solved island; three
boundary environs (input row, useful-export column, dissipation column)
close the system. Every entry is a nonnegative flow magnitude in physical
units (MW, Mvar, or MVA) and each actor conserves flow: what enters a
generator, shunt, or bus leaves it again through branches, loads, losses,
or the boundary.

Sign conventions for the cases the mapping leaves open (absorbed device
output, charging-dominated branches, apparent-magnitude non-additivity)
are centralized here and echoed in report metadata.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import Network
from .powerflow import PowerFlowSolution

ENVIRON_LABELS = ("input", "export", "dissipation")

_KIND_PREFIX = {"generator": "gen", "shunt": "shunt", "bus": "bus"}
_PREFIX_KIND = {v: k for k, v in _KIND_PREFIX.items()}


class FlowType(enum.Enum):
    """Which power quantity populates the matrix; value is the unit."""

    REAL = "MW"
    REACTIVE = "Mvar"
    APPARENT = "MVA"

    @classmethod
    def from_name(cls, name: str) -> "FlowType":
        try:
            return {"real": cls.REAL, "reactive": cls.REACTIVE, "apparent": cls.APPARENT}[
                name.lower()
            ]
        except KeyError:
            raise ValueError(f"unknown flow type {name!r}") from None


class RedundancyMode(enum.Enum):
    AGGREGATE = "aggregate"
    SPLIT = "split"

    @classmethod
    def from_name(cls, name: str) -> "RedundancyMode":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown redundancy mode {name!r}") from None


@dataclass(eq=False)
class EcoFlowMatrix:
    """Square (A+3)x(A+3) nonnegative flow matrix over actors + environs."""

    actor_labels: tuple[tuple[str, int], ...]
    values: np.ndarray
    units: str

    @property
    def T(self) -> np.ndarray:  # noqa: N802 - domain name for the matrix itself
        return self.values

    @property
    def n_actors(self) -> int:
        return len(self.actor_labels)

    @property
    def input_index(self) -> int:
        return self.n_actors

    @property
    def export_index(self) -> int:
        return self.n_actors + 1

    @property
    def dissipation_index(self) -> int:
        return self.n_actors + 2

    def actor_index(self, kind: str, element_id: int) -> int:
        return self.actor_labels.index((kind, element_id))

    def all_labels(self) -> tuple[str, ...]:
        actor = tuple(f"{_KIND_PREFIX[k]}:{i}" for k, i in self.actor_labels)
        return actor + ENVIRON_LABELS


def _sign_carrier(primary: float, secondary: float) -> float:
    """Orientation value: primary flow, falling back to the secondary."""
    return primary if primary != 0.0 else secondary


class _Builder:
    def __init__(self, labels, units):
        self.labels = tuple(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        n = len(self.labels) + 3
        self.T = np.zeros((n, n))
        self.input = n - 3
        self.export = n - 2
        self.dissipation = n - 1
        self.units = units

    def add(self, i: int, j: int, value: float):
        if value != 0.0:
            self.T[i, j] += value

    def device(self, actor: int, bus: int, value: float, absorbed_to: int):
        """Source devices feed input->device->bus; sinks bus->device->boundary."""
        if value > 0.0:
            self.add(self.input, actor, value)
            self.add(actor, bus, value)
        elif value < 0.0:
            self.add(bus, actor, -value)
            self.add(actor, absorbed_to, -value)

    def pair(self, f: int, t: int, into_f: float, into_t: float,
             mag_f: float | None = None, mag_t: float | None = None):
        """Branch entry between two buses from the signed end flows.

        into_f/into_t are the orientation carriers (positive = feeding the
        branch); magnitudes default to their absolute values but may be
        overridden (apparent flow orients on real power, carries MVA).
        """
        mf = abs(into_f) if mag_f is None else mag_f
        mt = abs(into_t) if mag_t is None else mag_t
        if into_f > 0.0 and into_t < 0.0:
            self.add(f, t, mf)
            net = mf - mt
            if net >= 0.0:
                self.add(t, self.dissipation, net)
            else:
                self.add(self.input, t, -net)
        elif into_t > 0.0 and into_f < 0.0:
            self.add(t, f, mt)
            net = mt - mf
            if net >= 0.0:
                self.add(f, self.dissipation, net)
            else:
                self.add(self.input, f, -net)
        elif into_f >= 0.0 and into_t >= 0.0:
            # both ends feed the branch: each bus dissipates its share
            if into_f > 0.0:
                self.add(f, self.dissipation, mf)
            if into_t > 0.0:
                self.add(t, self.dissipation, mt)
        else:
            # both ends receive: the branch acts as a source at each bus
            if into_f < 0.0:
                self.add(self.input, f, mf)
            if into_t < 0.0:
                self.add(self.input, t, mt)

    def load(self, bus: int, value: float):
        if value > 0.0:
            self.add(bus, self.export, value)
        elif value < 0.0:
            self.add(self.input, bus, -value)

    def balance_bus(self, bus: int):
        """Close the bus balance through the boundary (apparent flow only)."""
        residual = self.T[:, bus].sum() - self.T[bus, :].sum()
        if residual > 0.0:
            self.add(bus, self.dissipation, residual)
        elif residual < 0.0:
            self.add(self.input, bus, -residual)

    def finish(self) -> EcoFlowMatrix:
        return EcoFlowMatrix(actor_labels=self.labels, values=self.T, units=self.units)


def build_eco_matrix(
    network: Network,
    solution: PowerFlowSolution,
    flow: FlowType,
    mode: RedundancyMode,
    absorbed_gen_q: str = "dissipation",
) -> EcoFlowMatrix:
    """Map a converged operating point into the extended flow matrix.

    mode chooses whether same-bus generators stay individual actors
    (SPLIT) or are merged per bus after summing their signed outputs
    (AGGREGATE). absorbed_gen_q selects the boundary column receiving
    reactive power absorbed by generators ('dissipation' or 'export').
    """
    if not solution.converged:
        raise ValueError("cannot build a flow matrix from an unconverged solution")
    if absorbed_gen_q not in ("dissipation", "export"):
        raise ValueError(f"absorbed_gen_q must be 'dissipation' or 'export', got {absorbed_gen_q!r}")
    island = solution.solved_island
    bus_ids = sorted(island)
    if not bus_ids:
        raise ValueError("solved island is empty")

    # one (label, P, Q) record per generator actor
    gen_records: list[tuple[tuple[str, int], float, float]] = []
    if mode is RedundancyMode.SPLIT:
        for g in network.generators:
            if g.in_service and g.bus in island and g.id in solution.generator_P:
                gen_records.append(
                    (("generator", g.id), solution.generator_P[g.id], solution.generator_Q[g.id])
                )
    else:
        for bid in bus_ids:
            gens = [
                g
                for g in network.generators_by_bus.get(bid, ())
                if g.in_service and g.id in solution.generator_P
            ]
            if gens:
                p = sum(solution.generator_P[g.id] for g in gens)
                q = sum(solution.generator_Q[g.id] for g in gens)
                gen_records.append((("generator", bid), p, q))
    gen_bus = {
        label: (label[1] if mode is RedundancyMode.AGGREGATE else network.generator_by_id[label[1]].bus)
        for label, _, _ in gen_records
    }

    shunt_buses = [bid for bid in bus_ids if network.bus_by_id[bid].has_shunt]

    labels = (
        [label for label, _, _ in gen_records]
        + [("shunt", bid) for bid in shunt_buses]
        + [("bus", bid) for bid in bus_ids]
    )
    b = _Builder(labels, flow.value)
    bus_idx = {bid: b.index[("bus", bid)] for bid in bus_ids}
    absorbed_to = b.dissipation if absorbed_gen_q == "dissipation" else b.export

    if flow is FlowType.REAL:
        for label, p, _ in gen_records:
            b.device(b.index[label], bus_idx[gen_bus[label]], p, b.dissipation)
        for bid in shunt_buses:
            # shunts are real-power passive: their draw is bus dissipation
            b.add(bus_idx[bid], b.dissipation, solution.shunt_P_consumed.get(bid, 0.0))
        for fl in solution.branch_flows.values():
            b.pair(bus_idx[fl.from_bus], bus_idx[fl.to_bus], fl.P_from, fl.P_to)
        for bid in bus_ids:
            b.load(bus_idx[bid], network.bus_by_id[bid].load_P)

    elif flow is FlowType.REACTIVE:
        for label, _, q in gen_records:
            b.device(b.index[label], bus_idx[gen_bus[label]], q, absorbed_to)
        for bid in shunt_buses:
            b.device(
                b.index[("shunt", bid)],
                bus_idx[bid],
                solution.shunt_Q_injected.get(bid, 0.0),
                b.dissipation,
            )
        for fl in solution.branch_flows.values():
            b.pair(bus_idx[fl.from_bus], bus_idx[fl.to_bus], fl.Q_from, fl.Q_to)
        for bid in bus_ids:
            b.load(bus_idx[bid], network.bus_by_id[bid].load_Q)

    else:  # APPARENT: magnitudes hypot(P, Q), oriented by the real flow
        for label, p, q in gen_records:
            s = math.hypot(p, q)
            b.device(
                b.index[label],
                bus_idx[gen_bus[label]],
                math.copysign(s, _sign_carrier(p, q)) if s else 0.0,
                absorbed_to,
            )
        for bid in shunt_buses:
            p_sh = solution.shunt_P_consumed.get(bid, 0.0)
            q_sh = solution.shunt_Q_injected.get(bid, 0.0)
            s = math.hypot(p_sh, q_sh)
            # a consuming (G > 0) or inductive shunt absorbs; capacitive injects
            carrier = _sign_carrier(-p_sh, q_sh)
            b.device(
                b.index[("shunt", bid)],
                bus_idx[bid],
                math.copysign(s, carrier) if s else 0.0,
                b.dissipation,
            )
        for fl in solution.branch_flows.values():
            b.pair(
                bus_idx[fl.from_bus],
                bus_idx[fl.to_bus],
                _sign_carrier(fl.P_from, fl.Q_from),
                _sign_carrier(fl.P_to, fl.Q_to),
                mag_f=fl.S_from,
                mag_t=fl.S_to,
            )
        for bid in bus_ids:
            bus = network.bus_by_id[bid]
            s = math.hypot(bus.load_P, bus.load_Q)
            b.load(bus_idx[bid], math.copysign(s, _sign_carrier(bus.load_P, bus.load_Q)) if s else 0.0)
        # apparent magnitudes are not nodally additive: phase cancellation
        # at each bus is closed out through the boundary
        for bid in bus_ids:
            b.balance_bus(bus_idx[bid])

    return b.finish()


def actor_imbalances(matrix: EcoFlowMatrix) -> np.ndarray:
    """|inflow - outflow| per actor, in matrix units."""
    a = matrix.n_actors
    inflow = matrix.values[:, :a].sum(axis=0)
    outflow = matrix.values[:a, :].sum(axis=1)
    return np.abs(inflow - outflow)


def conservation_report(
    matrix: EcoFlowMatrix, rel_tol: float = 1e-6
) -> list[tuple[tuple[str, int], float]]:
    """Actors whose imbalance exceeds rel_tol * TSTp (empty when conserved)."""
    imbalances = actor_imbalances(matrix)
    threshold = rel_tol * matrix.values.sum()
    return [
        (label, float(imb))
        for label, imb in zip(matrix.actor_labels, imbalances)
        if imb > threshold
    ]


def export_matrix(matrix: EcoFlowMatrix) -> str:
    """CSV rendering: header row/column of labels, corner cell = units."""
    labels = matrix.all_labels()
    lines = [",".join((matrix.units,) + labels)]
    for lab, row in zip(labels, matrix.values):
        lines.append(",".join([lab] + [format(v, ".12g") for v in row]))
    return "\n".join(lines) + "\n"


def import_matrix(text: str) -> EcoFlowMatrix:
    """Inverse of export_matrix; lines starting with '#' are ignored."""
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    header = rows[0].split(",")
    units = header[0]
    labels = header[1:]
    if len(labels) < 3 or tuple(labels[-3:]) != ENVIRON_LABELS:
        raise ValueError("matrix CSV must end with input/export/dissipation columns")
    actor_labels = []
    for lab in labels[:-3]:
        prefix, _, ident = lab.partition(":")
        if prefix not in _PREFIX_KIND:
            raise ValueError(f"unknown actor label {lab!r}")
        actor_labels.append((_PREFIX_KIND[prefix], int(ident)))
    n = len(labels)
    values = np.zeros((n, n))
    if len(rows) != n + 1:
        raise ValueError(f"expected {n + 1} CSV rows, got {len(rows)}")
    for i, ln in enumerate(rows[1:]):
        cells = ln.split(",")
        if len(cells) != n + 1:
            raise ValueError(f"row {i + 2}: expected {n + 1} cells, got {len(cells)}")
        values[i] = [float(c) for c in cells[1:]]
    return EcoFlowMatrix(actor_labels=tuple(actor_labels), values=values, units=units)
