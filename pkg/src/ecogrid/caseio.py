"""Case-file ingestion (matrix-block grid-case format) and JSON round-trip.

The supported dialect is the common MATLAB-style case layout: a scalar
``mpc.baseMVA`` plus numeric ``mpc.bus``/``mpc.gen``/``mpc.branch`` tables.
Generator-cost tables and any other blocks are ignored.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

from .model import Branch, Bus, BusKind, Generator, Network

_BUS_KIND_BY_CODE = {1: BusKind.PQ, 2: BusKind.PV, 3: BusKind.SLACK, 4: BusKind.PQ}

_BASE_RE = re.compile(r"^\s*(?:mpc\.)?baseMVA\s*=\s*([0-9eE.+-]+)\s*;?\s*$")
_TABLE_RE = re.compile(r"^\s*(?:mpc\.)?(\w+)\s*=\s*\[(.*)$")
_NAME_RE = re.compile(r"^\s*function\s+\w+\s*=\s*(\w+)")


class CaseFormatError(ValueError):
    """Raised for malformed case text; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _strip_comment(line: str) -> str:
    for marker in ("%", "//"):
        pos = line.find(marker)
        if pos >= 0:
            line = line[:pos]
    return line


def _parse_rows(lines, start, numbers_needed):
    """Collect numeric rows until the closing ``];`` of a table block."""
    rows: list[tuple[list[float], int]] = []
    i = start
    while i < len(lines):
        raw = _strip_comment(lines[i])
        done = "]" in raw
        raw = raw.split("]")[0]
        for chunk in raw.split(";"):
            tokens = chunk.split()
            if not tokens:
                continue
            try:
                values = [float(t) for t in tokens]
            except ValueError as exc:
                raise CaseFormatError(f"non-numeric token in table row: {exc}", i + 1) from None
            if len(values) < numbers_needed:
                raise CaseFormatError(
                    f"table row has {len(values)} columns, expected at least {numbers_needed}",
                    i + 1,
                )
            rows.append((values, i + 1))
        if done:
            return rows, i + 1
        i += 1
    raise CaseFormatError("unterminated table (missing '];')", start)


def parse_case(text: str, name: str | None = None) -> Network:
    """Parse case text into a Network, preserving per-unit fields as read.

    Raises CaseFormatError (with a line number where possible) on syntax
    errors, duplicate bus ids, dangling references, or a missing slack bus.
    """
    lines = text.splitlines()
    base_mva: float | None = None
    tables: dict[str, list[tuple[list[float], int]]] = {}
    case_name = name

    i = 0
    while i < len(lines):
        line = _strip_comment(lines[i])
        if case_name is None:
            m = _NAME_RE.match(lines[i])
            if m:
                case_name = m.group(1)
        m = _BASE_RE.match(line)
        if m:
            base_mva = float(m.group(1))
            i += 1
            continue
        m = _TABLE_RE.match(line)
        if m and m.group(1) in ("bus", "gen", "branch"):
            kind = m.group(1)
            min_cols = {"bus": 13, "gen": 10, "branch": 11}[kind]
            # inline content after '[' belongs to the first row
            rest = m.group(2).strip()
            if rest:
                lines[i] = rest
                rows, i = _parse_rows(lines, i, min_cols)
            else:
                rows, i = _parse_rows(lines, i + 1, min_cols)
            tables[kind] = rows
            continue
        i += 1

    if base_mva is None:
        raise CaseFormatError("missing baseMVA declaration")
    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseFormatError(f"missing '{required}' table")

    buses: list[Bus] = []
    seen: set[int] = set()
    for values, line_no in tables["bus"]:
        bus_id = int(values[0])
        if bus_id in seen:
            raise CaseFormatError(f"duplicate bus id {bus_id}", line_no)
        seen.add(bus_id)
        code = int(values[1])
        if code not in _BUS_KIND_BY_CODE:
            raise CaseFormatError(f"bus {bus_id}: unknown bus type code {code}", line_no)
        buses.append(
            Bus(
                id=bus_id,
                kind=_BUS_KIND_BY_CODE[code],
                load_P=values[2],
                load_Q=values[3],
                shunt_G=values[4],
                shunt_B=values[5],
                voltage_magnitude_setpoint=values[7],
                base_kV=values[9],
                v_max=values[11],
                v_min=values[12],
            )
        )

    generators: list[Generator] = []
    for idx, (values, line_no) in enumerate(tables["gen"], start=1):
        bus_id = int(values[0])
        if bus_id not in seen:
            raise CaseFormatError(f"generator {idx}: references unknown bus {bus_id}", line_no)
        generators.append(
            Generator(
                id=idx,
                bus=bus_id,
                P_out=values[1],
                Q_out=values[2],
                Q_max=values[3],
                Q_min=values[4],
                voltage_setpoint=values[5],
                in_service=values[7] > 0,
                P_max=values[8],
                P_min=values[9],
            )
        )

    branches: list[Branch] = []
    for idx, (values, line_no) in enumerate(tables["branch"], start=1):
        f_bus, t_bus = int(values[0]), int(values[1])
        for end in (f_bus, t_bus):
            if end not in seen:
                raise CaseFormatError(f"branch {idx}: references unknown bus {end}", line_no)
        branches.append(
            Branch(
                id=idx,
                from_bus=f_bus,
                to_bus=t_bus,
                r=values[2],
                x=values[3],
                b_charging=values[4],
                rate_MVA=values[5],
                tap_ratio=values[8],
                phase_shift=values[9],
                in_service=values[10] > 0,
            )
        )

    if not any(b.kind is BusKind.SLACK for b in buses):
        raise CaseFormatError("no slack bus in case")

    return Network(
        name=case_name or "case",
        base_MVA=base_mva,
        buses=tuple(buses),
        generators=tuple(generators),
        branches=tuple(branches),
    )


def load_case(path: str | Path) -> tuple[Network, str]:
    """Read a case file; returns (network, sha256 of the raw text)."""
    text = Path(path).read_text()
    return parse_case(text, name=Path(path).stem), case_checksum(text)


def case_checksum(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def network_to_json(network: Network) -> str:
    """Canonical JSON rendering of a Network (field names match the model)."""
    payload = {
        "name": network.name,
        "base_MVA": network.base_MVA,
        "buses": [
            {
                "id": b.id,
                "kind": b.kind.value,
                "voltage_magnitude_setpoint": b.voltage_magnitude_setpoint,
                "load_P": b.load_P,
                "load_Q": b.load_Q,
                "shunt_G": b.shunt_G,
                "shunt_B": b.shunt_B,
                "v_min": b.v_min,
                "v_max": b.v_max,
                "base_kV": b.base_kV,
            }
            for b in network.buses
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "P_out": g.P_out,
                "Q_out": g.Q_out,
                "Q_min": g.Q_min,
                "Q_max": g.Q_max,
                "P_min": g.P_min,
                "P_max": g.P_max,
                "in_service": g.in_service,
                "voltage_setpoint": g.voltage_setpoint,
            }
            for g in network.generators
        ],
        "branches": [
            {
                "id": br.id,
                "from_bus": br.from_bus,
                "to_bus": br.to_bus,
                "r": br.r,
                "x": br.x,
                "b_charging": br.b_charging,
                "rate_MVA": br.rate_MVA,
                "tap_ratio": br.tap_ratio,
                "phase_shift": br.phase_shift,
                "in_service": br.in_service,
            }
            for br in network.branches
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=2)


def network_from_json(text: str) -> Network:
    data = json.loads(text)
    kinds = {k.value: k for k in BusKind}
    return Network(
        name=data["name"],
        base_MVA=data["base_MVA"],
        buses=tuple(
            Bus(
                id=b["id"],
                kind=kinds[b["kind"]],
                voltage_magnitude_setpoint=b["voltage_magnitude_setpoint"],
                load_P=b["load_P"],
                load_Q=b["load_Q"],
                shunt_G=b["shunt_G"],
                shunt_B=b["shunt_B"],
                v_min=b["v_min"],
                v_max=b["v_max"],
                base_kV=b["base_kV"],
            )
            for b in data["buses"]
        ),
        generators=tuple(
            Generator(
                id=g["id"],
                bus=g["bus"],
                P_out=g["P_out"],
                Q_out=g["Q_out"],
                Q_min=g["Q_min"],
                Q_max=g["Q_max"],
                P_min=g["P_min"],
                P_max=g["P_max"],
                in_service=g["in_service"],
                voltage_setpoint=g["voltage_setpoint"],
            )
            for g in data["generators"]
        ),
        branches=tuple(
            Branch(
                id=br["id"],
                from_bus=br["from_bus"],
                to_bus=br["to_bus"],
                r=br["r"],
                x=br["x"],
                b_charging=br["b_charging"],
                rate_MVA=br["rate_MVA"],
                tap_ratio=br["tap_ratio"],
                phase_shift=br["phase_shift"],
                in_service=br["in_service"],
            )
            for br in data["branches"]
        ),
    )
