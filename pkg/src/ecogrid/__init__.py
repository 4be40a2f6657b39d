"""Ecological flow-matrix robustness analysis for AC power systems."""

__version__ = "0.1.0"

# Modeling conventions that shape every reported number; echoed in the
# metadata block of all machine-readable outputs so results stay traceable.
CONVENTIONS = {
    "ascendency_form": "mutual-information (no leading minus), column-sum marginal",
    "log_bases": "log2 inside ASC/DC, natural log in robustness",
    "branch_entry": "sending-end magnitude, oriented by flow sign",
    "loss_allocation": "receiving-bus dissipation; negative loss enters as input",
    "apparent_direction": "follows real power; reactive sign where real is zero",
    "apparent_bus_residual": "phase-cancellation residual to dissipation/input",
    "absorbed_gen_q": "dissipation (flag to flip to export)",
    "shunt_real_power": "bus dissipation; shunt actor used for Mvar/MVA only",
    "negative_load": "system input to the bus",
    "gen_q_allocation": "Q-range-width proportional above aggregate minimum",
    "slack_allocation": "full P/Q residual on the slack bus, first unit takes P",
    "flow_stats": "from-end magnitudes, population standard deviation",
}
