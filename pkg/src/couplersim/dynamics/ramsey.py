"""Ramsey fringes with CZ pulses embedded in the free evolution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..device import TWO_PI, DeviceGraph, NoiseSpec, flux_sensitivity
from ..errors import ValidationError
from ..spectrum import _resolve_edge


@dataclass
class RamseyTrace:
    delays: np.ndarray          # ns of idle time between the pi/2 pulses
    population: np.ndarray      # excited-state probability
    amplitude: float            # fringe contrast at zero idle delay
    phase: float                # degrees, dynamic phase of the excursions
    envelope: np.ndarray        # contrast vs delay


def ramsey_with_cz(graph: DeviceGraph, edge, n_cz: int, qubit_detuning_during_cz: float,
                   noise: NoiseSpec | None = None, t_cz: float = 60.0, qubit: str | None = None,
                   delays=None, fringe_mhz: float = 2.0) -> RamseyTrace:
    """Ramsey experiment on one qubit of ``edge`` with ``n_cz`` gates inside.

    During each gate the qubit is held ``qubit_detuning_during_cz`` MHz
    below its sweetspot.  The bare decay is exponential in T2_ramsey.  Each
    excursion adds phase noise from quasi-static flux noise of rms
    ``flux_noise_amp`` through the local slope |df/dPhi|; the phases of
    successive gates add coherently, giving a Gaussian contrast factor.
    """
    if n_cz < 0:
        raise ValidationError("n_cz must be non-negative")
    if qubit_detuning_during_cz < 0:
        raise ValidationError("qubit excursion is measured downward and must be >= 0")
    e = _resolve_edge(graph, edge)
    if qubit is None:
        fa = graph.mode(e.qubit_a).f_sweetspot
        fb = graph.mode(e.qubit_b).f_sweetspot
        qubit = e.qubit_a if fa < fb else e.qubit_b
    spec = graph.mode(qubit)
    noise = noise or graph.noise_for(qubit)
    if noise is None:
        raise ValidationError(f"no noise parameters for {qubit}")
    delays = np.linspace(0.0, 4000.0, 81) if delays is None else np.asarray(delays, dtype=float)

    excursion = qubit_detuning_during_cz * 1e-3
    slope = flux_sensitivity(spec, spec.f_sweetspot - excursion) if excursion > 0 else 0.0
    sigma = TWO_PI * slope * noise.flux_noise_amp * t_cz * n_cz
    flux_factor = np.exp(-0.5 * sigma ** 2)
    total = delays + n_cz * t_cz
    envelope = np.exp(-total * 1e-3 / noise.T2_ramsey) * flux_factor
    phase = 360.0 * excursion * t_cz * n_cz
    phase = (phase + 180.0) % 360.0 - 180.0
    pop = 0.5 + 0.5 * envelope * np.cos(TWO_PI * fringe_mhz * 1e-3 * delays + np.deg2rad(phase))
    return RamseyTrace(delays, pop, float(envelope[0]), float(phase), envelope)
