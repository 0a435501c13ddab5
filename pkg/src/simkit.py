"""
Simulazione di scenari sintetici per l'array lineare.

Questo modulo si occupa di:
1. Costruire la verita' (DOA e ampiezze per ogni passo) da una lista di sorgenti
   con modello di ampiezza, moto e finestra di attivita'
2. Sintetizzare gli snapshot y_t = sum_k alpha_k a(theta_k) + rumore con SNR
   calibrato sul segnale realizzato a ogni passo
3. Calcolare lo spettro di beamforming convenzionale (CBF) su una griglia di DOA

Tutte le estrazioni casuali usano numpy.random.default_rng(seed): stesso seed,
stesso risultato.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from model import ArrayGeometry, Snapshot, doa_to_pa, steering

logger = logging.getLogger(__name__)

AMPLITUDE_MODELS = ('gaussian', 'fixed')
MOTION_MODELS = ('static', 'random_walk')


@dataclass(frozen=True)
class SourceSpec:
    """
    Descrizione di una sorgente simulata.

    Attributi:
        initial_doa: DOA iniziale [gradi]
        amplitude_model: 'gaussian' (CN(0, tau) a ogni passo) oppure 'fixed'
        tau: Varianza delle ampiezze gaussiane
        amplitude: Ampiezza complessa costante del modello 'fixed'
        motion: 'static' oppure 'random_walk'
        std_deg: Deviazione standard degli incrementi del random walk [gradi/passo]
        window: Finestra di attivita' [t_start, t_end] (t_end None = fino alla fine)
    """
    initial_doa: float
    amplitude_model: str = 'gaussian'
    tau: float = 1.0
    amplitude: complex = 10.0 + 0.0j
    motion: str = 'static'
    std_deg: float = 1.5
    window: Tuple[int, Optional[int]] = (1, None)

    def __post_init__(self) -> None:
        if abs(self.initial_doa) > 90.0:
            raise ValueError(f'initial_doa must lie in [-90, 90], got {self.initial_doa}')
        if self.amplitude_model not in AMPLITUDE_MODELS:
            raise ValueError(f'amplitude_model must be one of {AMPLITUDE_MODELS}, got {self.amplitude_model!r}')
        if self.motion not in MOTION_MODELS:
            raise ValueError(f'motion must be one of {MOTION_MODELS}, got {self.motion!r}')
        if self.amplitude_model == 'gaussian' and self.tau <= 0.0:
            raise ValueError(f'gaussian amplitude variance must be > 0, got {self.tau}')
        if self.std_deg < 0.0:
            raise ValueError(f'random walk std must be >= 0, got {self.std_deg}')
        start, end = self.window
        if start < 1 or (end is not None and end < start):
            raise ValueError(f'activity window {self.window} is empty or starts before t = 1')

    def is_active(self, t: int) -> bool:
        start, end = self.window
        return t >= start and (end is None or t <= end)


@dataclass
class Truth:
    """
    Verita' simulata.

    Attributi:
        steps: Per ogni passo t = 1..t_max, lista di (source_id, doa_deg, ampiezza)
               delle sole sorgenti attive
    """
    steps: List[List[Tuple[int, float, complex]]] = field(default_factory=list)

    @property
    def t_max(self) -> int:
        return len(self.steps)

    def doas(self, t: int) -> np.ndarray:
        """DOA attivi al passo t (1-based)."""
        return np.array([doa for _, doa, _ in self.steps[t - 1]], dtype=float)

    def to_frame(self) -> pd.DataFrame:
        """Tabella t, source_id, doa_deg, amp_re, amp_im."""
        rows = [
            {'t': t, 'source_id': sid, 'doa_deg': doa, 'amp_re': amp.real, 'amp_im': amp.imag}
            for t, step in enumerate(self.steps, start=1)
            for sid, doa, amp in step
        ]
        return pd.DataFrame(rows, columns=['t', 'source_id', 'doa_deg', 'amp_re', 'amp_im'])


def build_truth(specs: Sequence[SourceSpec], t_max: int, seed) -> Truth:
    """
    Costruisce le tracce vere delle sorgenti.

    Il random walk prosegue anche fuori dalla finestra di attivita' e viene
    saturato a [-90, 90]. Le ampiezze gaussiane sono estratte per ogni passo.

    Args:
        specs: Sorgenti
        t_max: Numero di passi (>= 1)
        seed: Seed (intero o sequenza di interi) per numpy.random.default_rng

    Returns:
        Truth con t_max passi
    """
    if t_max < 1:
        raise ValueError(f't_max must be >= 1, got {t_max}')
    rng = np.random.default_rng(seed)

    tracks = []
    for spec in specs:
        # Stesse estrazioni per ogni sorgente qualunque sia il modello
        steps = rng.normal(0.0, 1.0, size=t_max - 1)
        draws = rng.standard_normal(size=(t_max, 2))

        doa = np.empty(t_max)
        doa[0] = spec.initial_doa
        for k in range(1, t_max):
            step = spec.std_deg * steps[k - 1] if spec.motion == 'random_walk' else 0.0
            doa[k] = np.clip(doa[k - 1] + step, -90.0, 90.0)

        if spec.amplitude_model == 'gaussian':
            amps = np.sqrt(spec.tau / 2.0) * (draws[:, 0] + 1j * draws[:, 1])
        else:
            amps = np.full(t_max, complex(spec.amplitude))
        tracks.append((doa, amps))

    steps_out = []
    for t in range(1, t_max + 1):
        steps_out.append([
            (sid, float(doa[t - 1]), complex(amps[t - 1]))
            for sid, (spec, (doa, amps)) in enumerate(zip(specs, tracks))
            if spec.is_active(t)
        ])
    return Truth(steps=steps_out)


def _signal(truth: Truth, geom: ArrayGeometry, t: int) -> np.ndarray:
    sig = np.zeros(geom.m_sensors, dtype=complex)
    for _, doa, amp in truth.steps[t - 1]:
        sig += amp * steering(geom, doa_to_pa(geom, doa))
    return sig


def synthesize(
    truth: Truth,
    geom: ArrayGeometry,
    snr_db: float,
    seed,
    flags: Optional[Set[str]] = None,
) -> List[Snapshot]:
    """
    Sintetizza gli snapshot dalla verita'.

    Rumore CN(0, nu_t) con nu_t = ||s_t||^2 / (M 10^{snr/10}). Un passo senza
    sorgenti attive usa la potenza non nulla piu' recente (o la prima non
    nulla della sequenza, o 1) e viene segnalato con 'noise_only_step'.
    Con snr = +inf gli snapshot sono privi di rumore.
    """
    rng = np.random.default_rng(seed)
    m = geom.m_sensors
    signals = [_signal(truth, geom, t) for t in range(1, truth.t_max + 1)]
    powers = [float(np.real(np.vdot(s, s))) for s in signals]
    nonzero = [p for p in powers if p > 0.0]
    last_power = nonzero[0] if nonzero else 1.0

    snapshots = []
    for t, (sig, power) in enumerate(zip(signals, powers), start=1):
        noise = rng.standard_normal(size=(2, m))
        if np.isinf(snr_db) and snr_db > 0:
            snapshots.append(Snapshot(t=t, y=sig))
            continue
        if power > 0.0:
            last_power = power
        else:
            if flags is not None:
                flags.add('noise_only_step')
            logger.debug('t=%d has no active source, noise power from %.3g', t, last_power)
        nu = last_power / (m * 10.0 ** (snr_db / 10.0))
        snapshots.append(Snapshot(t=t, y=sig + np.sqrt(nu / 2.0) * (noise[0] + 1j * noise[1])))
    return snapshots


def cbf(geom: ArrayGeometry, y, grid: Sequence[float]) -> np.ndarray:
    """
    Spettro di beamforming convenzionale P(beta) = |a(beta)^H y|^2 / M^2.

    Args:
        geom: Geometria dell'array
        y: Snapshot o vettore delle misure
        grid: DOA della griglia [gradi]

    Returns:
        Potenza per ogni punto della griglia
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError('cbf grid must be nonempty')
    y = y.y if isinstance(y, Snapshot) else np.asarray(y, dtype=complex)
    thetas = doa_to_pa(geom, grid)
    a = np.exp(1j * np.outer(np.atleast_1d(thetas), np.arange(geom.m_sensors)))
    return np.abs(a.conj() @ y) ** 2 / geom.m_sensors ** 2
