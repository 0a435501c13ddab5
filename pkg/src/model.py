"""
Modello del sistema: geometria dell'array, vettori di steering e stato dello stimatore.

Questo modulo definisce le strutture dati condivise dal motore variazionale
(valse.py) e dal livello sequenziale (tracker.py):
- ArrayGeometry: array lineare uniforme (ULA) di M sensori
- Snapshot: una misura complessa di lunghezza M al passo t
- ComponentBelief: credenza su una delle L componenti potenziali
- PosteriorState: stato completo dello stimatore dopo un passo temporale
- EstimatorConfig: parametri dello stimatore

Convenzioni:
- Pseudo angoli (PA) in radianti: theta = -(omega*d/c) * sin(beta)
- DOA in gradi nell'intervallo [-90, 90]
- Indice temporale t a partire da 1
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Set

import numpy as np

from circular import VonMises, bessel_ratios, wrap_angle

_SPACING_RTOL = 1e-12  # Tolleranza sul vincolo d <= c*pi/omega


# ==================== GEOMETRIA ====================

@dataclass(frozen=True)
class ArrayGeometry:
    """
    Array lineare uniforme.

    Attributi:
        m_sensors: Numero di sensori M (>= 2)
        spacing: Distanza tra sensori d [m]
        sound_speed: Velocita' di propagazione c [m/s]
        omega: Pulsazione omega = 2*pi*f [rad/s]
    """
    m_sensors: int
    spacing: float
    sound_speed: float
    omega: float

    def __post_init__(self) -> None:
        if int(self.m_sensors) != self.m_sensors or self.m_sensors < 2:
            raise ValueError(f'm_sensors must be an integer >= 2, got {self.m_sensors}')
        for name in ('spacing', 'sound_speed', 'omega'):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f'{name} must be strictly positive, got {value}')
        # Spaziatura oltre mezza lunghezza d'onda: pseudo angoli ambigui
        limit = self.sound_speed * np.pi / self.omega
        if self.spacing > limit * (1.0 + _SPACING_RTOL):
            raise ValueError(
                f'spacing {self.spacing} m exceeds c*pi/omega = {limit:.6g} m (spatial aliasing)'
            )

    @classmethod
    def from_frequency(cls, m_sensors: int, spacing: float, sound_speed: float, frequency_hz: float) -> 'ArrayGeometry':
        """Costruisce la geometria a partire dalla frequenza [Hz]."""
        return cls(int(m_sensors), float(spacing), float(sound_speed), 2.0 * np.pi * float(frequency_hz))

    @property
    def pa_scale(self) -> float:
        """Fattore omega*d/c (pi per spaziatura a mezza lunghezza d'onda)."""
        return self.omega * self.spacing / self.sound_speed


def _n_sensors(geom) -> int:
    return geom if isinstance(geom, (int, np.integer)) else geom.m_sensors


def steering(geom: ArrayGeometry | int, theta: float) -> np.ndarray:
    """
    Vettore di steering a(theta) = [1, e^{j theta}, ..., e^{j (M-1) theta}].

    Args:
        geom: Geometria dell'array (oppure direttamente il numero di sensori M)
        theta: Pseudo angolo [rad]

    Returns:
        Vettore complesso di lunghezza M
    """
    theta = wrap_angle(theta)
    return np.exp(1j * np.arange(_n_sensors(geom)) * theta)


def doa_to_pa(geom: ArrayGeometry, beta):
    """
    Converte un DOA [gradi] nello pseudo angolo [rad].

    Args:
        geom: Geometria dell'array
        beta: DOA in gradi (scalare o array), |beta| <= 90

    Returns:
        theta = -(omega*d/c) * sin(beta)
    """
    beta_arr = np.asarray(beta, dtype=float)
    if np.any(np.abs(beta_arr) > 90.0) or not np.all(np.isfinite(beta_arr)):
        raise ValueError(f'DOA must lie in [-90, 90] degrees, got {beta}')
    theta = -geom.pa_scale * np.sin(np.deg2rad(beta_arr))
    return float(theta) if theta.ndim == 0 else theta


def pa_to_doa(geom: ArrayGeometry, theta):
    """
    Converte uno pseudo angolo [rad] nel DOA [gradi].

    Raises:
        ValueError: se |theta * c / (omega*d)| > 1 (regione invisibile)
    """
    arg = -np.asarray(theta, dtype=float) / geom.pa_scale
    if np.any(np.abs(arg) > 1.0 + 1e-12):
        raise ValueError(f'pseudo angle {theta} maps outside the visible region')
    beta = np.rad2deg(np.arcsin(np.clip(arg, -1.0, 1.0)))
    return float(beta) if beta.ndim == 0 else beta


def expected_steering(vm: VonMises, m_sensors: int) -> np.ndarray:
    """
    Steering atteso E[a(theta)] sotto la credenza vm.

    L'elemento m vale I_m(k)/I_0(k) * exp(j*m*mu); l'elemento 0 vale 1.
    """
    m = np.arange(m_sensors)
    return bessel_ratios(vm.kappa, m_sensors) * np.exp(1j * m * vm.mu)


# ==================== MISURE E STATO ====================

@dataclass(frozen=True, eq=False)
class Snapshot:
    """
    Una misura dell'array.

    Attributi:
        t: Indice del passo temporale (>= 1)
        y: Vettore complesso delle uscite dei sensori
    """
    t: int
    y: np.ndarray

    def __post_init__(self) -> None:
        if int(self.t) != self.t or self.t < 1:
            raise ValueError(f'snapshot time index must be an integer >= 1, got {self.t}')
        y = np.asarray(self.y, dtype=complex)
        if y.ndim != 1 or len(y) == 0:
            raise ValueError('snapshot vector must be one-dimensional and nonempty')
        object.__setattr__(self, 't', int(self.t))
        object.__setattr__(self, 'y', y)

    @property
    def m_sensors(self) -> int:
        return len(self.y)


@dataclass
class ComponentBelief:
    """
    Credenza su una componente potenziale.

    Attributi:
        theta: VM sullo pseudo angolo
        active_prob: Probabilita' di attivazione rho in [0, 1]
        was_active_any_iter: True se la componente e' stata attiva in almeno un'iterazione
    """
    theta: VonMises
    active_prob: float
    was_active_any_iter: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.active_prob <= 1.0:
            raise ValueError(f'active_prob must lie in [0, 1], got {self.active_prob}')


@dataclass(eq=False)
class PosteriorState:
    """
    Stato dello stimatore al termine di un passo temporale.

    Attributi:
        beliefs: L credenze sulle componenti
        s_hat: Vettore binario di attivazione (lunghezza L)
        w_hat: Media a posteriori dei pesi sull'insieme attivo S
        c_hat: Covarianza a posteriori dei pesi su S (|S| x |S|)
        nu: Varianza del rumore
        tau: Varianza delle ampiezze
        a_hats: Steering attesi delle L componenti (L x M)
        t: Passo temporale
        n_iter: Iterazioni eseguite
        flags: Diagnostica (clamp, jitter, ...)
    """
    beliefs: List[ComponentBelief]
    s_hat: np.ndarray
    w_hat: np.ndarray
    c_hat: np.ndarray
    nu: float
    tau: float
    a_hats: Optional[np.ndarray] = None
    t: int = 1
    n_iter: int = 0
    flags: Set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        self.s_hat = np.asarray(self.s_hat, dtype=int)
        self.w_hat = np.asarray(self.w_hat, dtype=complex)
        self.c_hat = np.asarray(self.c_hat, dtype=complex).reshape(len(self.w_hat), len(self.w_hat))
        if len(self.s_hat) != len(self.beliefs):
            raise ValueError('s_hat length must equal the number of beliefs')
        n_active = int(self.s_hat.sum())
        if len(self.w_hat) != n_active:
            raise ValueError(f'w_hat has {len(self.w_hat)} entries for {n_active} active components')
        if not (self.nu > 0.0 and self.tau > 0.0):
            raise ValueError(f'nu and tau must be positive, got nu={self.nu}, tau={self.tau}')

    @property
    def active(self) -> np.ndarray:
        """Indici delle componenti attive (ordinati)."""
        return np.flatnonzero(self.s_hat)


@dataclass(frozen=True)
class EstimatorConfig:
    """
    Parametri dello stimatore.

    Attributi:
        l_components: Numero L di componenti potenziali
        p_act: Probabilita' di attivazione p^a
        p_deact: Probabilita' di disattivazione p^d
        kappa_r: Concentrazione del random walk di transizione
        prune_d: Componenti D mantenute nel prodotto di misture
        rho0: Probabilita' di attivazione iniziale
        max_iter: Iterazioni massime per passo
        theta_tol: Tolleranza sulla variazione delle medie [rad]
        snr_init_db: SNR assunto per inizializzare il rumore [dB]
    """
    l_components: int = 15
    p_act: float = 0.10
    p_deact: float = 0.25
    kappa_r: float = 148.0
    prune_d: int = 4
    rho0: float = 0.5
    max_iter: int = 200
    theta_tol: float = 1e-6
    snr_init_db: float = 20.0

    def __post_init__(self) -> None:
        for name in ('p_act', 'p_deact', 'rho0'):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f'{name} must lie in (0, 1), got {value}')
        if self.kappa_r <= 0.0:
            raise ValueError(f'kappa_r must be > 0, got {self.kappa_r}')
        if int(self.l_components) != self.l_components or self.l_components < 1:
            raise ValueError(f'l_components must be an integer >= 1, got {self.l_components}')
        if self.prune_d < 1:
            raise ValueError(f'prune_d must be >= 1, got {self.prune_d}')
        if self.max_iter < 1:
            raise ValueError(f'max_iter must be >= 1, got {self.max_iter}')
        if self.theta_tol <= 0.0:
            raise ValueError(f'theta_tol must be > 0, got {self.theta_tol}')
