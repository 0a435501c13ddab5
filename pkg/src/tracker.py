"""
Livello sequenziale: predizione Bernoulli-von Mises e passo SVALSE.

Ad ogni passo temporale t > 1:
1. Le componenti attive al passo precedente (a fine iterazioni oppure in
   almeno un'iterazione) vengono propagate: la loro credenza VM perde
   concentrazione secondo il random walk di transizione e la probabilita'
   di attivazione segue la catena di Markov (p^a, p^d)
2. Gli slot rimanenti vengono reinizializzati dai residui dello snapshot
   corrente
3. Il motore variazionale (valse.run_update) usa le credenze propagate sia
   come punto di partenza sia come prior

Con transfer disabilitato (sequential=False) ogni passo e' una stima VALSE
indipendente.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np

from circular import VonMises
from model import (
    ArrayGeometry,
    ComponentBelief,
    EstimatorConfig,
    PosteriorState,
    Snapshot,
    expected_steering,
    pa_to_doa,
)
from valse import init_beliefs, initial_hyper, mmse_angle, residual_beliefs, run_update

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransitionModel:
    """
    Modello di transizione tra passi temporali.

    Attributi:
        kappa_r: Concentrazione del random walk sugli pseudo angoli
        p_act: Probabilita' che una componente inattiva si attivi (p^a)
        p_deact: Probabilita' che una componente attiva si disattivi (p^d)
    """
    kappa_r: float
    p_act: float
    p_deact: float

    def __post_init__(self) -> None:
        if self.kappa_r <= 0.0:
            raise ValueError(f'kappa_r must be > 0, got {self.kappa_r}')
        for name in ('p_act', 'p_deact'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f'{name} must lie in [0, 1], got {value}')

    @classmethod
    def from_config(cls, cfg: EstimatorConfig) -> 'TransitionModel':
        return cls(kappa_r=cfg.kappa_r, p_act=cfg.p_act, p_deact=cfg.p_deact)


@dataclass(frozen=True)
class TrackRecord:
    """Riga di output per una componente attiva al passo t."""
    t: int
    component_id: int
    doa_deg: float
    pa_rad: float
    kappa: float
    weight: complex
    active: bool = True


@dataclass
class TransferResult:
    """
    Informazione trasferita dal passo t-1 al passo t.

    Attributi:
        beliefs: L credenze iniziali (propagate negli indici piu' bassi)
        rhos: Probabilita' di attivazione predette
        a_hats: Steering attesi (L x M)
        prior_etas: Prior VM per componente (None per quelle reinizializzate)
        n_propagated: Numero di componenti propagate
    """
    beliefs: List[ComponentBelief]
    rhos: np.ndarray
    a_hats: np.ndarray
    prior_etas: List[Optional[complex]]
    n_propagated: int

    @property
    def s_start(self) -> np.ndarray:
        """Supporto di partenza: attive le sole componenti propagate."""
        s = np.zeros(len(self.beliefs), dtype=int)
        s[:self.n_propagated] = 1
        return s


# ==================== PREDIZIONE ====================

def predict_theta(prev: VonMises, tm: TransitionModel) -> VonMises:
    """
    Predizione della credenza VM attraverso il random walk.

    La media resta invariata; la concentrazione diventa
    kappa' = (1/kappa_r + 1/kappa)^{-1}.
    """
    if prev.kappa <= 0.0:
        raise ValueError('cannot predict a uniform belief (kappa = 0)')
    return VonMises(mu=prev.mu, kappa=1.0 / (1.0 / tm.kappa_r + 1.0 / prev.kappa))


def predict_activation(s_prev: int | bool, tm: TransitionModel) -> float:
    """Probabilita' predetta di attivazione: 1 - p^d se attiva prima, altrimenti p^a."""
    return 1.0 - tm.p_deact if s_prev else tm.p_act


def transfer(
    state_prev: PosteriorState,
    y_next: Snapshot,
    geom: ArrayGeometry,
    cfg: EstimatorConfig,
    flags: Optional[Set[str]] = None,
) -> TransferResult:
    """
    Costruisce le credenze iniziali del passo t dallo stato del passo t-1.

    Args:
        state_prev: Stato finale del passo precedente
        y_next: Snapshot del passo corrente
        geom: Geometria dell'array
        cfg: Parametri dello stimatore
        flags: Diagnostica

    Returns:
        TransferResult con esattamente L componenti
    """
    tm = TransitionModel.from_config(cfg)
    n_comp = cfg.l_components
    m = geom.m_sensors

    beliefs: List[ComponentBelief] = []
    prior_etas: List[Optional[complex]] = []
    rhos: List[float] = []
    for l, belief in enumerate(state_prev.beliefs[:n_comp]):
        was_active = bool(state_prev.s_hat[l])
        if not (was_active or belief.was_active_any_iter) or belief.theta.kappa <= 0.0:
            continue
        predicted = predict_theta(belief.theta, tm)
        rho = predict_activation(was_active, tm)
        beliefs.append(ComponentBelief(theta=predicted, active_prob=rho))
        prior_etas.append(predicted.eta)
        rhos.append(rho)
    n_prop = len(beliefs)

    base = [expected_steering(b.theta, m) for b in beliefs]
    nu0, tau0 = initial_hyper(y_next, cfg, flags)
    thetas, a_list = residual_beliefs(y_next, nu0, tau0, n_comp - n_prop, cfg.prune_d, base, flags)
    for th in thetas:
        beliefs.append(ComponentBelief(theta=th, active_prob=tm.p_act))
        prior_etas.append(None)
        rhos.append(tm.p_act)

    logger.debug('transfer to t=%d: %d propagated, %d re-initialized', y_next.t, n_prop, len(thetas))
    return TransferResult(
        beliefs=beliefs,
        rhos=np.array(rhos),
        a_hats=np.array(a_list),
        prior_etas=prior_etas,
        n_propagated=n_prop,
    )


# ==================== PASSO SVALSE ====================

def _records(state: PosteriorState, geom: ArrayGeometry) -> List[TrackRecord]:
    """Una TrackRecord per ogni componente attiva."""
    out = []
    for pos, l in enumerate(state.active):
        theta = state.beliefs[l].theta
        try:
            pa = mmse_angle(theta)
        except ValueError:
            state.flags.add('undefined_direction')
            logger.warning('t=%d component %d active with uniform belief, skipped', state.t, l)
            continue
        try:
            doa = pa_to_doa(geom, pa)
        except ValueError:
            # Pseudo angolo nella regione invisibile: si satura a +-90 gradi
            state.flags.add('invisible_region')
            logger.warning('t=%d component %d pseudo angle %.4f outside visible region', state.t, l, pa)
            doa = -90.0 * float(np.sign(pa))
        out.append(TrackRecord(
            t=state.t,
            component_id=int(l),
            doa_deg=float(doa),
            pa_rad=float(pa),
            kappa=float(theta.kappa),
            weight=complex(state.w_hat[pos]),
        ))
    return out


def svalse_step(
    state_prev: Optional[PosteriorState],
    y: Snapshot,
    geom: ArrayGeometry,
    cfg: EstimatorConfig,
) -> Tuple[PosteriorState, List[TrackRecord]]:
    """
    Un passo SVALSE.

    Senza stato precedente e' una stima VALSE pura con rho = rho0; altrimenti
    le credenze vengono trasferite dal passo precedente e usate come prior.

    Returns:
        (stato a posteriori, record delle componenti attive)
    """
    if y.m_sensors != geom.m_sensors:
        raise ValueError(f'snapshot t={y.t} has {y.m_sensors} sensors, geometry expects {geom.m_sensors}')
    flags: Set[str] = set()

    if state_prev is None:
        beliefs, nu0, tau0, _ = init_beliefs(y, geom, cfg, flags)
        state = run_update(
            y, beliefs, [cfg.rho0] * cfg.l_components, cfg,
            nu0=nu0, tau0=tau0, t=y.t, flags=flags,
        )
    else:
        tr = transfer(state_prev, y, geom, cfg, flags)
        state = run_update(
            y, tr.beliefs, tr.rhos, cfg,
            prior_etas=tr.prior_etas, s_start=tr.s_start, t=y.t, flags=flags,
        )
    if flags:
        logger.debug('t=%d diagnostics: %s', y.t, ', '.join(sorted(flags)))
    return state, _records(state, geom)


def run_sequence(
    snapshots: Sequence[Snapshot],
    geom: ArrayGeometry,
    cfg: EstimatorConfig,
    sequential: bool = True,
) -> List[TrackRecord]:
    """
    Esegue svalse_step su tutta la sequenza di snapshot.

    Args:
        snapshots: Snapshot ordinati nel tempo
        geom: Geometria dell'array
        cfg: Parametri dello stimatore
        sequential: False per la stima VALSE indipendente a ogni passo

    Returns:
        Record ordinati per (t, component_id)
    """
    if not snapshots:
        raise ValueError('run_sequence needs at least one snapshot')
    for snap in snapshots:
        if snap.m_sensors != geom.m_sensors:
            raise ValueError(f'snapshot t={snap.t} has {snap.m_sensors} sensors, expected {geom.m_sensors}')

    records: List[TrackRecord] = []
    state: Optional[PosteriorState] = None
    for snap in snapshots:
        state, step_records = svalse_step(state if sequential else None, snap, geom, cfg)
        records.extend(step_records)
    return sorted(records, key=lambda r: (r.t, r.component_id))
