"""
Motore variazionale VALSE per un singolo passo temporale.

Dato uno snapshot y e le credenze iniziali sulle L componenti, il motore
itera fino a convergenza:
1. Steering attesi a_hat_l dalle credenze VM correnti
2. Matrice J e vettore h (gram)
3. Ricerca greedy del supporto s che massimizza l'obiettivo O(s)
4. Posteriori gaussiana dei pesi sul supporto attivo (w_hat, C_hat)
5. Stima dei parametri nu (rumore) e tau (varianza ampiezze)
6. Aggiornamento delle credenze VM delle componenti attive

Le protezioni numeriche non sollevano eccezioni: applicano un clamp e
registrano una stringa nel set di diagnostica `flags`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from circular import (
    VmMixture,
    VonMises,
    circular_mean,
    collapse_or_uniform,
    factors_from_eta,
    product_reduce,
    wrap_angle,
)
from model import ArrayGeometry, ComponentBelief, EstimatorConfig, PosteriorState, Snapshot, expected_steering

logger = logging.getLogger(__name__)

RHO_CLIP = 1e-12       # rho viene limitato a [RHO_CLIP, 1 - RHO_CLIP]
JITTER = 1e-10         # Jitter diagonale relativo a nu
IMPROVE_TOL = 1e-10    # Miglioramento minimo di O(s) per accettare un flip
TAU_CLAMP = 1e-3       # tau0 <= 0 -> tau0 = nu0 * TAU_CLAMP
NU_FLOOR_REL = 1e-12   # nu >= NU_FLOOR_REL * ||y||^2 / M
NU_FLOOR_ABS = 1e-30
DRIFT_TOL = 1e-2       # Spostamento delle medie in unita' di deviazione standard a posteriori


@dataclass
class GramSummary:
    """
    Statistiche sufficienti per la posteriori dei pesi.

    Attributi:
        j: Matrice L x L con j[l, l'] = a_l^H a_l' fuori diagonale e M sulla diagonale
        h: Vettore con h[l] = a_l^H y
    """
    j: np.ndarray
    h: np.ndarray


def _vector(y) -> np.ndarray:
    return y.y if isinstance(y, Snapshot) else np.asarray(y, dtype=complex)


def _flag(flags: Optional[Set[str]], name: str, message: str) -> None:
    if flags is not None:
        flags.add(name)
    logger.debug(message)


def noise_floor(energy: float, m_sensors: int) -> float:
    """Valore minimo ammesso per nu."""
    return max(NU_FLOOR_REL * energy / m_sensors, NU_FLOOR_ABS)


# ==================== STATISTICHE E OBIETTIVO ====================

def gram(a_hats, y) -> GramSummary:
    """
    Calcola J e h dagli steering attesi.

    Args:
        a_hats: Steering attesi (L x M oppure lista di vettori di lunghezza M)
        y: Snapshot o vettore delle misure

    Returns:
        GramSummary con J hermitiana (diagonale = M) e h
    """
    y = _vector(y)
    m = len(y)
    a = np.asarray(a_hats, dtype=complex)
    if a.size == 0:
        a = a.reshape(0, m)
    if a.ndim != 2 or a.shape[1] != m:
        raise ValueError(f'expected steering vectors of length {m}, got shape {a.shape}')
    j = a.conj() @ a.T
    np.fill_diagonal(j, m)
    return GramSummary(j=j, h=a.conj() @ y)


def _factor(j_s: np.ndarray, nu: float, tau: float, flags: Optional[Set[str]]):
    """Cholesky di J_S + (nu/tau) I, con jitter crescente se non definita positiva."""
    n = len(j_s)
    p = j_s + (nu / tau) * np.eye(n)
    try:
        return cho_factor(p, lower=True)
    except LinAlgError:
        pass
    # Dal secondo tentativo il jitter e' almeno relativo alla diagonale
    scale = float(np.max(np.abs(np.diag(p))))
    jitter = JITTER * nu
    for _ in range(8):
        _flag(flags, 'jitter', f'J_S + (nu/tau) I not positive definite, jitter {jitter:.3g}')
        try:
            return cho_factor(p + jitter * np.eye(n), lower=True)
        except LinAlgError:
            jitter = max(100.0 * jitter, JITTER * scale)
    raise LinAlgError('weight posterior system is singular even after regularization')


def _log_det(cf) -> float:
    return float(2.0 * np.sum(np.log(np.abs(np.diag(cf[0])))))


def support_objective(
    s,                                  # Vettore binario di attivazione (lunghezza L)
    g: GramSummary,                     # Statistiche J, h
    nu: float,                          # Varianza del rumore
    tau: float,                         # Varianza delle ampiezze
    rhos,                               # Probabilita' di attivazione (lunghezza L)
    flags: Optional[Set[str]] = None,   # Diagnostica
) -> float:
    """
    Obiettivo O(s) della ricerca del supporto (termini indipendenti da s omessi).

    O(s) = |S| ln(nu) - ln det(J_S + nu/tau I) - |S| ln(tau)
           + Re(h_S^H w_S)/nu + sum_{l in S} ln(rho_l / (1 - rho_l))

    dove |S| ln(nu) - ln det(J_S + nu/tau I) = ln det(C_S).
    L'insieme vuoto vale 0.
    """
    idx = np.flatnonzero(s)
    n = len(idx)
    if n == 0:
        return 0.0
    rho = np.clip(np.asarray(rhos, dtype=float)[idx], RHO_CLIP, 1.0 - RHO_CLIP)
    cf = _factor(g.j[np.ix_(idx, idx)], nu, tau, flags)
    h_s = g.h[idx]
    w_s = cho_solve(cf, h_s)
    return float(
        n * np.log(nu) - _log_det(cf) - n * np.log(tau)
        + np.real(np.vdot(h_s, w_s)) / nu
        + np.sum(np.log(rho / (1.0 - rho)))
    )


def greedy_support(
    s_start,
    g: GramSummary,
    nu: float,
    tau: float,
    rhos,
    trace: Optional[List[float]] = None,
    flags: Optional[Set[str]] = None,
) -> np.ndarray:
    """
    Ricerca greedy del supporto.

    Ad ogni passo valuta tutti i flip di un singolo elemento e applica quello
    con il miglioramento maggiore (a parita', l'indice minore). Si ferma
    quando nessun flip migliora O di almeno IMPROVE_TOL.

    Args:
        s_start: Supporto di partenza
        g, nu, tau, rhos: come in support_objective
        trace: Lista opzionale che riceve O dopo ogni flip (primo valore = partenza)
        flags: Diagnostica

    Returns:
        Supporto finale (array di interi 0/1)
    """
    s = np.asarray(s_start, dtype=int).copy()
    current = support_objective(s, g, nu, tau, rhos, flags)
    if trace is not None:
        trace.append(current)

    while True:
        best_l, best_value = -1, current + IMPROVE_TOL
        for l in range(len(s)):
            s[l] ^= 1
            value = support_objective(s, g, nu, tau, rhos, flags)
            s[l] ^= 1
            if value > best_value:
                best_l, best_value = l, value
        if best_l < 0:
            break
        s[best_l] ^= 1
        current = best_value
        if trace is not None:
            trace.append(current)
    return s


def weight_posterior(s_hat, g: GramSummary, nu: float, tau: float,
                     flags: Optional[Set[str]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Posteriori gaussiana dei pesi sul supporto attivo.

    C_S = nu (J_S + nu/tau I)^{-1},  w_S = C_S h_S / nu

    Returns:
        (w_hat, c_hat); vettore e matrice vuoti se il supporto e' vuoto
    """
    idx = np.flatnonzero(s_hat)
    n = len(idx)
    if n == 0:
        return np.zeros(0, dtype=complex), np.zeros((0, 0), dtype=complex)
    cf = _factor(g.j[np.ix_(idx, idx)], nu, tau, flags)
    c_hat = nu * cho_solve(cf, np.eye(n, dtype=complex))
    c_hat = 0.5 * (c_hat + c_hat.conj().T)
    w_hat = cho_solve(cf, g.h[idx])
    return w_hat, c_hat


def estimate_hyper(y, state: PosteriorState, a_hats,
                   flags: Optional[Set[str]] = None) -> Tuple[float, float]:
    """
    Stima di nu e tau dato lo stato corrente.

    nu  = ( ||y - A_S w_S||^2 + tr(J_S C_S) + sum_l |w_l|^2 (M - ||a_l||^2) ) / M
    tau = ( w_S^H w_S + tr(C_S) ) / |S|

    Con supporto vuoto: nu = ||y||^2 / M e tau invariato.
    nu viene limitato inferiormente da noise_floor (flag 'nu_clamped').
    """
    y = _vector(y)
    m = len(y)
    energy = float(np.real(np.vdot(y, y)))
    idx = state.active

    if len(idx) == 0:
        nu, tau = energy / m, state.tau
    else:
        a = np.asarray(a_hats, dtype=complex)[idx]
        w, c = state.w_hat, state.c_hat
        resid = y - a.T @ w
        j_s = a.conj() @ a.T
        np.fill_diagonal(j_s, m)
        norms = np.sum(np.abs(a) ** 2, axis=1)
        nu = (
            float(np.real(np.vdot(resid, resid)))
            + float(np.real(np.trace(j_s @ c)))
            + float(np.sum(np.abs(w) ** 2 * (m - norms)))
        ) / m
        tau = float(np.real(np.vdot(w, w)) + np.real(np.trace(c))) / len(idx)
        if not tau > 0.0:
            tau = state.tau

    floor = noise_floor(energy, m)
    if not nu > floor:
        _flag(flags, 'nu_clamped', f'noise variance {nu:.3g} clamped to {floor:.3g}')
        nu = floor
    return nu, tau


# ==================== CREDENZE SULLE COMPONENTI ====================

def update_theta(
    l: int,                                # Indice della componente (deve essere attiva)
    y,                                     # Snapshot o vettore delle misure
    state: PosteriorState,                 # Stato corrente (w_hat, c_hat, nu, a_hats)
    prior_eta: Optional[complex] = None,   # Parametro naturale del VM a priori
    prune_d: int = 4,                      # Componenti D mantenute nel prodotto
) -> VonMises:
    """
    Aggiorna la credenza VM della componente l.

    Il vettore eta_l vale (2/nu) [ r_l w_l^* - sum_{k != l} C[k, l] a_k ] con
    r_l = y - sum_{k in S, k != l} w_k a_k. Il suo elemento m definisce il
    fattore avvolto f_VM(m theta; eta_l[m]); il prodotto con il prior viene
    ridotto a D componenti e collassato in un singolo VM.

    Gli steering a_k sono letti da state.a_hats: chi aggiorna in sequenza
    deve scrivere in place i nuovi a_hat cosi' che le componenti successive
    li vedano gia' aggiornati.
    """
    y = _vector(y)
    active = list(state.active)
    if l not in active:
        raise ValueError(f'component {l} is not in the active set {active}')
    pos = active.index(l)
    a = np.asarray(state.a_hats, dtype=complex)

    resid = y.copy()
    corr = np.zeros(len(y), dtype=complex)
    for k_pos, k in enumerate(active):
        if k == l:
            continue
        resid -= state.w_hat[k_pos] * a[k]
        corr += state.c_hat[k_pos, pos] * a[k]
    eta = (2.0 / state.nu) * (resid * np.conj(state.w_hat[pos]) - corr)

    prior = None
    if prior_eta is not None and prior_eta != 0:
        prior = VonMises.from_eta(prior_eta)
    return collapse_or_uniform(product_reduce(prior, factors_from_eta(eta), prune_d))


def _belief_from_residual(z: np.ndarray, nu: float, prune_d: int) -> VonMises:
    """
    VM iniziale da un residuo z tramite le medie dei prodotti ritardati.

    gamma_m = (1/M) sum_{i - j = m} z_i z_j^*,  eta_m = (2/nu) gamma_m
    """
    m_sensors = len(z)
    gamma = np.array([np.vdot(z[:m_sensors - m], z[m:]) for m in range(m_sensors)]) / m_sensors
    mix = product_reduce(None, factors_from_eta((2.0 / nu) * gamma), prune_d)
    return collapse_or_uniform(mix)


def initial_hyper(y, cfg: EstimatorConfig, flags: Optional[Set[str]] = None) -> Tuple[float, float]:
    """
    Valori iniziali di nu e tau.

    nu0 assume un rapporto misura/rumore di snr_init_db; tau0 segue da
    ||y||^2 / M = rho L tau + nu. Se tau0 <= 0 viene posto a nu0 * 1e-3
    (flag 'tau_clamped').
    """
    y = _vector(y)
    m = len(y)
    energy = float(np.real(np.vdot(y, y)))
    nu0 = energy / (m * 10.0 ** (cfg.snr_init_db / 10.0))
    floor = noise_floor(energy, m)
    if nu0 < floor:
        _flag(flags, 'nu_clamped', f'initial noise variance clamped to {floor:.3g}')
        nu0 = floor
    tau0 = (energy / m - nu0) / (cfg.rho0 * cfg.l_components)
    if tau0 <= 0.0:
        _flag(flags, 'tau_clamped', f'initial tau {tau0:.3g} <= 0, clamped to nu0 * {TAU_CLAMP}')
        tau0 = nu0 * TAU_CLAMP
    return nu0, tau0


def residual_beliefs(
    y,
    nu: float,
    tau: float,
    n_new: int,
    prune_d: int,
    base_a_hats: Sequence[np.ndarray] = (),
    flags: Optional[Set[str]] = None,
) -> Tuple[List[VonMises], List[np.ndarray]]:
    """
    Inizializzazione sequenziale di n_new componenti dai residui.

    Per ogni nuova componente si stimano i pesi di tutte quelle gia' presenti
    (base_a_hats piu' le nuove) con J e h, si calcola il residuo
    z = y - sum w_k a_k e se ne ricava il VM.

    Returns:
        (VM delle nuove componenti, steering attesi di base + nuove)
    """
    y = _vector(y)
    m = len(y)
    a_list = [np.asarray(a, dtype=complex) for a in base_a_hats]
    thetas: List[VonMises] = []
    for _ in range(n_new):
        z = y
        if a_list:
            g = gram(a_list, y)
            w = cho_solve(_factor(g.j, nu, tau, flags), g.h)
            z = y - np.asarray(a_list).T @ w
        vm = _belief_from_residual(z, nu, prune_d)
        thetas.append(vm)
        a_list.append(expected_steering(vm, m))
    return thetas, a_list


def init_beliefs(
    y: Snapshot,
    geom: ArrayGeometry,
    cfg: EstimatorConfig,
    flags: Optional[Set[str]] = None,
) -> Tuple[List[ComponentBelief], float, float, np.ndarray]:
    """
    Inizializzazione completa al primo passo (nessuna informazione a priori).

    Returns:
        (credenze con rho = rho0, nu0, tau0, steering attesi L x M)
    """
    vec = _vector(y)
    if len(vec) != geom.m_sensors:
        raise ValueError(f'snapshot has {len(vec)} sensors, geometry expects {geom.m_sensors}')
    nu0, tau0 = initial_hyper(vec, cfg, flags)
    thetas, a_list = residual_beliefs(vec, nu0, tau0, cfg.l_components, cfg.prune_d, (), flags)
    beliefs = [ComponentBelief(theta=th, active_prob=cfg.rho0) for th in thetas]
    return beliefs, nu0, tau0, np.array(a_list)


# ==================== CICLO DI AGGIORNAMENTO ====================

def run_update(
    y,                                                   # Snapshot o vettore delle misure
    predicted_beliefs: Sequence[ComponentBelief],        # Credenze iniziali (L)
    rhos,                                                # Probabilita' di attivazione (L)
    cfg: EstimatorConfig,                                # Parametri dello stimatore
    prior_etas: Optional[Sequence[Optional[complex]]] = None,  # Prior VM per componente
    s_start=None,                                        # Supporto iniziale (default: vuoto)
    nu0: Optional[float] = None,                         # nu iniziale (default: initial_hyper)
    tau0: Optional[float] = None,                        # tau iniziale (default: initial_hyper)
    t: int = 1,                                          # Passo temporale
    flags: Optional[Set[str]] = None,                    # Diagnostica condivisa
) -> PosteriorState:
    """
    Ciclo variazionale di un passo temporale.

    Ogni iterazione esegue greedy_support, weight_posterior, estimate_hyper e
    update_theta per tutte le componenti attive. Si ferma quando il supporto
    non cambia e le medie sono ferme, oppure dopo max_iter iterazioni.
    Le medie sono ferme se la variazione massima e' sotto theta_tol oppure
    se ogni media si e' spostata meno di DRIFT_TOL deviazioni standard
    (1/sqrt(kappa)) della sua credenza aggiornata.

    Returns:
        PosteriorState finale (pesi ricalcolati sulle credenze finali)
    """
    vec = _vector(y)
    m = len(vec)
    n_comp = len(predicted_beliefs)
    flags = set() if flags is None else flags
    rhos = np.asarray(rhos, dtype=float)
    if len(rhos) != n_comp:
        raise ValueError(f'{len(rhos)} activation probabilities for {n_comp} components')
    if prior_etas is None:
        prior_etas = [None] * n_comp

    if nu0 is None or tau0 is None:
        nu, tau = initial_hyper(vec, cfg, flags)
    else:
        nu, tau = float(nu0), float(tau0)

    thetas = [b.theta for b in predicted_beliefs]
    a_hats = np.array([expected_steering(th, m) for th in thetas])
    s = np.zeros(n_comp, dtype=int) if s_start is None else np.asarray(s_start, dtype=int).copy()
    history = np.zeros(n_comp, dtype=bool)

    n_iter = 0
    for n_iter in range(1, cfg.max_iter + 1):
        g = gram(a_hats, vec)
        s_new = greedy_support(s, g, nu, tau, rhos, flags=flags)
        w_hat, c_hat = weight_posterior(s_new, g, nu, tau, flags)
        history |= s_new.astype(bool)

        state = PosteriorState(
            beliefs=list(predicted_beliefs), s_hat=s_new, w_hat=w_hat, c_hat=c_hat,
            nu=nu, tau=tau, a_hats=a_hats, t=t, flags=flags,
        )
        nu, tau = estimate_hyper(vec, state, a_hats, flags)
        state.nu, state.tau = nu, tau

        shift = drift = 0.0
        for l in state.active:
            new = update_theta(int(l), vec, state, prior_etas[l], cfg.prune_d)
            delta = abs(wrap_angle(new.mu - thetas[l].mu))
            shift = max(shift, delta)
            drift = max(drift, delta * np.sqrt(new.kappa))
            thetas[l] = new
            a_hats[l] = expected_steering(new, m)  # state.a_hats e' lo stesso array

        converged = np.array_equal(s_new, s) and (shift < cfg.theta_tol or drift < DRIFT_TOL)
        s = s_new
        if converged:
            break

    g = gram(a_hats, vec)
    w_hat, c_hat = weight_posterior(s, g, nu, tau, flags)
    beliefs = [
        ComponentBelief(theta=thetas[l], active_prob=float(rhos[l]), was_active_any_iter=bool(history[l]))
        for l in range(n_comp)
    ]
    logger.debug('t=%d: %d iterations, |S|=%d, nu=%.3g, tau=%.3g', t, n_iter, int(s.sum()), nu, tau)
    return PosteriorState(
        beliefs=beliefs, s_hat=s, w_hat=w_hat, c_hat=c_hat, nu=nu, tau=tau,
        a_hats=a_hats.copy(), t=t, n_iter=n_iter, flags=flags,
    )


def mmse_angle(belief: VonMises | VmMixture) -> float:
    """
    Stima MMSE dello pseudo angolo: argomento di E[exp(j theta)].

    Per un VM coincide con la direzione media mu; per una mistura e' la
    media circolare.

    Raises:
        ValueError: se la direzione e' indefinita (kappa = 0 o risultante nulla)
    """
    if isinstance(belief, VmMixture):
        return circular_mean(belief)
    if belief.kappa <= 0.0:
        raise ValueError('MMSE angle is undefined for a uniform belief (kappa = 0)')
    return belief.mu
