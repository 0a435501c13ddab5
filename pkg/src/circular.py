"""
Numerica circolare di von Mises per la stima DOA senza griglia.

Questo modulo contiene tutto il calcolo sulle distribuzioni di von Mises (VM)
necessario al motore variazionale:
1. Algebra dei parametri naturali (prodotto di due VM = somma dei parametri)
2. Funzione caratteristica e rapporti di Bessel I_m(k)/I_0(k)
3. Inversione del rapporto di Bessel (ricerca della concentrazione equivalente)
4. Approssimazione di un fattore "avvolto" f_VM(m*theta) con una mistura di m VM
5. Prodotto di fattori con potatura (prune) alle D componenti piu' pesanti
6. Collasso di una mistura in un singolo VM per moment matching

Convenzioni:
- Angoli in radianti nell'intervallo [-pi, pi)
- Parametro naturale eta = kappa * exp(j*mu)
- kappa = 0 indica la densita' uniforme sul cerchio
- kappa viene limitato a KAPPA_CAP (massa puntiforme oltre il limite)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, ive  # ive(v, x) = iv(v, x) * exp(-|x|)

logger = logging.getLogger(__name__)

KAPPA_CAP = 1e7            # Concentrazione massima (oltre: massa puntiforme)
INVERT_RTOL = 1e-11        # Tolleranza relativa dell'inversione su kappa
NEWTON_STEPS = 40          # Massimo numero di passi di Newton
_GUESS_SPREAD = 1.05       # Bracket iniziale [guess / s, guess * s]
_EXPAND_FACTOR = 4.0
_EXPAND_STEPS = 30
_KAPPA_MIN = 1e-300
_WEIGHT_TOL = 1e-12        # Tolleranza sulla somma dei pesi di una mistura


def wrap_angle(x):
    """
    Riporta uno o piu' angoli nell'intervallo [-pi, pi).

    Args:
        x: Angolo scalare o array di angoli [rad]

    Returns:
        Angolo/i equivalenti in [-pi, pi) (float se l'ingresso e' scalare)
    """
    wrapped = np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


# ==================== TIPI ====================

@dataclass(frozen=True)
class VonMises:
    """
    Densita' di von Mises sul cerchio.

    Attributi:
        mu: Direzione media [rad], normalizzata in [-pi, pi)
        kappa: Concentrazione (>= 0); kappa = 0 indica la densita' uniforme
    """
    mu: float
    kappa: float

    def __post_init__(self) -> None:
        kappa = float(self.kappa)
        if not np.isfinite(kappa) or kappa < 0.0:
            raise ValueError(f'kappa must be finite and >= 0, got {self.kappa}')
        object.__setattr__(self, 'kappa', min(kappa, KAPPA_CAP))
        object.__setattr__(self, 'mu', wrap_angle(float(self.mu)))

    @property
    def eta(self) -> complex:
        """Parametro naturale kappa * exp(j*mu)."""
        return complex(self.kappa * np.exp(1j * self.mu))

    @classmethod
    def from_eta(cls, eta: complex) -> 'VonMises':
        """Costruisce il VM dal parametro naturale (uniforme se eta = 0)."""
        kappa = float(abs(eta))
        if kappa == 0.0:
            return cls(mu=0.0, kappa=0.0)
        return cls(mu=float(np.angle(eta)), kappa=kappa)


@dataclass(frozen=True)
class WrappedFactor:
    """
    Fattore f_VM(m*theta; eta) avvolto m volte sul cerchio.

    Attributi:
        order: Ordine m >= 1 (il fattore con m = 0 e' una costante)
        eta: Parametro naturale complesso del fattore nel dominio m*theta
    """
    order: int
    eta: complex

    def __post_init__(self) -> None:
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f'wrapped factor order must be an integer >= 1, got {self.order}')
        object.__setattr__(self, 'order', int(self.order))
        object.__setattr__(self, 'eta', complex(self.eta))


@dataclass(frozen=True)
class VmMixture:
    """
    Mistura finita di densita' di von Mises.

    Attributi:
        components: Tupla ordinata di coppie (peso, VonMises); pesi >= 0 con somma 1
    """
    components: Tuple[Tuple[float, VonMises], ...]

    def __post_init__(self) -> None:
        comps = tuple((float(w), vm) for w, vm in self.components)
        if not comps:
            raise ValueError('mixture must contain at least one component')
        weights = np.array([w for w, _ in comps])
        if np.any(weights < 0.0):
            raise ValueError('mixture weights must be nonnegative')
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f'mixture weights must sum to 1, got {weights.sum():.15g}')
        object.__setattr__(self, 'components', comps)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    @property
    def mus(self) -> np.ndarray:
        return np.array([vm.mu for _, vm in self.components])

    @property
    def kappas(self) -> np.ndarray:
        return np.array([vm.kappa for _, vm in self.components])

    def __len__(self) -> int:
        return len(self.components)


# ==================== RAPPORTI DI BESSEL ====================

def _ratio(orders, kappa) -> np.ndarray:
    """
    Rapporto I_m(k)/I_0(k) vettorizzato (broadcast tra ordini e concentrazioni).

    Usa le funzioni scalate ive: il fattore exp(-k) si semplifica nel rapporto,
    quindi non c'e' overflow fino a KAPPA_CAP.
    """
    orders = np.asarray(orders, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    orders, kappa = np.broadcast_arrays(orders, kappa)
    out = np.ones(orders.shape, dtype=float)

    finite = (kappa < KAPPA_CAP) & (orders > 0)
    zero = finite & (kappa == 0.0)
    inner = finite & ~zero
    out[zero] = 0.0
    if np.any(inner):
        out[inner] = ive(orders[inner], kappa[inner]) / ive(0, kappa[inner])
    return np.clip(out, 0.0, 1.0)


def bessel_ratio(m: int, kappa: float) -> float:
    """
    Rapporto I_m(kappa)/I_0(kappa) in [0, 1].

    Args:
        m: Ordine (>= 0)
        kappa: Concentrazione (>= 0, finita)

    Returns:
        Valore del rapporto; 1 per m = 0 oppure kappa >= KAPPA_CAP, 0 per kappa = 0
    """
    if m < 0:
        raise ValueError(f'Bessel order must be >= 0, got {m}')
    if not np.isfinite(kappa) or kappa < 0.0:
        raise ValueError(f'kappa must be finite and >= 0, got {kappa}')
    return float(_ratio(m, kappa))


def bessel_ratios(kappa: float, n: int) -> np.ndarray:
    """Rapporti I_m(kappa)/I_0(kappa) per m = 0..n-1."""
    return _ratio(np.arange(n), kappa)


def log_i0(x) -> np.ndarray:
    """log I_0(x) stabile per x grandi: log(ive(0, x)) + x."""
    x = np.abs(np.asarray(x, dtype=float))
    return np.log(ive(0, x)) + x


def _ratio_and_slope(orders: np.ndarray, kappa: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rapporto r_m = I_m(k)/I_0(k) e sua derivata in k.

    Da I_m' = I_{m-1} - (m/k) I_m e I_0' = I_1 segue
    r_m' = r_{m-1} - (m/k) r_m - r_m r_1.
    """
    i0 = ive(0, kappa)
    ratio = ive(orders, kappa) / i0
    slope = ive(orders - 1, kappa) / i0 - (orders / kappa) * ratio - ratio * (ive(1, kappa) / i0)
    return ratio, slope


def _initial_guess(orders: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """
    Punto di partenza per l'inversione (targets in (0, 1)).

    Per k grande r_m ~ 1 - m^2/(2k) + m^2 (m^2 - 2)/(8k^2): si risolve la
    quadratica in 1/k. Per k piccolo r_m ~ (k/2)^m / m!, quindi
    k ~ 2 (m! target)^(1/m).
    """
    delta = 1.0 - targets
    c1 = 0.5 * orders ** 2
    c2 = orders ** 2 * (orders ** 2 - 2.0) / 8.0
    disc = np.maximum(c1 ** 2 - 4.0 * c2 * delta, 0.0)
    with np.errstate(divide='ignore'):
        large = (c1 + np.sqrt(disc)) / (2.0 * delta)
    small = 2.0 * np.exp((gammaln(orders + 1.0) + np.log(targets)) / orders)
    guess = np.where(large >= orders ** 2, large, small)
    return np.clip(guess, _KAPPA_MIN, KAPPA_CAP)


def _invert_ratios(orders, targets) -> np.ndarray:
    """
    Inversione vettorizzata di I_m(k)/I_0(k) = target su piu' ordini.

    Il rapporto e' strettamente crescente in k. Si parte dalla stima
    asintotica, si allarga un bracket attorno ad essa finche' contiene la
    soluzione e si raffina con Newton; un passo che esce dal bracket viene
    sostituito dalla bisezione. Tolleranza relativa INVERT_RTOL.
    """
    orders = np.asarray(orders, dtype=float)
    targets = np.asarray(targets, dtype=float)
    orders, targets = np.broadcast_arrays(orders, targets)
    shape = orders.shape
    orders, targets = orders.ravel(), targets.ravel()
    out = np.zeros(orders.shape)
    solve = targets > 0.0
    if not np.any(solve):
        return out.reshape(shape)

    o, tg = orders[solve], targets[solve]
    kappa = _initial_guess(o, tg)
    lo = kappa / _GUESS_SPREAD
    hi = np.minimum(kappa * _GUESS_SPREAD, KAPPA_CAP)
    for _ in range(_EXPAND_STEPS):
        low_bad = _ratio(o, lo) > tg
        high_bad = (_ratio(o, hi) < tg) & (hi < KAPPA_CAP)
        if not np.any(low_bad | high_bad):
            break
        lo = np.where(low_bad, lo / _EXPAND_FACTOR, lo)
        hi = np.where(high_bad, np.minimum(hi * _EXPAND_FACTOR, KAPPA_CAP), hi)

    kappa = np.clip(kappa, lo, hi)
    done = np.zeros(kappa.shape, dtype=bool)
    for _ in range(NEWTON_STEPS):
        ratio, slope = _ratio_and_slope(o, kappa)
        f = ratio - tg
        lo = np.where(f < 0.0, kappa, lo)
        hi = np.where(f > 0.0, kappa, hi)
        with np.errstate(divide='ignore', invalid='ignore'):
            nxt = kappa - f / slope
        bisect = ~np.isfinite(nxt) | (slope <= 0.0) | (nxt < lo) | (nxt > hi)
        nxt = np.where(bisect, 0.5 * (lo + hi), nxt)
        settled = (f == 0.0) | (np.abs(nxt - kappa) <= INVERT_RTOL * kappa) | (hi - lo <= INVERT_RTOL * kappa)
        kappa = np.where(done, kappa, nxt)
        done |= settled
        if np.all(done):
            break

    out[solve] = kappa
    return out.reshape(shape)


def invert_ratio(m: int, target: float) -> float:
    """
    Concentrazione k tale che I_m(k)/I_0(k) = target.

    Args:
        m: Ordine (>= 1)
        target: Valore del rapporto in [0, 1)

    Returns:
        Concentrazione equivalente (0 per target = 0)
    """
    if m < 1:
        raise ValueError(f'invert_ratio needs order >= 1, got {m}')
    if not 0.0 <= target < 1.0:
        raise ValueError(f'Bessel ratio target must lie in [0, 1), got {target}')
    return float(_invert_ratios(m, target))


# ==================== OPERAZIONI SUI VM ====================

def vm_multiply(a: VonMises, b: VonMises) -> VonMises:
    """Prodotto (rinormalizzato) di due VM: i parametri naturali si sommano."""
    return VonMises.from_eta(a.eta + b.eta)


def vm_char(vm: VonMises, m: int) -> complex:
    """
    Funzione caratteristica E[exp(j*m*theta)] di un VM.

    Args:
        vm: Densita' di von Mises
        m: Ordine del momento (>= 0)

    Returns:
        (I_m(k)/I_0(k)) * exp(j*m*mu); 1 per m = 0
    """
    if m < 0:
        raise ValueError(f'characteristic function order must be >= 0, got {m}')
    if m == 0:
        return 1.0 + 0.0j
    return complex(bessel_ratio(m, vm.kappa) * np.exp(1j * m * vm.mu))


def _unwrap_params(orders: np.ndarray, etas: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Parametri della mistura equivalente per ciascun fattore avvolto.

    Returns:
        (kappa_tilde per fattore, lista delle m medie per fattore)
    """
    kappa_m = np.minimum(np.abs(etas), KAPPA_CAP)
    mu_m = np.angle(etas)

    kappa_tilde = np.zeros(len(orders))
    capped = kappa_m >= KAPPA_CAP
    plain = orders == 1
    kappa_tilde[capped] = KAPPA_CAP
    kappa_tilde[plain & ~capped] = kappa_m[plain & ~capped]

    # Per m > 1 si impone lo stesso primo momento nel dominio theta
    solve = ~capped & ~plain & (kappa_m > 0.0)
    if np.any(solve):
        targets = _ratio(1, kappa_m[solve])
        kappa_tilde[solve] = _invert_ratios(orders[solve], targets)

    means = []
    for m, mu in zip(orders.astype(int), mu_m):
        r = np.arange(m)
        means.append(wrap_angle((mu + 2.0 * np.pi * r) / m))
    return kappa_tilde, means


def unwrap_mixture(f: WrappedFactor) -> VmMixture:
    """
    Approssima f_VM(m*theta; eta) con una mistura di m VM equipesati.

    La concentrazione comune k~ risolve I_m(k~)/I_0(k~) = I_1(k_m)/I_0(k_m);
    le medie sono (mu_m + 2*pi*r)/m, r = 0..m-1, riportate in [-pi, pi).

    Args:
        f: Fattore avvolto di ordine m

    Returns:
        Mistura di m componenti con pesi 1/m
    """
    if f.order == 1:
        return VmMixture(((1.0, VonMises.from_eta(f.eta)),))
    kappa_tilde, means = _unwrap_params(np.array([f.order]), np.array([f.eta]))
    weight = 1.0 / f.order
    return VmMixture(tuple((weight, VonMises(mu, kappa_tilde[0])) for mu in means[0]))


def product_reduce(
    prior: Optional[VonMises],           # VM a priori (None -> eta_a = 0)
    factors: Sequence[WrappedFactor],    # Fattori avvolti in ordine crescente di m
    d_keep: int,                         # Numero D di componenti mantenute
) -> VmMixture:
    """
    Prodotto del prior con i fattori avvolti, con potatura alle D componenti migliori.

    Passi per ogni fattore:
    1. Lo si sostituisce con la sua mistura di m VM (unwrap_mixture)
    2. Si moltiplica ogni componente corrente per ogni componente del fattore
       (somma dei parametri naturali zeta)
    3. Il peso di ciascuna combinazione e' proporzionale a I_0(|zeta|)
    4. Si mantengono le D combinazioni di peso massimo

    Args:
        prior: VM a priori oppure None
        factors: Lista di WrappedFactor
        d_keep: Numero di componenti da mantenere dopo ogni prodotto (>= 1)

    Returns:
        Mistura con i pesi rinormalizzati, ordinata per peso decrescente
    """
    if d_keep < 1:
        raise ValueError(f'pruning count D must be >= 1, got {d_keep}')
    if prior is None and not factors:
        raise ValueError('product_reduce needs a prior or at least one factor')

    zetas = np.array([prior.eta if prior is not None else 0.0 + 0.0j])
    if factors:
        orders = np.array([f.order for f in factors])
        etas = np.array([f.eta for f in factors])
        kappa_tilde, means = _unwrap_params(orders, etas)

        for k_tilde, mu_r in zip(kappa_tilde, means):
            xi = k_tilde * np.exp(1j * mu_r)
            zetas = (zetas[:, None] + xi[None, :]).ravel()
            if len(zetas) > d_keep:
                # I_0 e' crescente: si ordina direttamente per |zeta|.
                # argsort stabile: a parita' di peso vince l'indice minore
                keep = np.argsort(-np.abs(zetas), kind='stable')[:d_keep]
                zetas = zetas[keep]

    log_w = log_i0(np.abs(zetas))
    order = np.argsort(-log_w, kind='stable')
    zetas, log_w = zetas[order], log_w[order]
    weights = np.exp(log_w - log_w.max())
    weights /= weights.sum()
    return VmMixture(tuple((w, VonMises.from_eta(z)) for w, z in zip(weights, zetas)))


def _resultant(mix: VmMixture) -> complex:
    """Primo momento circolare della mistura: sum_d w_d * r_1(k_d) * exp(j*mu_d)."""
    return complex(np.sum(mix.weights * _ratio(1, mix.kappas) * np.exp(1j * mix.mus)))


def circular_mean(mix: VmMixture) -> float:
    """
    Direzione media della mistura (argomento del primo momento circolare).

    Raises:
        ValueError: se il primo momento e' nullo (direzione indefinita)
    """
    res = _resultant(mix)
    if abs(res) == 0.0:
        raise ValueError('mixture has zero resultant, mean direction undefined')
    return wrap_angle(float(np.angle(res)))


def mixture_collapse(mix: VmMixture) -> VonMises:
    """
    Collassa una mistura di VM in un singolo VM per moment matching.

    Ogni componente e' trattata come una gaussiana di media mu_d e varianza
    1/kappa_d. Le medie vengono prima ruotate nel riferimento della media
    circolare della mistura (cosi' il taglio a +-pi non falsa i momenti),
    si calcolano media e varianza della mistura e si ruota indietro.

    Args:
        mix: Mistura con tutte le concentrazioni > 0

    Returns:
        VonMises con mu = media equivalente, kappa = 1/varianza equivalente
    """
    kappas = mix.kappas
    if np.any(kappas <= 0.0):
        raise ValueError('mixture_collapse is undefined for components with kappa = 0')
    if len(mix) == 1:
        return mix.components[0][1]

    weights, mus = mix.weights, mix.mus
    res = _resultant(mix)
    # Risultante nulla (mistura simmetrica): si usa la componente piu' pesante
    center = float(np.angle(res)) if abs(res) > 0.0 else float(mus[np.argmax(weights)])

    delta = wrap_angle(mus - center)
    mean = float(np.sum(weights * delta))
    var = float(np.sum(weights * (1.0 / kappas + delta ** 2)) - mean ** 2)
    kappa = KAPPA_CAP if var <= 1.0 / KAPPA_CAP else 1.0 / var
    return VonMises(mu=center + mean, kappa=kappa)


def collapse_or_uniform(mix: VmMixture) -> VonMises:
    """
    Collasso che tollera componenti uniformi.

    Le componenti con kappa = 0 vengono scartate e i pesi rinormalizzati;
    se non ne resta nessuna il risultato e' il VM uniforme.
    """
    keep = [(w, vm) for w, vm in mix.components if vm.kappa > 0.0]
    if not keep:
        logger.debug('all mixture components uniform, belief left uniform')
        return VonMises(mu=0.0, kappa=0.0)
    if len(keep) < len(mix):
        weights = np.array([w for w, _ in keep])
        weights /= weights.sum()
        keep = [(float(w), vm) for w, (_, vm) in zip(weights, keep)]
    return mixture_collapse(VmMixture(tuple(keep)))


def factors_from_eta(eta: Iterable[complex]) -> List[WrappedFactor]:
    """
    Fattori avvolti da un vettore di parametri naturali eta[m], m = 0..M-1.

    L'elemento m = 0 e' una costante e viene ignorato.
    """
    eta = np.asarray(list(eta), dtype=complex)
    return [WrappedFactor(order=m, eta=eta[m]) for m in range(1, len(eta))]
