"""
Metriche di valutazione multi-sorgente per le stime DOA.

- GOSPA con alpha = 2, p = 1 e scomposizione in distanza / mancati / falsi
- RMSE con errore massimo c' per le sorgenti non associate
- Assegnazione ottima (metodo ungherese) su matrice quadrata aumentata

Le distanze sono differenze assolute in gradi (nessun avvolgimento, i DOA
stanno in [-90, 90]).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, is_dataclass
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class GospaBreakdown:
    """
    GOSPA e sua scomposizione [gradi].

    Attributi:
        total: dist + miss + false_
        dist: Somma degli errori assoluti sulle coppie associate
        miss: c/2 per ogni sorgente vera non associata
        false_: c/2 per ogni stima non associata
    """
    total: float
    dist: float
    miss: float
    false_: float


@dataclass(frozen=True)
class MetricConfig:
    """
    Parametri delle metriche.

    Attributi:
        c: Cutoff GOSPA [gradi]
        c_prime: Errore massimo RMSE [gradi]
    """
    c: float = 10.0
    c_prime: float = 10.0

    def __post_init__(self) -> None:
        if not (self.c > 0.0 and self.c_prime > 0.0):
            raise ValueError(f'metric cutoffs must be > 0, got c={self.c}, c_prime={self.c_prime}')


def assign(
    cost,                                    # Matrice dei costi n x m
    miss_cost: Optional[float] = None,       # Costo di una riga non associata
    false_cost: Optional[float] = None,      # Costo di una colonna non associata
) -> List[Tuple[int, int]]:
    """
    Assegnazione ottima uno-a-uno (metodo ungherese).

    Senza costi di non associazione si assegnano min(n, m) coppie. Con
    miss_cost/false_cost la matrice viene aumentata a (n+m) x (n+m): ogni
    riga puo' restare libera pagando miss_cost e ogni colonna false_cost,
    quindi l'assegnazione e' parziale.

    Returns:
        Coppie (riga, colonna) ordinate per riga
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError('cost must be a 2-D matrix')
    if not np.all(np.isfinite(cost)):
        raise ValueError('cost entries must be finite')
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    if miss_cost is None and false_cost is None:
        rows, cols = linear_sum_assignment(cost)
        return sorted(zip(rows.tolist(), cols.tolist()))

    miss_cost = 0.0 if miss_cost is None else float(miss_cost)
    false_cost = 0.0 if false_cost is None else float(false_cost)
    # Valore finito che nessuna soluzione ottima puo' scegliere
    big = 1.0 + np.abs(cost).sum() + (n + m) * (miss_cost + false_cost)

    aug = np.zeros((n + m, m + n))
    aug[:n, :m] = cost
    aug[:n, m:] = big
    aug[n:, :m] = big
    aug[np.arange(n), m + np.arange(n)] = miss_cost
    aug[n + np.arange(m), np.arange(m)] = false_cost
    rows, cols = linear_sum_assignment(aug)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if r < n and c < m)


def _distances(truth: Sequence[float], est: Sequence[float]) -> np.ndarray:
    truth = np.asarray(truth, dtype=float).ravel()
    est = np.asarray(est, dtype=float).ravel()
    return np.abs(truth[:, None] - est[None, :])


def gospa(truth: Sequence[float], est: Sequence[float], cfg: MetricConfig = MetricConfig()) -> GospaBreakdown:
    """
    GOSPA (alpha = 2, p = 1) tra DOA veri e stimati.

    Una coppia e' associata solo se |theta_i - theta_j| <= c (costo d contro
    c/2 + c/2 della non associazione).

    Args:
        truth: DOA veri [gradi]
        est: DOA stimati [gradi]
        cfg: MetricConfig (usa c)

    Returns:
        GospaBreakdown
    """
    n_true, n_est = len(truth), len(est)
    half = cfg.c / 2.0
    if n_true == 0 or n_est == 0:
        miss, false_ = half * n_true, half * n_est
        return GospaBreakdown(total=miss + false_, dist=0.0, miss=miss, false_=false_)

    d = _distances(truth, est)
    cost = np.where(d <= cfg.c, d, 2.0 * cfg.c + d)  # coppie oltre c mai convenienti
    pairs = [(i, j) for i, j in assign(cost, half, half) if d[i, j] <= cfg.c]

    dist = float(sum(d[i, j] for i, j in pairs))
    miss = half * (n_true - len(pairs))
    false_ = half * (n_est - len(pairs))
    return GospaBreakdown(total=dist + miss + false_, dist=dist, miss=miss, false_=false_)


def rmse(truth: Sequence[float], est: Sequence[float], cfg: MetricConfig = MetricConfig()) -> float:
    """
    RMSE con errore massimo c' per le sorgenti vere non associate.

    sqrt( (sum_associate (theta_i - theta_j)^2 + c'^2 * n_mancati) / |truth| )

    Raises:
        ValueError: se truth e' vuoto
    """
    n_true = len(truth)
    if n_true == 0:
        raise ValueError('rmse is undefined for an empty truth set')
    c2 = cfg.c_prime ** 2
    if len(est) == 0:
        return float(np.sqrt(c2))

    d2 = _distances(truth, est) ** 2
    cost = np.where(d2 <= c2, d2, 2.0 * c2 + d2)
    pairs = [(i, j) for i, j in assign(cost, c2, 0.0) if d2[i, j] <= c2]
    total = float(sum(d2[i, j] for i, j in pairs)) + c2 * (n_true - len(pairs))
    return float(np.sqrt(total / n_true))


def _as_row(item) -> Mapping:
    if is_dataclass(item):
        return asdict(item)
    return dict(item)


def average_metrics(per_step: Iterable) -> pd.Series:
    """
    Media aritmetica campo per campo di una serie di metriche per passo.

    Args:
        per_step: GospaBreakdown, dizionari oppure DataFrame (colonne numeriche)

    Returns:
        Serie pandas con le medie
    """
    frame = per_step if isinstance(per_step, pd.DataFrame) else pd.DataFrame([_as_row(r) for r in per_step])
    if frame.empty:
        raise ValueError('average_metrics needs at least one row')
    return frame.mean(numeric_only=True)
