"""Monte Carlo synthesis of channel sequences and empirical error checks.

Channels are synthesized by the moving-average representation that the
canonical factorization provides: with F = P P* and P(l) = sum_u d(u)
exp(-i*u*l), the sequence

    zeta(j) = sum_{u >= 0} d(u) w(j - u)

driven by circular complex Gaussian innovations w has spectral density F.
``empirical_mse`` replays the solved estimator on simulated paths and
compares the sample mean-square error with the theoretical value.
"""

from dataclasses import dataclass

import numpy as np

from .blocking import _basis_matrix
from .extrapolate import spectral_factorize
from .harmonics import design_matrix, flat_index
from .spectral import as_grid


@dataclass(frozen=True)
class SimulationConfig:
    """Trial count, past-window length and base seed of one experiment."""

    seed: int
    n_trials: int = 10_000
    n_steps: int = 64
    batch_size: int = 1000

    def __post_init__(self):
        if self.n_trials < 1 or self.n_steps < 1:
            raise ValueError("n_trials and n_steps must be positive")


@dataclass
class TrialSummary:
    """Outcome of a Monte Carlo error measurement."""

    mse: float
    stderr: float
    n_trials: int
    seed: int
    realized: np.ndarray = None
    estimated: np.ndarray = None

    @property
    def squared_errors(self):
        if self.realized is None:
            return None
        return np.abs(self.realized - self.estimated) ** 2


def _ma_coefficients(F, tail_tol=1e-13):
    """Causal coefficients of the density's factor, tail-trimmed."""
    fac = spectral_factorize(as_grid(F))
    d = fac.coefficients
    norms = np.linalg.norm(d, axis=(1, 2))
    keep = np.nonzero(norms > tail_tol * norms[0])[0]
    upto = int(keep[-1]) + 1 if keep.size else 1
    return d[:upto]


def _complex_innovations(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _ma_filter(d, w, n_out):
    """out(t) = sum_u d(u) w(t - u) for batched innovation rows.

    ``w`` has shape (..., n_out + U - 1, K) with time increasing along the
    second-to-last axis; index U - 1 of w aligns with output time 0.
    """
    U = d.shape[0]
    out = np.zeros(w.shape[:-2] + (n_out, w.shape[-1]), dtype=complex)
    for u in range(U):
        start = U - 1 - u
        out += w[..., start:start + n_out, :] @ d[u].T
    return out


def simulate_channel(F, n_steps, seed, tail_tol=1e-13):
    """One sample path of the stationary vector sequence with density F.

    Fixed ``seed`` gives a byte-identical path.  The empirical lag-0
    covariance converges to the density's covariance as ``n_steps`` grows.
    """
    d = _ma_coefficients(F, tail_tol)
    rng = np.random.default_rng(seed)
    w = _complex_innovations(rng, (n_steps + d.shape[0] - 1, d.shape[1]))
    return _ma_filter(d, w, n_steps)


def empirical_lag_covariance(path, lag):
    """Sample covariance E[zeta(j + lag) zeta(j)^*] of one path."""
    n = path.shape[0]
    if not 0 <= lag < n:
        raise ValueError(f"lag must be in [0, {n}), got {lag}")
    lead = path[lag:]
    base = path[: n - lag]
    return np.einsum("tk,tn->kn", lead, np.conj(base)) / (n - lag)


def synthesize_field(channel_paths, cfg, grid, m_max, enforce_real=True):
    """Field samples from per-channel blocked coefficient paths.

    ``channel_paths`` maps (m, l) to (n_periods, K) coefficient arrays.
    Each channel is reconstructed over its periods and combined with its
    spherical harmonic; the result has shape (n_periods * S, n_nodes).

    With ``enforce_real`` the +/- frequency components of every channel
    are conjugate-paired first, so the field samples come out real (the
    channel model itself is complex valued; reality is a property of the
    synthesized field only).
    """
    if not channel_paths:
        raise ValueError("no channels supplied")
    basis = _basis_matrix(cfg)
    n_periods = None
    series = {}
    for key, values in channel_paths.items():
        values = np.asarray(values, dtype=complex)
        if n_periods is None:
            n_periods = values.shape[0]
        elif values.shape[0] != n_periods:
            raise ValueError("all channels need the same number of periods")
        if enforce_real:
            values = _pair_conjugate(values.copy(), cfg)
        series[key] = (values @ basis.T).reshape(-1)

    m_keys = sorted(series)
    design_full = design_matrix(m_max, grid)
    field = np.zeros((n_periods * cfg.samples_per_period, grid.n_nodes),
                     dtype=complex)
    for (m, l) in m_keys:
        col = design_full[:, flat_index(m, l)]
        field += np.outer(series[(m, l)], col)
    if enforce_real:
        return field.real
    return field


def _pair_conjugate(values, cfg):
    """Project coefficients onto the real-field constraint."""
    K = cfg.n_components
    values[:, 0] = values[:, 0].real
    for o in range(1, (K - 1) // 2 + 1):
        plus, minus = 2 * o - 1, 2 * o
        mean = 0.5 * (values[:, plus] + np.conj(values[:, minus]))
        values[:, plus] = mean
        values[:, minus] = np.conj(mean)
    if K % 2 == 0 and K > 1:
        # unpaired highest frequency cannot appear in a real field
        values[:, K - 1] = 0.0
    return values


def empirical_mse(solution, F, G, a, config, keep_trials=False):
    """Monte Carlo mean-square error of the solved estimator.

    Draws ``config.n_trials`` independent joint paths of the channel and
    its noise, applies the estimator's time-domain weights to the
    simulated past, and compares with the realized functional.  Returns a
    :class:`TrialSummary` with the sample mean and its standard error.
    """
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    J, K = a.shape
    L = config.n_steps
    extended = solution.h_lag_coefficients(2 * L)
    weights = extended[:L]
    total_mass = float(np.sum(np.abs(extended) ** 2))
    tail_mass = float(np.sum(np.abs(extended[L:]) ** 2))
    if total_mass > 0 and tail_mass / total_mass > 1e-6:
        raise ValueError(
            f"estimator keeps {tail_mass / total_mass:.2e} of its weight beyond "
            f"the simulated past window; increase n_steps above {L}"
        )

    d_sig = _ma_coefficients(F)
    d_noise = _ma_coefficients(G) if G is not None else None

    seeds = np.random.SeedSequence(config.seed)
    n_batches = (config.n_trials + config.batch_size - 1) // config.batch_size
    children = seeds.spawn(n_batches)

    realized = np.empty(config.n_trials, dtype=complex)
    estimated = np.empty(config.n_trials, dtype=complex)
    done = 0
    for batch_seed in children:
        b = min(config.batch_size, config.n_trials - done)
        rng = np.random.default_rng(batch_seed)
        t_total = L + J
        w_sig = _complex_innovations(rng, (b, t_total + d_sig.shape[0] - 1, K))
        zeta = _ma_filter(d_sig, w_sig, t_total)   # times -L .. J-1
        obs = zeta[:, :L, :].copy()                # times -L .. -1
        if d_noise is not None:
            w_noise = _complex_innovations(rng, (b, L + d_noise.shape[0] - 1, K))
            obs += _ma_filter(d_noise, w_noise, L)
        target = np.einsum("jk,bjk->b", a, zeta[:, L:, :])
        # weights row i applies at time -(i+1), i.e. observation column L-1-i
        past = obs[:, ::-1, :]
        estimate = np.einsum("ik,bik->b", weights, past)
        realized[done:done + b] = target
        estimated[done:done + b] = estimate
        done += b

    sq = np.abs(realized - estimated) ** 2
    mse = float(sq.mean())
    stderr = float(sq.std(ddof=1) / np.sqrt(config.n_trials))
    return TrialSummary(
        mse=mse, stderr=stderr, n_trials=config.n_trials, seed=config.seed,
        realized=realized if keep_trials else None,
        estimated=estimated if keep_trials else None,
    )
