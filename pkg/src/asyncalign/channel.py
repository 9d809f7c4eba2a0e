"""Channel realizations, circulant/Toeplitz link matrices, and error studies.

Three fidelity modes are supported end to end:

* ``toeplitz-exact``  -- the honest linear model: full Toeplitz for ideal
  band-limited pulses, banded Toeplitz (matched-filter taps) applied to the
  CPS-framed block for truncated pulses.
* ``circulant``       -- circulant matrices generated by the sampled
  autocorrelation; exact once a CPS frame is stripped.
* ``ideal-phase``     -- the delay-phase model Lambda0 * E(tau_hat) on the
  DFT basis; the alignment construction is exact only here.
"""

from __future__ import annotations

import dataclasses
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.linalg import circulant as _circulant_matrix
from scipy.linalg import toeplitz as _toeplitz_matrix
from scipy.special import zeta

from .errors import DimensionError, ParameterError
from .waveform import GeneratorSequence, Waveform, autocorrelation, gamma_sequence, pulse

MODES = ("toeplitz-exact", "circulant", "ideal-phase")


# ---------------------------------------------------------------------------
# norms and DFT basis
# ---------------------------------------------------------------------------

def weak_norm(A: np.ndarray) -> float:
    """Normalized Frobenius norm [N^-1 trace(A^H A)]^(1/2)."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("weak norm is defined for square matrices")
    return float(np.linalg.norm(A, "fro") / np.sqrt(A.shape[0]))


def strong_norm(A: np.ndarray) -> float:
    """Spectral norm (largest singular value)."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("strong norm is defined for square matrices")
    return float(np.linalg.norm(A, 2))


def dft_matrix(N: int) -> np.ndarray:
    """Unitary DFT matrix U with U[q, s] = exp(-2j pi q s / N) / sqrt(N)."""
    k = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(k, k) / N) / np.sqrt(N)


def to_dft(x: np.ndarray) -> np.ndarray:
    """Apply U along the first axis (unitary forward DFT)."""
    return np.fft.fft(x, axis=0) / np.sqrt(x.shape[0])


def from_dft(x: np.ndarray) -> np.ndarray:
    """Apply U^H along the first axis (unitary inverse DFT)."""
    return np.fft.ifft(x, axis=0) * np.sqrt(x.shape[0])


# ---------------------------------------------------------------------------
# channel realizations
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class ChannelRealization:
    """Fading gains and absolute delays for a K-user (M-antenna) network.

    ``gains`` has shape (K, K, M, M) indexed [rx, tx, rx_ant, tx_ant];
    ``delays`` has shape (K, K) in seconds, one delay per node pair (all
    antenna pairs of a pair share it).
    """

    K: int
    M: int
    gains: np.ndarray
    delays: np.ndarray
    seed: Optional[int]
    symbol_interval: float = 1.0

    def gain(self, i: int, j: int) -> complex:
        return complex(self.gains[i, j, 0, 0])

    def rel_delay(self, i: int, m: int, j: int) -> float:
        """Relative delay tau[i,m] - tau[i,j] between tx m and tx j at rx i."""
        return float(self.delays[i, m] - self.delays[i, j])

    def rel_delay_frac(self, i: int, j: int) -> float:
        """Link delay fraction (tau[i,i] - tau[i,j]) / T_s in (-1, 1)."""
        return self.rel_delay(i, i, j) / self.symbol_interval

    def scaled_gains(self, factors: np.ndarray) -> "ChannelRealization":
        """Copy with every gain block h[i, j] multiplied by factors[i, j]."""
        g = self.gains * np.asarray(factors)[:, :, None, None]
        return dataclasses.replace(self, gains=g)


def draw_realization(K: int, M: int = 1, seed: Optional[int] = None,
                     T_s: float = 1.0) -> ChannelRealization:
    """Draw i.i.d. CN(0,1) gains and uniform delays on [0, T_s).

    Gains with magnitude below 1e-6 are redrawn so every link is active.
    Deterministic for a given seed.
    """
    if K < 3:
        raise ParameterError(f"the alignment scheme requires K >= 3 users, got {K}")
    if M < 1:
        raise ParameterError(f"antenna count must be >= 1, got {M}")
    rng = np.random.default_rng(seed)
    delays = rng.uniform(0.0, T_s, size=(K, K))
    gains = (rng.standard_normal((K, K, M, M))
             + 1j * rng.standard_normal((K, K, M, M))) / np.sqrt(2.0)
    while True:
        weak = np.abs(gains) < 1e-6
        if not weak.any():
            break
        redraw = (rng.standard_normal(int(weak.sum()))
                  + 1j * rng.standard_normal(int(weak.sum()))) / np.sqrt(2.0)
        gains[weak] = redraw
    return ChannelRealization(K=K, M=M, gains=gains, delays=delays, seed=seed,
                              symbol_interval=T_s)


def synchronous_realization(K: int, M: int = 1, seed: Optional[int] = None,
                            delay: float = 0.0, T_s: float = 1.0) -> ChannelRealization:
    """All links share one delay: the degenerate fully-synchronous network."""
    base = draw_realization(K, M, seed, T_s)
    return dataclasses.replace(base, delays=np.full((K, K), delay))


def tx_delay_realization(K: int, M: int = 1, seed: Optional[int] = None,
                         T_s: float = 1.0) -> ChannelRealization:
    """Synchronous network with artificial per-transmitter delays.

    delays[i, j] depends on j only, which keeps every composite phase at
    zero: rank deficiency is preserved no matter the inserted values.
    """
    base = draw_realization(K, M, seed, T_s)
    rng = np.random.default_rng(None if seed is None else seed + 1)
    per_tx = rng.uniform(0.0, T_s, size=K)
    return dataclasses.replace(base, delays=np.tile(per_tx, (K, 1)))


def spread_delay_realization(K: int, n: int, M: int = 1, seed: Optional[int] = None,
                             T_s: float = 1.0) -> ChannelRealization:
    """Delay profile whose composite phases are uniformly spread (K=3 only).

    Random delays make the direction-vector phase nodes cluster on a short
    arc of the unit circle, which conditions the receiver stacks
    exponentially badly as n grows.  This profile places the composite
    delays at tau_t = N/(n+1) and tau_f = N/(2(n+1)) so the nodes land on
    interleaved roots of unity and the stacks stay well conditioned; used
    by the rate-sweep demos.
    """
    if K != 3:
        raise ParameterError("the spread delay profile is implemented for K=3")
    N = (n + 1) + n
    tau_t = N / (n + 1)
    tau_f = N / (2 * (n + 1))
    tau = np.zeros((3, 3))
    # tau_f = rel(0,0,2) + rel(1,2,0); tau_t = rel(2,0,1) + rel(0,1,2) + rel(1,2,0)
    tau[0, 2] = 0.0
    tau[1, 0] = 0.0
    tau[0, 0] = tau_f / 2.0
    tau[1, 2] = tau_f / 2.0
    need = tau_t - tau[1, 2]
    tau[0, 1] = min(0.95, need / 2.0)
    rest = need - tau[0, 1]
    tau[2, 1] = 0.02
    tau[2, 0] = rest + tau[2, 1]
    if not (0.0 <= tau[2, 0] < 1.0):
        raise ParameterError(f"spread profile infeasible for n={n}")
    tau[1, 1] = 0.3
    tau[2, 2] = 0.7
    base = draw_realization(3, M, seed, T_s)
    return dataclasses.replace(base, delays=tau * T_s)


# ---------------------------------------------------------------------------
# link matrices
# ---------------------------------------------------------------------------

def phase_ramp(tau_hat: float, N: int) -> np.ndarray:
    """Diagonal of E(tau_hat): exp(-2j pi k tau_hat / N), k = 0..N-1.

    Composite delays from generator products reach beyond (-1, 1), so any
    finite tau_hat is accepted.
    """
    return np.exp(-2j * np.pi * np.arange(N) * tau_hat / N)


def phase_model(lam0: np.ndarray, tau_hat: float, N: int) -> np.ndarray:
    """Delay-phase eigenvalue model: Lambda0 * E(tau_hat) elementwise."""
    lam0 = np.asarray(lam0)
    if lam0.shape != (N,):
        raise DimensionError(f"Lambda0 must have length {N}")
    return lam0 * phase_ramp(tau_hat, N)


@dataclasses.dataclass(frozen=True)
class CirculantLink:
    """One link's circulant channel: eigenvalues on the unitary DFT basis."""

    lam: np.ndarray
    N: int
    generator: Optional[GeneratorSequence] = None

    def matrix(self) -> np.ndarray:
        first_col = np.fft.ifft(self.lam)
        return _circulant_matrix(first_col)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        return np.fft.ifft(self.lam[(slice(None),) + (None,) * (x.ndim - 1)]
                           * np.fft.fft(x, axis=0), axis=0)

    def singular_ratio(self) -> float:
        mags = np.abs(self.lam)
        return float(mags.min() / mags.max())


def base_eigenvalues(w: Waveform, N: int) -> np.ndarray:
    """Lambda0: eigenvalues of the zero-delay link of the same waveform.

    The ideal band-limited pulses in this family have Nyquist zero
    crossings, so their Lambda0 is exactly the all-ones vector.
    """
    if w.ideal:
        return np.ones(N, dtype=complex)
    return np.fft.fft(gamma_sequence(w, 0.0, N).values)


def build_circulant(w: Waveform, tau_hat: float, N: int,
                    ideal_phase: bool = False) -> CirculantLink:
    """Circulant link for one relative delay fraction.

    With ``ideal_phase=False`` the eigenvalues are the DFT of the sampled
    generator sequence (requires N >= 2u).  With ``ideal_phase=True`` (the
    only choice for infinite-support pulses) the eigenvalues are placed at
    Lambda0 * E(tau_hat).
    """
    if ideal_phase or w.ideal:
        lam = phase_model(base_eigenvalues(w, N), tau_hat, N)
        return CirculantLink(lam=lam, N=N)
    gen = gamma_sequence(w, tau_hat, N)
    return CirculantLink(lam=np.fft.fft(gen.values), N=N, generator=gen)


def build_toeplitz(w: Waveform, tau_hat: float, N: int) -> np.ndarray:
    """N x N Toeplitz channel matrix with (r, c) entry g(r - c).

    For ideal band-limited pulses the generator is the sampled pulse
    g(k) = psi((k + tau_hat) T_s); for truncated pulses it is the
    matched-filter tap g(k) = gamma((k - tau_hat) T_s), zero beyond the
    autocorrelation support.
    """
    k = np.arange(-(N - 1), N)
    if w.ideal:
        g = pulse(w, (k + tau_hat) * w.symbol_interval).astype(complex)
    else:
        g = autocorrelation(w, (k - tau_hat) * w.symbol_interval).astype(complex)
    col = g[N - 1:]          # g(0), g(1), ..., g(N-1)
    row = g[N - 1::-1]       # g(0), g(-1), ..., g(-(N-1))
    return _toeplitz_matrix(col, row)


def noise_covariance(w: Waveform, N: int, u: int, sigma2: float = 1.0) -> np.ndarray:
    """Matched-filter noise covariance: Hermitian banded Toeplitz of order u.

    Entry (r, c) is sigma2 * gamma((r - c) T_s) for |r - c| < u and 0 for
    |r - c| >= u; the diagonal equals sigma2 for a unit-energy pulse.
    """
    if N < 2 * u:
        raise DimensionError(f"N={N} must be >= 2u={2 * u}")
    k = np.arange(N)
    taps = autocorrelation(w, k * w.symbol_interval).astype(complex)
    taps[u:] = 0.0
    col = sigma2 * taps
    return _toeplitz_matrix(col, col.conj())


def covariance_factor(Phi: np.ndarray) -> np.ndarray:
    """Hermitian square root of a PSD covariance (negative ripple clipped)."""
    vals, vecs = np.linalg.eigh(Phi)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


# ---------------------------------------------------------------------------
# full link sets
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class LinkSet:
    """All K x K links of a realization at one fidelity mode."""

    realization: ChannelRealization
    waveform: Waveform
    N: int
    mode: str
    links: Dict[Tuple[int, int], CirculantLink]
    lam0: np.ndarray

    @property
    def K(self) -> int:
        return self.realization.K

    def lam(self, i: int, j: int) -> np.ndarray:
        return self.links[(i, j)].lam

    def min_singular_ratio(self) -> float:
        return min(link.singular_ratio() for link in self.links.values())


def channel_links(realization: ChannelRealization, w: Waveform, N: int,
                  mode: str = "ideal-phase") -> LinkSet:
    """Build every link's circulant representation at the requested mode.

    ``toeplitz-exact`` shares the circulant eigenvalue set (used for
    receiver design); its honest time-domain application lives in the link
    simulator, which convolves the CPS frame with the generator taps.
    """
    if mode not in MODES:
        raise ParameterError(f"unknown mode {mode!r}")
    ideal = mode == "ideal-phase"
    links = {}
    for i in range(realization.K):
        for j in range(realization.K):
            tau_hat = realization.rel_delay_frac(i, j)
            links[(i, j)] = build_circulant(w, tau_hat, N, ideal_phase=ideal)
    return LinkSet(realization=realization, waveform=w, N=N, mode=mode,
                   links=links, lam0=base_eigenvalues(w, N))


# ---------------------------------------------------------------------------
# approximation error studies
# ---------------------------------------------------------------------------

def _tail_zeta(eta: float, start: int) -> float:
    """sum_{k >= start} k^-eta; infinite for eta <= 1."""
    if eta <= 1.0:
        return float("inf")
    return float(zeta(eta, start))


def offdiag_error_bound(w: Waveform, N: int) -> float:
    """Tail bound on off-diagonal DFT-domain error entries:
    (2a/N) sum_{k=1}^{N-1} k^(1-eta)."""
    a, eta = w.decay_constant, w.decay_exponent
    k = np.arange(1, N)
    return (2.0 * a / N) * float(np.sum(k ** (1.0 - eta)))


def diag_error_bound(w: Waveform, N: int) -> float:
    """Tail bound for the Toeplitz-vs-circulant diagonal error at size N:
    (2a/N) sum_{k=1}^{N-1} k^(1-eta) + 2a sum_{k>=N} k^-eta."""
    return offdiag_error_bound(w, N) + 2.0 * w.decay_constant \
        * _tail_zeta(w.decay_exponent, N)


def approximation_error(toep: np.ndarray, circ, w: Waveform) -> dict:
    """Quantify the circulant approximation of a Toeplitz channel.

    Returns the weak-norm error |Gamma_hat - Gamma|, the DFT-domain error
    matrix diagnostics (max diagonal / off-diagonal magnitude), and the
    analytic tail bound evaluated with the waveform's fitted (a, eta).
    """
    toep = np.asarray(toep)
    N = toep.shape[0]
    U = dft_matrix(N)
    if isinstance(circ, CirculantLink):
        lam = circ.lam
        gamma_mat = circ.matrix()
    else:
        gamma_mat = np.asarray(circ)
        lam = np.diag(U @ gamma_mat @ U.conj().T)
    if toep.shape != gamma_mat.shape:
        raise DimensionError("matrices must share dimensions")
    ups = np.diag(lam) - U @ toep @ U.conj().T
    off = ups.copy()
    np.fill_diagonal(off, 0.0)
    return {
        "weak_error": weak_norm(toep - gamma_mat),
        "max_diag_error": float(np.abs(np.diag(ups)).max()),
        "max_offdiag_error": float(np.abs(off).max()),
        "diag_bound": diag_error_bound(w, N),
        "offdiag_bound": offdiag_error_bound(w, N),
    }


def phase_model_error(lam: np.ndarray, model: np.ndarray) -> float:
    """Max absolute diagonal deviation between eigenvalues and phase model."""
    lam = np.asarray(lam)
    model = np.asarray(model)
    if lam.shape != model.shape:
        raise DimensionError("eigenvalue vectors must share length")
    return float(np.abs(lam - model).max())


def phase_truncation_bound(w: Waveform, u: int) -> float:
    """Tail bound 4a sum_{k >= u} k^-eta on the truncation-induced phase error."""
    return 4.0 * w.decay_constant * _tail_zeta(w.decay_exponent, u)


def phase_truncation_error(w: Waveform, tau_hat: float, N: int, u: int,
                           tail: int = 4096) -> dict:
    """Truncation error of the delay-phase eigenvalue model, measured as the
    tail term it is controlled by: at each DFT frequency, the summed
    difference between the phase-shifted undelayed samples and the delayed
    samples over |q| > u.

    This is the quantity the 4a*sum(k^-eta) bound controls.  The plain
    diagonal deviation (``phase_model_error``) additionally contains a
    spectral-overlap term for excess-bandwidth pulses that does not vanish
    with u; both are reported by the error-decay experiment.
    """
    ideal = make_ideal_counterpart(w)
    om = 2.0 * np.pi * np.arange(N) / N
    q = np.concatenate([np.arange(-tail, -u), np.arange(u + 1, tail + 1)])
    x_delayed = autocorrelation(ideal, (q - tau_hat) * w.symbol_interval)
    x_base = autocorrelation(ideal, q * w.symbol_interval)
    ph = np.exp(-1j * np.outer(om, q))
    eps = ph @ x_base * np.exp(-1j * om * tau_hat) - ph @ x_delayed
    return {
        "max_error": float(np.abs(eps).max()),
        "bound": phase_truncation_bound(w, u),
    }


def make_ideal_counterpart(w: Waveform) -> Waveform:
    """The infinite-support pulse a truncated waveform approximates."""
    if w.ideal:
        return w
    from .waveform import make_waveform
    return make_waveform(w.kind, w.beta, None, w.symbol_interval)
