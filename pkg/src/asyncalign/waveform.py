"""Shaping pulses, their autocorrelations, and generator sequences.

The pulse prototypes are centered at t=0 and expressed in units of the
symbol interval T_s.  A truncated pulse keeps the central u*T_s seconds
(support [-u/2, u/2] in symbol units, equivalent to a causal support of
[0, u*T_s] after shifting) and is renormalized to unit energy.  The ideal
band-limited case is flagged with half_support=None and evaluated through
closed forms; no quadrature over an infinite support is ever attempted.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np
from scipy.integrate import simpson

from .errors import DimensionError, ParameterError

KINDS = ("sinc", "raised-cosine", "root-raised-cosine")

# Oversampling (points per symbol interval) for the composite-Simpson
# quadrature.  256x keeps the autocorrelation within ~1e-12 of an adaptive
# integrator while staying a single vectorized evaluation.
QUAD_OVERSAMPLING = 256


def _sinc(x):
    return np.sinc(x)


def _raised_cosine(t, beta):
    """Raised-cosine pulse, unit symbol interval, peak value 1 at t=0."""
    t = np.asarray(t, dtype=float)
    if beta == 0.0:
        return np.sinc(t)
    den = 1.0 - (2.0 * beta * t) ** 2
    singular = np.isclose(den, 0.0, atol=1e-12)
    safe = np.where(singular, 1.0, den)
    val = np.sinc(t) * np.cos(np.pi * beta * t) / safe
    lim = np.pi / 4.0 * np.sinc(1.0 / (2.0 * beta))
    return np.where(singular, lim, val)


def _root_raised_cosine(t, beta):
    """Root-raised-cosine pulse, unit symbol interval (unit-energy family)."""
    t = np.asarray(t, dtype=float)
    if beta == 0.0:
        return np.sinc(t)
    out = np.empty_like(t)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    at_sing = np.isclose(np.abs(t), 1.0 / (4.0 * beta), atol=1e-12)
    generic = ~(at_zero | at_sing)
    tg = np.where(generic, t, 1.0 / (8.0 * beta))  # dummy off the generic branch
    num = np.sin(np.pi * tg * (1 - beta)) + 4 * beta * tg * np.cos(np.pi * tg * (1 + beta))
    den = np.pi * tg * (1 - (4 * beta * tg) ** 2)
    out = np.where(generic, num / den, 0.0)
    out = np.where(at_zero, 1.0 - beta + 4.0 * beta / np.pi, out)
    if np.any(at_sing):
        v = (beta / np.sqrt(2.0)) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
            + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
        )
        out = np.where(at_sing, v, out)
    return out


_PROTOTYPES = {
    "sinc": lambda t, beta: _sinc(t),
    "raised-cosine": _raised_cosine,
    "root-raised-cosine": _root_raised_cosine,
}


@dataclasses.dataclass(frozen=True)
class Waveform:
    """A unit-energy shaping pulse.

    Attributes
    ----------
    kind : one of ``sinc``, ``raised-cosine``, ``root-raised-cosine``.
    beta : excess bandwidth in [0, 1).
    half_support : u, the truncation half-width in symbol intervals
        (support length u*T_s); ``None`` marks the ideal band-limited
        pulse with infinite support.
    symbol_interval : T_s in seconds.
    amplitude : normalization factor applied to the prototype so that the
        (possibly truncated) pulse has unit energy.
    decay_constant, decay_exponent : fitted envelope (a, eta) such that the
        pulse and its autocorrelation stay below a/|t/T_s|**eta for
        |t/T_s| >= 2 over the evaluated range.  eta is 3 for the
        raised-cosine family with beta > 0 and 1 otherwise.
    """

    kind: str
    beta: float
    half_support: Optional[int]
    symbol_interval: float
    amplitude: float
    decay_constant: float
    decay_exponent: float

    @property
    def ideal(self) -> bool:
        return self.half_support is None

    def __call__(self, t):
        return pulse(self, t)


def pulse(w: Waveform, t):
    """Evaluate the centered pulse psi(t); exactly zero outside the support."""
    t = np.asarray(t, dtype=float)
    x = t / w.symbol_interval
    val = w.amplitude * _PROTOTYPES[w.kind](x, w.beta)
    if not w.ideal:
        half = w.half_support / 2.0
        val = np.where(np.abs(x) <= half, val, 0.0)
    return val if val.ndim else float(val)


def _quad_grid(lo: float, hi: float):
    """Odd-count uniform grid suitable for composite Simpson."""
    n = max(int(round((hi - lo) * QUAD_OVERSAMPLING)), 2)
    if n % 2:
        n += 1
    return np.linspace(lo, hi, n + 1)


def _prototype_energy(kind: str, beta: float, u: Optional[int]) -> float:
    """Energy of the unscaled prototype over its (possibly truncated) support."""
    if u is None:
        if kind == "sinc":
            return 1.0
        if kind == "root-raised-cosine":
            return 1.0  # |Psi|^2 integrates the raised-cosine spectrum: exactly 1
        # raised-cosine pulse: closed form of the squared spectrum
        return 1.0 - beta / 4.0
    t = _quad_grid(-u / 2.0, u / 2.0)
    p = _PROTOTYPES[kind](t, beta)
    return float(simpson(p * p, x=t))


def _fit_decay(kind, beta, u, amplitude):
    """Fit the envelope constant a for |f(t)| <= a/|t|^eta, |t| >= 2.

    The fit covers the pulse, its autocorrelation, and the untruncated
    autocorrelation of the same family, so the one (a, eta) stored on the
    waveform is valid in every tail bound that consumes it (the
    truncation-error bounds sum the ideal tails beyond the support).
    """
    eta = 3.0 if (kind in ("raised-cosine", "root-raised-cosine") and beta > 0) else 1.0
    t_hi_pulse = (u / 2.0) if u is not None else 32.0
    a = 0.0
    if t_hi_pulse > 2.0:
        t = np.arange(2.0, t_hi_pulse, 1.0 / 64)
        a = max(a, float(np.max(np.abs(_PROTOTYPES[kind](t, beta)) * amplitude * t**eta)))
    if u is not None and u > 2:
        t = np.arange(2.0, float(u), 1.0 / 16)
        corr = _autocorr_raw(kind, beta, u, amplitude, t)
        a = max(a, float(np.max(np.abs(corr) * t**eta)))
    t = np.arange(2.0, 32.0, 1.0 / 16)
    ideal_corr = _autocorr_raw(kind, beta, None, 1.0, t)
    a = max(a, float(np.max(np.abs(ideal_corr) * t**eta)))
    return max(a, 1e-12), eta


def make_waveform(kind: str, beta: float = 0.0, u: Optional[int] = None,
                  T_s: float = 1.0) -> Waveform:
    """Construct a unit-energy shaping pulse.

    Parameters
    ----------
    kind : pulse family.
    beta : excess bandwidth, must lie in [0, 1).
    u : truncation half-support in symbol intervals (integer >= 1), or
        ``None`` for the ideal band-limited pulse.
    T_s : symbol interval in seconds.

    Truncation renormalizes the pulse to unit energy.
    """
    if kind not in KINDS:
        raise ParameterError(f"unknown waveform kind {kind!r}")
    if not 0.0 <= beta < 1.0:
        raise ParameterError(f"excess bandwidth must be in [0, 1), got {beta}")
    if T_s <= 0:
        raise ParameterError(f"symbol interval must be positive, got {T_s}")
    if kind == "sinc" and beta != 0.0:
        raise ParameterError("the sinc pulse has no excess bandwidth; use beta=0")
    if u is not None:
        u = int(u)
        if u < 1:
            raise ParameterError(f"half support must be >= 1, got {u}")
    energy = _prototype_energy(kind, beta, u)
    amplitude = 1.0 / np.sqrt(energy * T_s)
    a, eta = _fit_decay(kind, beta, u, amplitude * np.sqrt(T_s))
    return Waveform(kind=kind, beta=beta, half_support=u, symbol_interval=T_s,
                    amplitude=amplitude, decay_constant=a, decay_exponent=eta)


def _autocorr_raw(kind, beta, u, amplitude, tau_sym):
    """Autocorrelation at lags tau (symbol units) of the normalized pulse.

    ``amplitude`` is the normalization in symbol units (T_s folded out);
    closed forms are used for the infinite-support cases.
    """
    tau_sym = np.atleast_1d(np.asarray(tau_sym, dtype=float))
    scale = amplitude**2
    if u is None:
        if kind == "sinc":
            return scale * np.sinc(tau_sym)
        if kind == "root-raised-cosine":
            # RRC x RRC is the raised-cosine pulse (unit energy -> exact form)
            return scale * _raised_cosine(tau_sym, beta)
        # ideal raised-cosine: wide-window quadrature; the 1/t^3 tail keeps
        # the truncation error of the window below 1e-9
        out = np.empty_like(tau_sym)
        for idx, s in np.ndenumerate(tau_sym):
            half = 64.0 + abs(s)
            t = _quad_grid(-half, half)
            out[idx] = simpson(_raised_cosine(t - s, beta) * _raised_cosine(t, beta), x=t)
        return scale * out
    half = u / 2.0
    out = np.zeros_like(tau_sym)
    proto = _PROTOTYPES[kind]
    for idx, s in np.ndenumerate(tau_sym):
        lo, hi = max(-half, -half + s), min(half, half + s)
        if hi - lo <= 1e-12:
            continue
        t = _quad_grid(lo, hi)
        out[idx] = simpson(proto(t - s, beta) * proto(t, beta), x=t)
    return scale * out


def autocorrelation(w: Waveform, tau):
    """gamma(tau) = integral psi(t - tau) psi*(t) dt.

    Real pulses give a real, even autocorrelation, so Hermitian symmetry
    gamma(-tau) = conj(gamma(tau)) holds trivially.  Lags outside the
    truncated support return exactly 0.
    """
    tau = np.asarray(tau, dtype=float)
    scalar = tau.ndim == 0
    amp_sym = w.amplitude * np.sqrt(w.symbol_interval)
    val = _autocorr_raw(w.kind, w.beta, w.half_support, amp_sym,
                        np.atleast_1d(tau) / w.symbol_interval)
    return float(val[0]) if scalar else val.reshape(tau.shape)


@dataclasses.dataclass(frozen=True)
class GeneratorSequence:
    """Length-N generator of a circulant link matrix.

    ``values`` is the wrapped arrangement
    [gamma(0), ..., gamma(u), 0, ..., 0, gamma(-u), ..., gamma(-1)];
    ``taps`` holds gamma(q) for q = -u..u in natural order.
    """

    values: np.ndarray
    taps: np.ndarray
    relative_delay: float
    half_support: int
    length: int

    def tap(self, q: int) -> complex:
        if abs(q) > self.half_support:
            return 0.0
        return self.taps[q + self.half_support]


def gamma_sequence(w: Waveform, tau_hat: float, N: int) -> GeneratorSequence:
    """Sample gamma(q) = autocorrelation((q - tau_hat) * T_s) into the
    wrapped length-N generator.

    For truncated pulses the half-support is the waveform's u; the ideal
    band-limited pulse is sampled analytically out to N//2 (at tau_hat=0
    this is exactly the unit impulse).  Requires N >= 2u.
    """
    if abs(tau_hat) >= 1.0:
        raise ParameterError(f"relative delay fraction must satisfy |tau| < 1, got {tau_hat}")
    u = w.half_support if not w.ideal else N // 2
    if N < 2 * u:
        raise DimensionError(f"sequence length N={N} must be >= 2u={2 * u}")
    q = np.arange(-u, u + 1)
    taps = autocorrelation(w, (q - tau_hat) * w.symbol_interval).astype(complex)
    values = np.zeros(N, dtype=complex)
    for qi, g in zip(q, taps):
        values[qi % N] += g
    return GeneratorSequence(values=values, taps=taps, relative_delay=tau_hat,
                             half_support=u, length=N)
