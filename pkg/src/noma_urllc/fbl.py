"""
Finite-blocklength link math (normal approximation).

Short-packet transmissions do not reach Shannon capacity; the achievable
rate carries a dispersion penalty and the decoding error probability is

    eps = Q( ln2 * sqrt(M/V) * (log2(1+gamma) - D/M) )

with blocklength M (symbols), packet size D (bits), linear SINR gamma and
channel dispersion V = 1 - (1+gamma)^-2.  The rate form inverts through
the same Q-function:

    R = log2(1+gamma) - sqrt(V/M) * Qinv(eps) / ln2        [bits/ch.use]

Everything here is a pure, stateless scalar function; safe to call from
any thread.  Accuracy target for Q/Qinv is 1e-12 absolute (erfc identity
plus Newton-polished inverse), pinned by the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

LN2 = math.log(2.0)
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Rational approximation coefficients for the inverse normal CDF
# (Acklam's method, |rel err| < 1.15e-9 before polishing).
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def gaussian_q(zeta: float) -> float:
    """Gaussian tail probability Q(zeta) = P[N(0,1) > zeta]."""
    if not math.isfinite(zeta):
        raise ValueError(f"gaussian_q requires a finite argument, got {zeta}")
    return 0.5 * math.erfc(zeta / _SQRT2)


def _normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / _SQRT2PI


def _norm_ppf(p: float) -> float:
    """Inverse standard normal CDF (Acklam rational approximation)."""
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
               ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
               (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    q = math.sqrt(-2.0 * math.log(1.0 - p))
    return -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
        ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)


def gaussian_q_inv(p: float) -> float:
    """
    Inverse of gaussian_q on (0, 1); Newton-polished to ~1e-15 relative.

    p > 1/2 routes through the exact complement (1-p is exact for p in
    [1/2, 1]), so precision is limited only by what the argument itself
    can represent: near p = 1 the tail information is quantized at
    ulp(1), which caps any double implementation at ~1e-8 in x around
    x = -6.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"gaussian_q_inv requires p in (0, 1), got {p}")
    if p > 0.5:
        return -gaussian_q_inv(1.0 - p)
    x = -_norm_ppf(p)
    # Two Newton steps against the erfc-based Q; d/dx Q(x) = -pdf(x).
    for _ in range(2):
        pdf = _normal_pdf(x)
        if pdf <= 0.0:
            break
        x += (gaussian_q(x) - p) / pdf
    return x


def channel_dispersion(gamma: float) -> float:
    """Channel dispersion V = 1 - (1+gamma)^-2, monotone in gamma, range [0, 1)."""
    if gamma < 0.0:
        raise ValueError(f"channel_dispersion requires gamma >= 0, got {gamma}")
    return 1.0 - 1.0 / ((1.0 + gamma) * (1.0 + gamma))


def psi(gamma: float, blocklength: float, packet_bits: float) -> float:
    """
    Q-function argument for the decoding error probability:

        psi = ln2 * sqrt(M/V) * (log2(1+gamma) - D/M)

    D/M is the decoding rate required to fit D bits in M channel uses.
    Raises on gamma <= 0 where the dispersion vanishes; callers map that
    edge to eps = 1 (see decoding_error).
    """
    if gamma <= 0.0:
        raise ValueError("psi is singular at gamma <= 0 (zero dispersion)")
    if blocklength < 1 or packet_bits < 1:
        raise ValueError("blocklength and packet_bits must be >= 1")
    v = channel_dispersion(gamma)
    return LN2 * math.sqrt(blocklength / v) * (math.log2(1.0 + gamma) - packet_bits / blocklength)


def decoding_error(gamma: float, blocklength: float, packet_bits: float) -> float:
    """
    Decoding error probability eps = Q(psi(gamma, M, D)).

    gamma = 0 carries no signal and cannot convey D >= 1 bits, so eps = 1
    by convention rather than an error.
    """
    if gamma < 0.0:
        raise ValueError(f"decoding_error requires gamma >= 0, got {gamma}")
    if gamma == 0.0:
        return 1.0
    return gaussian_q(psi(gamma, blocklength, packet_bits))


def achievable_rate(gamma: float, blocklength: float, epsilon: float) -> float:
    """
    Achievable rate at blocklength M and error target eps (bits/channel use):

        R = log2(1+gamma) - sqrt(V/M) * Qinv(eps) / ln2

    clamped at 0 from below; tiny M or eps can push the raw expression
    negative, which is nonphysical.
    """
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"achievable_rate requires epsilon in (0, 1), got {epsilon}")
    if gamma <= 0.0:
        raise ValueError(f"achievable_rate requires gamma > 0, got {gamma}")
    if blocklength < 1:
        raise ValueError("blocklength must be >= 1")
    v = channel_dispersion(gamma)
    r = math.log2(1.0 + gamma) - math.sqrt(v / blocklength) * gaussian_q_inv(epsilon) / LN2
    return max(0.0, r)


@dataclass(frozen=True)
class FblPoint:
    """One evaluated finite-blocklength operating point."""

    gamma: float
    blocklength: int
    packet_bits: int
    epsilon: float
    rate: float

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")
        if self.blocklength < 1 or self.packet_bits < 1:
            raise ValueError("blocklength and packet_bits must be >= 1")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if self.rate < 0.0 or self.rate > math.log2(1.0 + self.gamma) + 1e-12:
            raise ValueError("rate must lie in [0, log2(1+gamma)]")

    @classmethod
    def evaluate(cls, gamma: float, blocklength: int, packet_bits: int) -> "FblPoint":
        """Evaluate eps and rate for (gamma, M, D); rate is 0 when gamma = 0."""
        eps = decoding_error(gamma, blocklength, packet_bits)
        rate = rate_at_error(gamma, blocklength, packet_bits, eps)
        return cls(gamma=gamma, blocklength=blocklength, packet_bits=packet_bits,
                   epsilon=eps, rate=rate)


def rate_at_error(gamma: float, blocklength: float, packet_bits: float,
                  epsilon: float) -> float:
    """
    Rate of a link operating at its own decoding error probability.

    Composing achievable_rate with eps = decoding_error(gamma, M, D) inverts
    exactly to D/M for gamma > 0; this wrapper also covers the numerical
    edges where eps underflows to 0 (analytic limit D/M) or saturates at 1
    (no signal, rate 0).
    """
    if gamma <= 0.0 or epsilon >= 1.0:
        return 0.0
    if epsilon <= 0.0:
        return packet_bits / blocklength
    return achievable_rate(gamma, blocklength, epsilon)
