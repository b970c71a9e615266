"""Dimension/order bookkeeping: normalization constant and critical exponents.

The only special function needed at this layer is the real Gamma function,
implemented locally (Lanczos approximation, g=7) so the constants do not
depend on any external special-function library.
"""

import math
from dataclasses import dataclass, field

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x: float) -> float:
    """Real Gamma function, accurate to at least 12 significant digits.

    Lanczos approximation with reflection for x < 0.5.  Raises ValueError at
    the poles (non-positive integers).
    """
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise ValueError(f"gamma pole at non-positive integer x={x}")
    if x < 0.5:
        # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += c / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


def beta_function(a: float, b: float) -> float:
    """Euler Beta function B(a, b) via the local Gamma."""
    return gamma(a) * gamma(b) / gamma(a + b)


@dataclass(frozen=True)
class FracParams:
    """Ambient dimension n >= 2 and fractional order s in (0, 1).

    ``s_strict`` records whether s > 1/2; the boundary-trace machinery needs
    that, the kernels and sphere operators do not.
    """

    n: int
    s: float
    s_strict: bool = field(init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension n must be an integer >= 2, got {self.n}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"order s must lie in (0, 1), got {self.s}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "s_strict", self.s > 0.5)

    @property
    def q(self) -> float:
        """The recurring kernel exponent n/2 + s."""
        return 0.5 * self.n + self.s


@dataclass(frozen=True)
class CriticalExponents:
    """The three thresholds p1 < p2 < p3 separating solvability regimes.

    p3 is None when n <= 2s (then it is +infinity); with integer n >= 2 and
    s < 1 that never happens, but the representation is kept uniform.
    """

    p1: float
    p2: float
    p3: float | None

    @property
    def p3_or_inf(self) -> float:
        return math.inf if self.p3 is None else self.p3


def normalization_constant(params: FracParams) -> float:
    """a_{N,s} = Gamma(N/2+s) s(1-s) / (pi^{N/2} Gamma(2-s))."""
    n, s = params.n, params.s
    return gamma(0.5 * n + s) * s * (1.0 - s) / (math.pi ** (0.5 * n) * gamma(2.0 - s))


def critical_exponents(params: FracParams) -> CriticalExponents:
    """p1 = (N+2s)/N, p2 = (N+s)/(N-s), p3 = N/(N-2s) (None if N <= 2s)."""
    n, s = params.n, params.s
    p1 = (n + 2.0 * s) / n
    p2 = (n + s) / (n - s)
    p3 = n / (n - 2.0 * s) if n > 2.0 * s else None
    return CriticalExponents(p1, p2, p3)


def marcinkiewicz_exponent(params: FracParams, gamma_w: float) -> float:
    """Weak-space exponent k_{s,gamma} for the rho^gamma-weighted Green estimate.

    Equals p3 on the first branch gamma in [0, (N-2s)s/N) and
    (N+s)/(N-2s+gamma) on [(N-2s)s/N, s]; the branches agree at the split.
    """
    n, s = params.n, params.s
    if not 0.0 <= gamma_w <= s:
        raise ValueError(f"gamma must lie in [0, s]=[0, {s}], got {gamma_w}")
    split = (n - 2.0 * s) * s / n
    if gamma_w < split:
        return critical_exponents(params).p3_or_inf
    return (n + s) / (n - 2.0 * s + gamma_w)


def beta_of_p(params: FracParams, p: float) -> float:
    """Separable-solution exponent beta = 2s/(p-1).

    Decreasing bijection of (p1, p3) onto (N-2s, N): p > p1 iff beta < N and
    p < p3 iff beta > N-2s.
    """
    if p <= 1.0:
        raise ValueError(f"p must exceed 1, got {p}")
    return 2.0 * params.s / (p - 1.0)


def p_of_beta(params: FracParams, beta: float) -> float:
    """Inverse of beta_of_p: p = 1 + 2s/beta for beta > 0."""
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    return 1.0 + 2.0 * params.s / beta
