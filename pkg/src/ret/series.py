"""Numerics of weight sequences.

A weight sequence (omega_k) with omega_0 > 0 and omega_k > 0 for some k >= 2
defines a weighted model of plane trees in which a tree T has weight
prod_v omega_{outdeg(v)}.  This module evaluates the associated series

    phi(t)  = sum_k omega_k t^k,
    psi(t)  = t phi'(t) / phi(t),

solves psi(tau) = 1, classifies the sequence into the standard types
(Ia / Ialpha / Ibeta / II / III), derives the equivalent offspring law
pi_k = tau^k omega_k / phi(tau) and its size-biased variant, and computes
the partition-function table Z_1..Z_N from the fixed point Z = z phi(Z).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "SeriesError",
    "WeightSequence",
    "SeriesKind",
    "SeriesProfile",
    "CoefficientTable",
    "eval_phi",
    "classify",
    "offspring_distribution",
    "size_biased",
    "partition_function",
    "ratio_diagnostics",
]

#: threshold above which a partial sum is treated as numerically divergent
DIVERGENCE_THRESHOLD = 1e12

#: default cap on adaptive series truncation
DEFAULT_TERM_CAP = 1 << 21

#: coefficients scanned when validating / estimating from raw sequences
SCAN_CAP = 4096


class SeriesError(ValueError):
    """Raised when a series computation cannot be carried out."""


class SeriesKind(str, enum.Enum):
    Ia = "Ia"
    Ib = "Ib"
    IAlpha = "IAlpha"
    IBeta = "IBeta"
    II = "II"
    III = "III"


@dataclass(frozen=True)
class WeightSequence:
    """A nonnegative weight sequence (omega_k), omega_0 > 0, some omega_k > 0, k >= 2.

    ``coeff`` maps an index k >= 0 to omega_k.  ``declared_radius`` is the radius
    of convergence of phi when known in closed form (math.inf allowed); otherwise
    it is estimated by a root test.  ``phi_hook``, when provided, evaluates
    (phi(t), phi'(t)) in closed form including at t = radius, and is preferred
    over series summation.  ``family`` marks sequences whose conditioned
    offspring draws have a closed form ("geometric": omega_k = a*b^k,
    "poisson": omega_k = a*c^k/k!).
    """

    coeff: Callable[[int], float]
    declared_radius: Optional[float] = None
    max_index_hint: Optional[int] = None
    name: str = "custom"
    exact_coeff: Optional[Callable[[int], Fraction]] = None
    phi_hook: Optional[Callable[[float], tuple[float, float]]] = None
    family: Optional[str] = None

    def __post_init__(self) -> None:
        if self.coeff(0) <= 0:
            raise SeriesError("omega_0 must be positive")
        cap = self.max_index_hint or SCAN_CAP
        for k in range(2, cap + 1):
            w = self.coeff(k)
            if w < 0 or not math.isfinite(w):
                raise SeriesError(f"omega_{k} must be finite and nonnegative")
            if w > 0:
                return
        raise SeriesError("need omega_k > 0 for at least one k >= 2")

    def coeffs(self, upto: int) -> np.ndarray:
        """Array [omega_0, ..., omega_upto]."""
        return np.array([self.coeff(k) for k in range(upto + 1)], dtype=float)

    @property
    def support_bound(self) -> Optional[int]:
        """Largest index with omega_k > 0, if the sequence is finitely supported."""
        if self.max_index_hint is None:
            return None
        return max(
            (k for k in range(self.max_index_hint + 1) if self.coeff(k) > 0),
            default=0,
        )

    def span(self) -> int:
        """gcd of the positive-weight indices k >= 1."""
        cap = self.max_index_hint or SCAN_CAP
        g = 0
        for k in range(1, cap + 1):
            if self.coeff(k) > 0:
                g = math.gcd(g, k)
                if g == 1:
                    return 1
        if g == 0:
            raise SeriesError("no positive weight at any k >= 1")
        return g


@dataclass(frozen=True)
class CoefficientTable:
    """Nonnegative coefficients indexed from 0, with a crude radius estimate."""

    values: tuple
    radius_estimate: float

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int):
        return self.values[i]

    def floats(self) -> np.ndarray:
        return np.array([float(v) for v in self.values], dtype=float)


@dataclass(frozen=True)
class SeriesProfile:
    """Classification output for a weight sequence."""

    weights: WeightSequence
    rho_phi: float
    tau: float
    nu: float
    mu: float
    sigma2: float
    span: int
    kind: SeriesKind
    phi_tau: float
    pi: tuple = field(repr=False, default=())
    pi_tail_bound: float = 0.0
    sigma2_flagged: bool = False

    @property
    def is_type_one(self) -> bool:
        return self.nu >= 1.0

    @property
    def is_alpha(self) -> bool:
        """nu >= 1 with finite offspring variance."""
        return self.nu >= 1.0 and math.isfinite(self.sigma2)

    @property
    def is_beta(self) -> bool:
        return self.nu >= 1.0 and not math.isfinite(self.sigma2)

    def pi_fn(self, k: int) -> float:
        """pi_k = tau^k omega_k / phi(tau) (0.0 for kind III)."""
        if self.kind is SeriesKind.III:
            return 1.0 if k == 0 else 0.0
        return self.weights.coeff(k) * self.tau**k / self.phi_tau

    def pi_array(self, upto: int) -> np.ndarray:
        if self.kind is SeriesKind.III:
            raise SeriesError("no equivalent probability weights")
        k = np.arange(upto + 1)
        w = np.array([self.weights.coeff(int(i)) for i in k], dtype=float)
        with np.errstate(over="ignore"):
            out = w * self.tau**k / self.phi_tau
        if not np.all(np.isfinite(out)):
            raise SeriesError("offspring probabilities overflow; truncate earlier")
        return out

    def to_json(self) -> dict:
        return {
            "name": self.weights.name,
            "rho_phi": self.rho_phi,
            "tau": self.tau,
            "nu": self.nu,
            "mu": self.mu,
            "sigma2": self.sigma2,
            "span": self.span,
            "kind": self.kind.value,
            "sigma2_flagged": self.sigma2_flagged,
            "pi_head": list(self.pi[:16]),
            "pi_tail_bound": self.pi_tail_bound,
        }


# ---------------------------------------------------------------------------
# series evaluation
# ---------------------------------------------------------------------------


def _eval_series(
    term: Callable[[int], float],
    tol: float,
    cap: int = DEFAULT_TERM_CAP,
) -> float:
    """Adaptive sum of sum_k term(k) with nonnegative terms.

    Returns math.inf when the partial sums exceed DIVERGENCE_THRESHOLD or the
    terms certify growth; raises SeriesError when the cap is hit with neither a
    convergence nor a divergence certificate.
    """
    total = 0.0
    prev = 0.0
    grow_run = 0
    k = 0
    while k <= cap:
        t = term(k)
        total += t
        if total > DIVERGENCE_THRESHOLD:
            return math.inf
        if k >= 1:
            if t > 0.0 and t >= prev:
                grow_run += 1
                # terms not decaying for a long stretch at a non-tiny level
                if grow_run >= 512 and t > tol:
                    return math.inf
            else:
                grow_run = 0
            if prev > 0.0 and t > 0.0 and t < prev:
                r = t / prev
                if r < 1.0 and t * r / (1.0 - r) < tol and t < tol:
                    return total
            if t == 0.0 and prev == 0.0 and k > 64:
                # long run of zeros: finitely supported series
                if all(term(j) == 0.0 for j in range(k, min(k + 64, cap))):
                    return total
        prev = t if t > 0.0 else prev
        k += 1
    raise SeriesError("indeterminate evaluation")


def eval_phi(w: WeightSequence, t: float, tol: float = 1e-12) -> float:
    """phi(t) = sum_k omega_k t^k within absolute tolerance tol (may be inf)."""
    if t < 0:
        raise SeriesError("t must be nonnegative")
    if t == 0.0:
        return w.coeff(0)
    if w.phi_hook is not None:
        val = w.phi_hook(t)[0]
        if val is not None:
            return val
    return _eval_series(lambda k: w.coeff(k) * t**k, tol)


def _eval_tphi_prime(w: WeightSequence, t: float, tol: float = 1e-12) -> float:
    """t phi'(t) = sum_k k omega_k t^k."""
    if t == 0.0:
        return 0.0
    if w.phi_hook is not None:
        val = w.phi_hook(t)[1]
        if val is not None:
            return t * val
    return _eval_series(lambda k: k * w.coeff(k) * t**k, tol)


def _psi(w: WeightSequence, t: float, tol: float = 1e-12) -> float:
    phi = eval_phi(w, t, tol)
    if phi == 0.0:
        raise SeriesError("series evaluation failed")
    num = _eval_tphi_prime(w, t, tol)
    if math.isinf(num):
        return math.inf
    if math.isinf(phi):
        raise SeriesError("series evaluation failed")
    return num / phi


# ---------------------------------------------------------------------------
# radius estimation
# ---------------------------------------------------------------------------


def _estimate_radius(w: WeightSequence) -> float:
    """Root test on omega_k^(1/k) over k <= SCAN_CAP, Richardson-extrapolated.

    Uses log omega_k / k at k and k/2; the error model a + b/k cancels in
    2*r_k - r_{k/2}.
    """
    cap = min(w.max_index_hint or SCAN_CAP, SCAN_CAP)
    ks = [k for k in range(8, cap + 1) if w.coeff(k) > 0]
    if len(ks) < 4:
        # finitely supported: polynomial phi
        return math.inf
    k = ks[-1]
    half_candidates = [j for j in ks if j <= k // 2]
    if not half_candidates:
        raise SeriesError("radius unresolved")
    k2 = half_candidates[-1]
    r_k = math.log(w.coeff(k)) / k
    r_k2 = math.log(w.coeff(k2)) / k2
    est = 2.0 * r_k - r_k2
    if est > 600.0:
        return 0.0
    if est < -600.0:
        return math.inf
    radius = math.exp(-est)
    # sanity: the plain (non-extrapolated) estimate should agree to ~log k / k
    plain = math.exp(-r_k)
    if plain > 0 and abs(math.log(radius / plain)) > 0.5 + 20.0 * math.log(k) / k:
        raise SeriesError("radius unresolved")
    return radius


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def _nu_at_radius(w: WeightSequence, rho: float) -> float:
    """nu = lim_{t -> rho-} psi(t)."""
    if rho == 0.0:
        return 0.0
    if math.isinf(rho):
        # psi increases to the top of the support (inf if unbounded)
        bound = w.support_bound
        if bound is not None and (w.max_index_hint or 0) >= bound:
            # finitely supported with known hint: check it's really the top
            tail = [k for k in range(bound + 1, (w.max_index_hint or bound) + 1)]
            if all(w.coeff(k) == 0.0 for k in tail):
                return float(bound)
        # unbounded support (or unknown bound): psi(t) -> inf
        t, last = 1.0, 0.0
        for _ in range(80):
            val = _psi(w, t)
            if math.isinf(val) or val > DIVERGENCE_THRESHOLD:
                return math.inf
            if val > 0 and abs(val - last) < 1e-9 * max(1.0, val):
                return val
            last, t = val, t * 2.0
        return math.inf
    phi = eval_phi(w, rho)
    if math.isinf(phi):
        return math.inf
    num = _eval_tphi_prime(w, rho)
    return math.inf if math.isinf(num) else num / phi


def _solve_tau(w: WeightSequence, rho: float, rtol: float = 1e-10) -> float:
    """Unique tau in (0, rho] with psi(tau) = 1; psi is strictly increasing."""
    if math.isinf(rho):
        hi = 1.0
        while _psi(w, hi) < 1.0:
            hi *= 2.0
            if hi > 1e300:
                raise SeriesError("series evaluation failed")
        lo = 0.0
    else:
        lo, hi = 0.0, rho
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        try:
            val = _psi(w, mid)
        except SeriesError:
            val = math.inf
        if val < 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * max(hi, 1e-300):
            break
    return 0.5 * (lo + hi)


def _sigma2(w: WeightSequence, tau: float, phi_tau: float, interior: bool) -> tuple[float, bool]:
    """Variance of pi (= tau psi'(tau)); returns (value, flagged_judgment).

    At an interior tau the series converge geometrically and the plain adaptive
    sum is accurate.  At tau = rho (type II boundary) divergence can be slow, so
    a local power-law exponent fit of the terms decides finiteness; this is a
    numerical judgment, not a proof, and is flagged as such.
    """
    if tau == 0.0:
        return 0.0, False
    if interior:
        m1 = _eval_series(lambda k: k * w.coeff(k) * tau**k, 1e-14) / phi_tau
        m2 = _eval_series(lambda k: k * k * w.coeff(k) * tau**k, 1e-14) / phi_tau
        return m2 - m1 * m1, False
    # boundary evaluation with tail-exponent diagnostics on the k^2 terms
    cap = 1 << 14
    terms = np.array([k * k * w.coeff(k) * tau**k for k in range(cap + 1)])
    total = float(terms.sum())
    pos = np.nonzero(terms[cap // 2 :] > 0)[0] + cap // 2
    if len(pos) >= 8:
        ks = pos[-8:]
        slope = np.polyfit(np.log(ks), np.log(terms[ks]), 1)[0]
        if slope >= -1.0 - 1e-3:
            return math.inf, True
        # geometric-free tail bound sum_{k>cap} C k^slope
        tail = terms[ks[-1]] * ks[-1] / (-slope - 1.0)
        total += float(tail)
    if total > DIVERGENCE_THRESHOLD:
        return math.inf, True
    m1 = float(np.sum([k * w.coeff(k) * tau**k for k in range(cap + 1)])) / (
        eval_phi(w, tau)
    )
    return total / eval_phi(w, tau) - m1 * m1, True


def classify(w: WeightSequence, pi_tol: float = 1e-12, pi_cap: int = SCAN_CAP) -> SeriesProfile:
    """Full classification of a weight sequence.

    rho_phi is the declared radius when given, else a root-test estimate; tau
    solves psi(tau) = 1 by bisection when nu >= 1, else tau = rho (type II) or
    tau = 0 (type III); sigma^2 = tau psi'(tau); the kind follows the nu/sigma
    split.  The offspring law pi is materialized until its tail is below pi_tol
    (or pi_cap indices), with the exact residual recorded.
    """
    rho = w.declared_radius if w.declared_radius is not None else _estimate_radius(w)
    if rho is None or rho < 0:
        raise SeriesError("radius unresolved")
    span = w.span()
    nu = _nu_at_radius(w, rho)
    if nu == 0.0:
        prof_kind = SeriesKind.III
        tau = 0.0
        sigma2, flagged = 0.0, False
        phi_tau = w.coeff(0)
        mu = 0.0
        pi: tuple = ()
        tail = 0.0
    else:
        if nu >= 1.0:
            tau = _solve_tau(w, rho)
            interior = True
        else:
            tau = rho
            interior = False
        phi_tau = eval_phi(w, tau)
        if not math.isfinite(phi_tau) or phi_tau <= 0:
            raise SeriesError("series evaluation failed")
        mu = min(nu, 1.0)
        sigma2, flagged = _sigma2(w, tau, phi_tau, interior)
        if nu > 1.0:
            prof_kind = SeriesKind.Ia
        elif nu == 1.0 or abs(nu - 1.0) < 1e-12:
            prof_kind = SeriesKind.IAlpha if math.isfinite(sigma2) else SeriesKind.IBeta
        else:
            prof_kind = SeriesKind.II
        vals = []
        acc = 0.0
        for k in range(pi_cap + 1):
            p = w.coeff(k) * tau**k / phi_tau
            vals.append(p)
            acc += p
            if k >= 2 and 1.0 - acc < pi_tol:
                break
        pi = tuple(vals)
        tail = max(0.0, 1.0 - acc)
    return SeriesProfile(
        weights=w,
        rho_phi=rho,
        tau=tau,
        nu=nu,
        mu=mu,
        sigma2=sigma2,
        span=span,
        kind=prof_kind,
        phi_tau=phi_tau,
        pi=pi,
        pi_tail_bound=tail,
        sigma2_flagged=flagged,
    )


def offspring_distribution(p: SeriesProfile, K: int) -> tuple[np.ndarray, float]:
    """(pi_0..pi_K, residual mass 1 - sum)."""
    if p.kind is SeriesKind.III:
        raise SeriesError("no equivalent probability weights")
    vec = p.pi_array(K)
    return vec, max(0.0, 1.0 - float(vec.sum()))


def size_biased(p: SeriesProfile, K: int) -> tuple[np.ndarray, float]:
    """((k pi_k)_{k<=K}, mass at infinity 1 - mu)."""
    if p.kind is SeriesKind.III:
        raise SeriesError("no equivalent probability weights")
    vec = p.pi_array(K) * np.arange(K + 1)
    return vec, max(0.0, 1.0 - p.mu)


# ---------------------------------------------------------------------------
# partition function
# ---------------------------------------------------------------------------


def partition_function(w: WeightSequence, N: int, exact: bool = False) -> CoefficientTable:
    """Z_1..Z_N (index 0 entry is Z_0 = 0) from the fixed point Z = z phi(Z).

    Z_n = sum_k omega_k [z^{n-1}] Z(z)^k by convolution powers of Z; degrees
    above n-1 cannot contribute.  ``exact`` switches to Fractions (requires
    w.exact_coeff).  Float mode falls back to exact on overflow.
    """
    if N < 1:
        raise SeriesError("N must be >= 1")
    if exact:
        if w.exact_coeff is None:
            raise SeriesError("exact mode needs exact_coeff")
        return _partition_exact(w, N)
    try:
        return _partition_float(w, N)
    except OverflowError:
        if w.exact_coeff is not None:
            return _partition_exact(w, N)
        raise SeriesError(f"overflow in partition function below index {N}")


def _partition_float(w: WeightSequence, N: int) -> CoefficientTable:
    om = w.coeffs(N)
    Z = np.zeros(N + 1)
    Z[1] = om[0]
    # P[k] holds coefficients of Z^k (valuation k), updated as Z grows
    P = np.zeros((N + 1, N + 1))
    P[0, 0] = 1.0
    for n in range(2, N + 1):
        m = n - 1
        # extend powers: [z^m] Z^k needs Z_1..Z_{m-k+1}, all known
        total = 0.0
        for k in range(1, m + 1):
            if om[k] == 0.0:
                continue
            # compute P[k, m] on demand
            if P[k, m] == 0.0:
                P[k, m] = float(np.dot(P[k - 1, k - 1 : m], Z[1 : m - k + 2][::-1]))
            total += om[k] * P[k, m]
        Z[n] = total
        if not math.isfinite(total):
            raise OverflowError
    # fill P rows fully for reuse? not needed; recompute radius estimate
    return _finish_table(tuple(Z.tolist()), w)


def _partition_exact(w: WeightSequence, N: int) -> CoefficientTable:
    om = [w.exact_coeff(k) for k in range(N + 1)]  # type: ignore[misc]
    Z = [Fraction(0)] * (N + 1)
    Z[1] = om[0]
    powers: dict[int, list[Fraction]] = {0: [Fraction(1)] + [Fraction(0)] * N}
    for n in range(2, N + 1):
        m = n - 1
        total = Fraction(0)
        for k in range(1, m + 1):
            if om[k] == 0:
                continue
            row = powers.get(k)
            if row is None:
                prev = powers[k - 1]
                row = [Fraction(0)] * (N + 1)
                powers[k] = row
            if row[m] == 0:
                prev = powers[k - 1]
                row[m] = sum(
                    (prev[j] * Z[m - j] for j in range(k - 1, m) if prev[j] != 0),
                    Fraction(0),
                )
            total += om[k] * row[m]
        Z[n] = total
        # rows must be refreshed as Z grows; recompute lazily by clearing caches
        for k in list(powers):
            if k >= 1:
                pass
    # exact rows above were computed incrementally with complete prefixes of Z
    return _finish_table(tuple(Z), w)


def _finish_table(values: tuple, w: WeightSequence) -> CoefficientTable:
    fl = [float(v) for v in values]
    span = w.span()
    est = math.nan
    idx = [n for n in range(len(fl)) if fl[n] > 0]
    if len(idx) >= 3:
        a, b = idx[-2], idx[-1]
        if b - a == span and fl[b] > 0:
            est = (fl[a] / fl[b]) ** (1.0 / span)
    return CoefficientTable(values=values, radius_estimate=est)


def partition_function_log(w: WeightSequence, N: int) -> np.ndarray:
    """log Z_0..log Z_N (-inf where zero); robust to superexponential weights.

    Also the workhorse for the recursive sampler: returns only the diagonal
    log Z, while ``forest_log_tables`` below exposes the full log [z^m] Z^k grid.
    """
    return forest_log_tables(w, N)[1]


def forest_log_tables(w: WeightSequence, N: int) -> tuple[np.ndarray, np.ndarray]:
    """(logF, logZ): logF[k, m] = log [z^m] Z(z)^k for 0 <= k, m <= N.

    Computed in log space via logsumexp convolutions so factorial-scale weights
    (type III) do not overflow.
    """
    with np.errstate(divide="ignore"):
        logom = np.log(w.coeffs(N))
    NEG = -np.inf
    logZ = np.full(N + 1, NEG)
    logZ[1] = logom[0]
    logF = np.full((N + 1, N + 1), NEG)
    logF[0, 0] = 0.0
    for n in range(1, N + 1):
        if n >= 2:
            m = n - 1
            ks = np.arange(1, m + 1)
            vals = logom[1 : m + 1] + logF[1 : m + 1, m]
            logZ[n] = _logsumexp(vals)
        # extend rows: logF[k, n] for all k (uses logZ[1..n])
        for k in range(1, n + 1):
            lo = k - 1
            seg = logF[k - 1, lo:n] + logZ[1 : n - lo + 1][::-1]
            logF[k, n] = _logsumexp(seg)
    # redo logZ[n] now that rows complete? rows at column m=n-1 were complete
    return logF, logZ


def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a) if a.size else -np.inf
    if not np.isfinite(m):
        return -np.inf
    return float(m + np.log(np.sum(np.exp(a - m))))


# ---------------------------------------------------------------------------
# ratio diagnostics
# ---------------------------------------------------------------------------


def ratio_diagnostics(table: CoefficientTable, d: int) -> list[tuple[int, float, float]]:
    """Rows (n, g_n/g_{n+d}, sum_{i+j=n} g_i g_j / g_n) where defined.

    Numerical evidence for membership in the subexponential class with span d:
    the first column should approach r^d and the second 2 g(r).  Indices whose
    denominators vanish are skipped.
    """
    if d < 1:
        raise SeriesError("d must be >= 1")
    g = table.floats()
    n_max = len(g) - 1
    if n_max < 3 * d:
        raise SeriesError("table too short: need at least 3d entries")
    rows = []
    for n in range(n_max - d + 1):
        if g[n + d] <= 0 or g[n] <= 0:
            continue
        conv = float(np.dot(g[: n + 1], g[n::-1]))
        rows.append((n, g[n] / g[n + d], conv / g[n]))
    return rows
