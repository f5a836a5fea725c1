"""Heat kernels on the threshold interval with a point source at its top end.

``psi`` is the half-line kernel with reflection at ``hi``; ``phi`` is the
Neumann kernel on ``[lo, hi]`` (cosine series, or the equivalent image sum
for small times); ``omega`` is the Neumann solution for general initial data.
Tail masses ``Psi_tail``/``Phi_tail`` integrate the kernels over ``[x, hi]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .hysteresis import StructureError


class KernelDomainError(ValueError):
    """Kernel evaluated outside its domain (non-positive time, etc.)."""


class TruncationError(RuntimeError):
    """The cosine series would need more terms than the policy allows."""


@dataclass(frozen=True)
class ThresholdDomain:
    lo: float = 0.05
    hi: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.lo < self.hi < 0.5:
            raise StructureError(f"threshold domain must satisfy 0 < lo < hi < 1/2, got ({self.lo}, {self.hi})")

    @property
    def L(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class TruncationPolicy:
    """Series truncation settings.

    ``small_tau`` chooses what happens when ``max_terms`` is too few:
    ``"images"`` switches to the method-of-images sum, ``"raise"`` raises
    :class:`TruncationError`.
    """

    abs_tol: float = 1e-13
    max_terms: int = 4000
    small_tau: str = "images"

    def __post_init__(self):
        if not self.abs_tol > 0 or self.max_terms < 1:
            raise ValueError("need abs_tol > 0 and max_terms >= 1")
        if self.small_tau not in ("images", "raise"):
            raise ValueError(f"small_tau must be 'images' or 'raise', got {self.small_tau!r}")


DEFAULT_POLICY = TruncationPolicy()


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise KernelDomainError("kernel time must be positive")
    return tau


def erf_E(y):
    """Error function ``(2/sqrt(pi)) ∫_0^y exp(-z^2) dz`` (odd in ``y``)."""
    out = special.erf(np.asarray(y, dtype=float))
    return out if out.ndim else float(out)


def psi(x, tau, hi: float):
    """Half-line kernel ``(pi tau)^(-1/2) exp(-(hi - x)^2 / (4 tau))``."""
    tau = _check_tau(tau)
    x = np.asarray(x, dtype=float)
    out = np.exp(-((hi - x) ** 2) / (4.0 * tau)) / np.sqrt(np.pi * tau)
    return out if out.ndim else float(out)


def Psi_tail(x, tau, hi: float):
    """Mass of ``psi`` over ``[x, hi]``."""
    tau = _check_tau(tau)
    return erf_E((hi - np.asarray(x, dtype=float)) / (2.0 * np.sqrt(tau)))


def series_terms(tau: float, L: float, abs_tol: float, weight: float = 1.0) -> int:
    """Smallest ``N`` with the analytic cosine-series tail bound below ``abs_tol``.

    The tail ``weight * sum_{n>N} exp(-a n^2)``, ``a = (pi/L)^2 tau``, is
    bounded by ``weight * exp(-a (N+1)^2) / (1 - exp(-2 a (N+1)))``.
    """
    a = (math.pi / L) ** 2 * tau
    # solve the leading factor first, then walk up to absorb the denominator
    n = max(int(math.sqrt(max(math.log(weight / abs_tol), 0.0) / a)) - 1, 0)
    while True:
        m = n + 1
        bound = weight * math.exp(-a * m * m) / -math.expm1(-2.0 * a * m)
        if bound <= abs_tol:
            return n
        n += 1


def _image_range(tau: float, L: float, abs_tol: float) -> int:
    # terms beyond |k| = K sit farther than (2K - 1) L from every point of the domain
    K = 1
    while math.exp(-(((2 * K - 1) * L) ** 2) / (4.0 * tau)) / math.sqrt(math.pi * tau) > abs_tol * 1e-2:
        K += 1
    return K


def phi_images(x, tau: float, domain: ThresholdDomain, abs_tol: float = 1e-14):
    """Neumann kernel as a sum of reflected half-line kernels."""
    _check_tau(tau)
    x = np.asarray(x, dtype=float)
    K = _image_range(tau, domain.L, abs_tol)
    k = np.arange(-K, K + 1).reshape((-1,) + (1,) * x.ndim)
    out = np.sum(np.exp(-((x - domain.hi - 2.0 * k * domain.L) ** 2) / (4.0 * tau)), axis=0) / math.sqrt(math.pi * tau)
    return out if out.ndim else float(out)


def Phi_tail_images(x, tau: float, domain: ThresholdDomain, abs_tol: float = 1e-14):
    _check_tau(tau)
    x = np.asarray(x, dtype=float)
    K = _image_range(tau, domain.L, abs_tol)
    k = np.arange(-K, K + 1).reshape((-1,) + (1,) * x.ndim)
    s = 2.0 * math.sqrt(tau)
    out = np.sum(special.erf(-k * domain.L / math.sqrt(tau)) - special.erf((x - domain.hi - 2.0 * k * domain.L) / s), axis=0)
    return out if out.ndim else float(out)


def _resolve_terms(tau: float, domain: ThresholdDomain, pol: TruncationPolicy, weight: float) -> int | None:
    n = series_terms(tau, domain.L, pol.abs_tol, weight)
    if n <= pol.max_terms:
        return n
    if pol.small_tau == "raise":
        raise TruncationError(f"tau={tau:g} needs {n} cosine terms > max_terms={pol.max_terms}")
    return None


def phi(x, tau: float, domain: ThresholdDomain, pol: TruncationPolicy = DEFAULT_POLICY):
    """Neumann fundamental solution on ``[lo, hi]`` with source at ``hi``."""
    _check_tau(tau)
    L = domain.L
    n_terms = _resolve_terms(float(tau), domain, pol, 2.0 / L)
    if n_terms is None:
        return phi_images(x, tau, domain, pol.abs_tol)
    x = np.asarray(x, dtype=float)
    n = np.arange(1, n_terms + 1).reshape((-1,) + (1,) * x.ndim)
    terms = np.exp(-((n * math.pi / L) ** 2) * tau) * np.cos(n * math.pi * (domain.hi - x) / L)
    out = (1.0 + 2.0 * np.sum(terms, axis=0)) / L
    return out if out.ndim else float(out)


def Phi_tail(x, tau: float, domain: ThresholdDomain, pol: TruncationPolicy = DEFAULT_POLICY):
    """Mass of ``phi`` over ``[x, hi]``."""
    _check_tau(tau)
    L = domain.L
    n_terms = _resolve_terms(float(tau), domain, pol, 2.0 / math.pi)
    if n_terms is None:
        return Phi_tail_images(x, tau, domain, pol.abs_tol)
    x = np.asarray(x, dtype=float)
    n = np.arange(1, n_terms + 1).reshape((-1,) + (1,) * x.ndim)
    terms = np.exp(-((n * math.pi / L) ** 2) * tau) * np.sin(n * math.pi * (domain.hi - x) / L) * (2.0 / (n * math.pi))
    out = (domain.hi - x) / L + np.sum(terms, axis=0)
    return out if out.ndim else float(out)


@dataclass
class FourierProfile:
    """Cosine coefficients ``A_n = ∫ u0 cos(n pi (hi - x)/L) dx`` of initial data."""

    mass: float
    coeffs: np.ndarray
    domain: ThresholdDomain

    @property
    def mean(self) -> float:
        return self.mass / self.domain.L

    @classmethod
    def from_cells(cls, faces, averages, domain: ThresholdDomain, n_modes: int = 4000) -> "FourierProfile":
        """Coefficients of piecewise-constant data, integrated exactly per cell."""
        faces = np.asarray(faces, dtype=float)
        averages = np.asarray(averages, dtype=float)
        L = domain.L
        n = np.arange(1, n_modes + 1)[:, None]
        s = np.sin(n * math.pi * (domain.hi - faces[None, :]) / L)
        A = ((s[:, :-1] - s[:, 1:]) * averages[None, :]).sum(axis=1) * (L / (np.arange(1, n_modes + 1) * math.pi))
        return cls(float(np.dot(averages, np.diff(faces))), A, domain)

    @classmethod
    def from_samples(cls, x, values, domain: ThresholdDomain, n_modes: int | None = None) -> "FourierProfile":
        """Coefficients by composite Simpson on the sample points.

        Modes are capped at half the number of samples to stay below the
        grid's Nyquist limit.
        """
        x = np.asarray(x, dtype=float)
        values = np.asarray(values, dtype=float)
        cap = len(x) // 2
        n_modes = cap if n_modes is None else min(n_modes, cap)
        n = np.arange(1, n_modes + 1)[:, None]
        A = integrate.simpson(values[None, :] * np.cos(n * math.pi * (domain.hi - x[None, :]) / domain.L), x=x, axis=1)
        return cls(float(integrate.simpson(values, x=x)), A, domain)

    def _decay(self, s: float, abs_tol: float) -> tuple[np.ndarray, np.ndarray]:
        L = self.domain.L
        weight = 2.0 * max(abs(self.mass), float(np.max(np.abs(self.coeffs), initial=0.0))) / L
        n_use = min(series_terms(s, L, abs_tol, max(weight, abs_tol)), len(self.coeffs))
        n = np.arange(1, n_use + 1)
        return n, self.coeffs[:n_use] * np.exp(-((n * math.pi / L) ** 2) * s)


def omega(x, t: float, prof: FourierProfile, D: float, t0: float = 0.0, abs_tol: float = 1e-13):
    """Neumann heat solution at time ``t`` from the profile's data at ``t0``."""
    if not t > t0:
        raise KernelDomainError(f"need t > t0, got t={t}, t0={t0}")
    if not D > 0:
        raise KernelDomainError("diffusivity must be positive")
    L = prof.domain.L
    x = np.asarray(x, dtype=float)
    n, c = prof._decay(D * (t - t0), abs_tol)
    n = n.reshape((-1,) + (1,) * x.ndim)
    c = c.reshape((-1,) + (1,) * x.ndim)
    out = prof.mean + (2.0 / L) * np.sum(c * np.cos(n * math.pi * (prof.domain.hi - x) / L), axis=0)
    return out if out.ndim else float(out)


def omega_cell_average(faces, t: float, prof: FourierProfile, D: float, t0: float = 0.0, abs_tol: float = 1e-13) -> np.ndarray:
    """Exact cell averages of :func:`omega` over the cells given by ``faces``."""
    if not t > t0:
        raise KernelDomainError(f"need t > t0, got t={t}, t0={t0}")
    faces = np.asarray(faces, dtype=float)
    L = prof.domain.L
    n, c = prof._decay(D * (t - t0), abs_tol)
    s = np.sin(n[:, None] * math.pi * (prof.domain.hi - faces[None, :]) / L)
    integrals = ((s[:, :-1] - s[:, 1:]) * (c * L / (n * math.pi))[:, None]).sum(axis=0)
    return prof.mean + (2.0 / L) * integrals / np.diff(faces)


@dataclass
class KernelBoundReport:
    theta: float
    taus: np.ndarray
    sup_diff: np.ndarray
    normalized: np.ndarray
    c_fit: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def sup_phi_minus_psi(tau: float, domain: ThresholdDomain, n_x: int = 2001, pol: TruncationPolicy = DEFAULT_POLICY) -> float:
    x = np.linspace(domain.lo, domain.hi, n_x)
    return float(np.max(np.abs(phi(x, tau, domain, pol) - psi(x, tau, domain.hi))))


def verify_kernel_bounds(domain: ThresholdDomain, tau_grid, theta: float, n_x: int = 2001,
                         n_random: int = 100, seed: int = 0, pol: TruncationPolicy = DEFAULT_POLICY) -> KernelBoundReport:
    """Fit ``c(theta)`` in ``sup|phi - psi| <= c exp(-L^2/(5 tau))`` and spot-check it.

    The constant is the maximum of the normalized error over ``tau_grid``;
    the bound is then re-checked at random ``(x, tau)`` pairs inside the
    grid's range.  Violations are listed, not raised.
    """
    taus = np.sort(np.asarray(tau_grid, dtype=float))
    if taus[0] <= 0 or taus[-1] > theta:
        raise KernelDomainError("tau grid must lie in (0, theta]")
    L2 = domain.L ** 2
    sup = np.array([sup_phi_minus_psi(t, domain, n_x, pol) for t in taus])
    norm = sup * np.exp(L2 / (5.0 * taus))
    c_fit = float(norm.max())
    rng = np.random.default_rng(seed)
    violations = []
    xs = rng.uniform(domain.lo, domain.hi, n_random)
    ts = np.exp(rng.uniform(math.log(taus[0]), math.log(taus[-1]), n_random))
    for xv, tv in zip(xs, ts):
        diff = abs(phi(xv, tv, domain, pol) - psi(xv, tv, domain.hi))
        if diff > c_fit * math.exp(-L2 / (5.0 * tv)) * (1 + 1e-9):
            violations.append({"x": float(xv), "tau": float(tv), "diff": float(diff)})
    return KernelBoundReport(theta, taus, sup, norm, c_fit, violations)


def fit_omega_constant(domain: ThresholdDomain, eps0: float, delta0: float, s_grid, n_cells: int = 4000) -> float:
    """Smallest ``C`` with ``|omega/Omega0 - phi| <= C (delta0^2 s^-1.5 + eps0 s^-0.5)`` on ``s_grid``.

    Initial data: unit-mass bump on ``[hi - delta0, hi]`` mixed with a uniform
    background of density ``eps0`` (so the data ratio is ``eps0`` away from
    the top end).
    """
    faces = np.linspace(domain.lo, domain.hi, n_cells + 1)
    centers = 0.5 * (faces[:-1] + faces[1:])
    bump = (centers >= domain.hi - delta0).astype(float)
    bump /= np.dot(bump, np.diff(faces))
    beta = min(eps0 * domain.L, 1.0)
    data = (1.0 - beta) * bump + beta / domain.L
    prof = FourierProfile.from_cells(faces, data, domain)
    x = np.linspace(domain.lo, domain.hi, 1001)
    C = 0.0
    for s in np.asarray(s_grid, dtype=float):
        err = np.max(np.abs(omega(x, s, prof, 1.0) / prof.mass - phi(x, s, domain)))
        C = max(C, err / (delta0 ** 2 * s ** -1.5 + eps0 * s ** -0.5))
    return C


def sweep_rows(domain: ThresholdDomain, xs, taus, pol: TruncationPolicy = DEFAULT_POLICY):
    """Rows ``(x, tau, psi, phi, Phi_tail, Psi_tail, abs_diff)`` for a grid sweep."""
    xs = np.asarray(xs, dtype=float)
    for tau in taus:
        p1 = psi(xs, tau, domain.hi)
        p2 = phi(xs, tau, domain, pol)
        T2 = Phi_tail(xs, tau, domain, pol)
        T1 = Psi_tail(xs, tau, domain.hi)
        for row in zip(xs, np.full(xs.shape, tau), p1, p2, T2, T1, np.abs(p2 - p1)):
            yield tuple(float(v) for v in row)
