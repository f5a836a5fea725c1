"""Time integration of the biomass/nutrient/input system with distributed relays.

The density ``u(x, t)`` lives on a finite-volume grid over the threshold
interval (cell averages, zero-flux ends).  Each step is Strang-split:
half a Crank-Nicolson diffusion step, the reaction stage for
``(u, v, w)`` with relay switching, and another half diffusion step.

Inside the reaction stage the relay state is never frozen: every RK stage
evaluates the configuration reached by moving the input monotonically from
the stage's starting value, so a front dragged by the input (sliding) moves
continuously with it.  Turning points of ``w`` and structural events
(births, collisions, exits) are localized by bisection on the stage length.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

from .hysteresis import MonotoneSegment, SimpleConfig, StructureError, config_update, preisach, signed_mass_fraction
from .kernels import ThresholdDomain

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    """Step control or event localization failed."""


class InitialDataError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    faces: np.ndarray

    @classmethod
    def graded(cls, domain: ThresholdDomain, n: int, grading: float = 4.0, fine_fraction: float = 0.1) -> "Grid":
        """``n`` cells with density ``grading`` times higher in the top ``fine_fraction`` of the domain.

        The density switches smoothly (tanh blend over 1% of the domain), so
        neighbouring cells differ in width by at most about one percent.
        """
        if n < 2 or grading < 1.0 or not 0.0 < fine_fraction < 1.0:
            raise StructureError("grid needs n >= 2, grading >= 1 and 0 < fine_fraction < 1")
        xi = np.linspace(0.0, 1.0, 40001)
        rho = 1.0 + (grading - 1.0) * 0.5 * (1.0 + np.tanh((xi - (1.0 - fine_fraction)) / 0.01))
        cdf = integrate.cumulative_trapezoid(rho, xi, initial=0.0)
        cdf /= cdf[-1]
        faces = domain.lo + domain.L * np.interp(np.linspace(0.0, 1.0, n + 1), cdf, xi)
        faces[0], faces[-1] = domain.lo, domain.hi
        return cls(faces)

    @classmethod
    def uniform(cls, domain: ThresholdDomain, n: int) -> "Grid":
        return cls(np.linspace(domain.lo, domain.hi, n + 1))

    @property
    def n(self) -> int:
        return len(self.faces) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.faces)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.faces[:-1] + self.faces[1:])

    def cell_of(self, x: float) -> int:
        return int(min(max(np.searchsorted(self.faces, x) - 1, 0), self.n - 1))


@dataclass(frozen=True)
class ModelParams:
    domain: ThresholdDomain = field(default_factory=ThresholdDomain)
    D: float = 1e-5
    grid_n: int = 4000
    grid_grading: float = 4.0
    grid_fine_fraction: float = 0.1
    dt_init: float = 1e-7
    dt_max: float = 1e-2
    dU_max: float = 2e-3
    tol_event: float = 1e-10
    tol_series: float = 1e-13

    def __post_init__(self):
        if not self.D > 0:
            raise StructureError("diffusivity must be positive")
        if not 0 < self.dt_init <= self.dt_max:
            raise StructureError("need 0 < dt_init <= dt_max")

    @property
    def mu(self) -> float:
        return 0.5 - self.domain.hi

    def make_grid(self) -> Grid:
        return Grid.graded(self.domain, self.grid_n, self.grid_grading, self.grid_fine_fraction)


@dataclass
class InitialData:
    u0: np.ndarray
    v0: float
    w0: float
    r0: SimpleConfig
    eps: float | None = None


@dataclass
class SystemState:
    t: float
    u: np.ndarray
    v: float
    w: float
    cfg: SimpleConfig

    def copy(self) -> "SystemState":
        return SystemState(self.t, self.u.copy(), self.v, self.w, self.cfg)


def bump_profile(grid: Grid, eps: float) -> np.ndarray:
    """Unit-mass indicator of ``[hi - eps, hi]`` as exact cell averages."""
    hi = grid.faces[-1]
    overlap = np.clip(grid.faces[1:] - np.maximum(grid.faces[:-1], hi - eps), 0.0, None)
    if overlap.sum() <= 0:
        raise InitialDataError(f"bump width {eps} does not cover any cell")
    return overlap / grid.widths / overlap.sum()


def uniform_profile(grid: Grid) -> np.ndarray:
    return np.full(grid.n, 1.0 / (grid.faces[-1] - grid.faces[0]))


def satisfies_concentration(grid: Grid, u0: np.ndarray, eps: float) -> bool:
    """``u0 <= eps`` on every cell lying inside ``[lo, hi - eps]``."""
    inside = grid.faces[1:] <= grid.faces[-1] - eps
    return bool(np.all(u0[inside] <= eps))


def mass_functions(state: SystemState, grid: Grid) -> tuple[float, np.ndarray]:
    """Total mass and tail masses ``U`` at the grid faces (``U[-1] = 0``)."""
    m = state.u * grid.widths
    U = np.concatenate((np.cumsum(m[::-1])[::-1], [0.0]))
    return float(U[0]), U


def tail_mass(grid: Grid, u: np.ndarray, x) -> np.ndarray:
    m = u * grid.widths
    U = np.concatenate((np.cumsum(m[::-1])[::-1], [0.0]))
    return np.interp(x, grid.faces, U)


def nutrient_split(state: SystemState) -> tuple[float, float]:
    """Amounts ``(f1, f-1)`` of the two nutrients."""
    return state.v * (0.5 + state.w), state.v * (0.5 - state.w)


class Diffusion:
    """Crank-Nicolson for ``u_t = D u_xx`` with zero flux, finite-volume form.

    ``M du/dt = K u`` with ``M = diag(widths)`` and ``K`` the symmetric flux
    matrix, so ``1^T K = 0`` and the scheme conserves ``sum(widths * u)``.
    """

    def __init__(self, grid: Grid, D: float):
        self.h = grid.widths
        c = grid.centers
        self.k = D / np.diff(c)
        self._cache: dict[float, np.ndarray] = {}

    def _apply_K(self, u):
        flux = self.k * np.diff(u)
        out = np.zeros_like(u)
        out[:-1] += flux
        out[1:] -= flux
        return out

    def _matrix(self, dt: float, theta: float) -> np.ndarray:
        key = (dt, theta)
        ab = self._cache.get(key)
        if ab is None:
            n = len(self.h)
            diag = self.h.copy()
            diag[:-1] += theta * dt * self.k
            diag[1:] += theta * dt * self.k
            ab = np.zeros((2, n))
            ab[0, 1:] = -theta * dt * self.k
            ab[1] = diag
            ab = linalg.cholesky_banded(ab)
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[key] = ab
        return ab

    def step(self, u: np.ndarray, dt: float, implicit: bool = False) -> np.ndarray:
        """One Crank-Nicolson step, or backward Euler with ``implicit=True``.

        Backward Euler damps grid-scale modes that Crank-Nicolson keeps alive
        when ``D dt / h^2`` is large; a few such steps smooth rough data.
        """
        if not dt > 0:
            raise IntegrationError("diffusion step needs dt > 0")
        theta = 1.0 if implicit else 0.5
        rhs = self.h * u + (1.0 - theta) * dt * self._apply_K(u)
        out = linalg.cho_solve_banded((self._matrix(dt, theta), False), rhs)
        # the solve loses mass at round-off times the condition number, which
        # grows like D dt / h^2; the exact scheme conserves it, so restore it
        m0, m1 = float(np.dot(self.h, u)), float(np.dot(self.h, out))
        if m1 > 0.0 and m0 > 0.0:
            out *= m0 / m1
        return out


def pure_diffusion(u0: np.ndarray, grid: Grid, D: float, times, dt_max: float, n_damp: int = 4) -> list[np.ndarray]:
    """Profiles of ``u_t = D u_xx`` at the requested ``times``.

    Crank-Nicolson with steps of ``dt_max`` (shortened to hit each output
    time), preceded by ``n_damp`` backward-Euler half steps so that
    discontinuous data does not leave an undamped grid-scale oscillation.
    """
    diff = Diffusion(grid, D)
    u = np.asarray(u0, dtype=float).copy()
    t, k = 0.0, 0
    out = []
    for target in sorted(float(t) for t in times):
        while target - t > 1e-14 * max(1.0, target):
            h = min(0.5 * dt_max if k < n_damp else dt_max, target - t)
            u = diff.step(u, h, implicit=k < n_damp)
            t += h
            k += 1
        out.append(u.copy())
    return out


def diffusion_substep(u: np.ndarray, D: float, dt: float, grid: Grid) -> np.ndarray:
    """One CN step; builds a throwaway operator (use :class:`Diffusion` in loops)."""
    return Diffusion(grid, D).step(u, dt)


@dataclass
class LoggedEvent:
    kind: str
    t: float
    position: float
    origin: float | None = None
    U_ratio: float | None = None
    n_fronts: int = 0
    w: float = 0.0

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class Record:
    t: float
    v: float
    w: float
    U_bar: float
    cfg: SimpleConfig
    probes: np.ndarray | None = None
    u: np.ndarray | None = None
    events: list = field(default_factory=list)
    P: float = math.nan

    @property
    def dw(self) -> float:
        """Input velocity ``-(1/2 + w)(1/2 - w) P`` at the snapshot."""
        return -(0.5 + self.w) * (0.5 - self.w) * self.P


@dataclass
class MonitorReport:
    """Worst observed values of the a-priori bounds along a run."""

    v0: float
    mu: float
    hi: float
    max_v_ratio: float = 0.0
    max_Ubar_drop: float = 0.0
    max_abs_w: float = 0.0
    min_u: float = math.inf
    max_conservation_error: float = 0.0
    steps: int = 0

    def observe(self, prev: SystemState, cur: SystemState, Ubar_prev: float, Ubar: float):
        self.steps += 1
        if self.v0 > 0:
            self.max_v_ratio = max(self.max_v_ratio, cur.v / (self.v0 * math.exp(-self.mu * cur.t)))
        self.max_Ubar_drop = max(self.max_Ubar_drop, Ubar_prev - Ubar)
        self.max_abs_w = max(self.max_abs_w, abs(cur.w))
        self.min_u = min(self.min_u, float(cur.u.min()))
        self.max_conservation_error = max(self.max_conservation_error, abs(Ubar + cur.v - (1.0 + self.v0)))

    def violations(self, v_tol=1e-6, drop_tol=1e-8, u_tol=1e-12, cons_tol=1e-6) -> list[str]:
        out = []
        if self.max_v_ratio > 1.0 + v_tol:
            out.append(f"v exceeded v0*exp(-mu t) by ratio {self.max_v_ratio:.12g}")
        if self.max_Ubar_drop > drop_tol:
            out.append(f"total mass dropped by {self.max_Ubar_drop:.3e} in one step")
        if self.max_abs_w > self.hi:
            out.append(f"|w| reached {self.max_abs_w:.17g} > hi")
        if self.min_u < -u_tol:
            out.append(f"u reached {self.min_u:.3e}")
        if self.max_conservation_error > cons_tol:
            out.append(f"|U + v - (1 + v0)| reached {self.max_conservation_error:.3e}")
        return out


@dataclass
class TimeSeries:
    grid: Grid
    params: ModelParams
    records: list[Record] = field(default_factory=list)
    events: list[LoggedEvent] = field(default_factory=list)
    probes_x: np.ndarray | None = None
    monitor: MonitorReport | None = None
    final: SystemState | None = None
    stop_reason: str = ""
    initial: InitialData | None = None

    @property
    def t(self) -> np.ndarray:
        return np.array([r.t for r in self.records])


def init(params: ModelParams, data: InitialData, grid: Grid | None = None, check_concentration: bool = False,
         mass_tol: float = 1e-8) -> SystemState:
    """Validate initial data and apply ``w0`` to the initial relay state."""
    grid = grid or params.make_grid()
    u0 = np.asarray(data.u0, dtype=float)
    if u0.shape != (grid.n,):
        raise InitialDataError(f"u0 has shape {u0.shape}, grid has {grid.n} cells")
    if np.any(u0 < 0) or not np.all(np.isfinite(u0)):
        raise InitialDataError("u0 must be finite and nonnegative")
    mass = float(np.dot(u0, grid.widths))
    if abs(mass - 1.0) > mass_tol:
        raise InitialDataError(f"u0 has mass {mass!r}, expected 1")
    if data.v0 < 0:
        raise InitialDataError("v0 must be nonnegative")
    hi = params.domain.hi
    if abs(data.w0) > hi:
        raise InitialDataError(f"|w0| = {abs(data.w0)} exceeds hi = {hi}")
    r0 = data.r0
    if not (np.isclose(r0.lo, params.domain.lo) and np.isclose(r0.hi, hi)):
        raise InitialDataError("initial relay configuration is defined on a different domain")
    if check_concentration:
        if data.eps is None or not satisfies_concentration(grid, u0, data.eps):
            raise InitialDataError(f"u0 is not concentrated within eps={data.eps} of the top threshold")
    cfg, _ = config_update(r0, MonotoneSegment(data.w0, data.w0))
    return SystemState(0.0, u0.copy(), float(data.v0), float(data.w0), cfg)


class Integrator:
    """Stateful stepping engine for one run (grid, operators, event log)."""

    def __init__(self, params: ModelParams, grid: Grid | None = None):
        self.params = params
        self.grid = grid or params.make_grid()
        self.h = self.grid.widths
        self.faces = self.grid.faces
        self.diffusion = Diffusion(self.grid, params.D)
        self.hi = params.domain.hi
        self.lo = params.domain.lo

    # -- reaction right-hand side -------------------------------------------
    def _cfg_along(self, cfg0: SimpleConfig, w0: float, w: float) -> SimpleConfig:
        return config_update(cfg0, MonotoneSegment(w0, min(max(w, -self.hi), self.hi)))[0]

    def rates(self, u, v, w, cfg):
        m = self.h * u
        U = np.concatenate((np.cumsum(m[::-1])[::-1], [0.0]))
        Ubar = U[0]
        P = preisach(lambda x: np.interp(x, self.faces, U), cfg)
        dw = -(0.5 + w) * (0.5 - w) * P
        if v == 0.0:
            return np.zeros_like(u), 0.0, dw
        rbar = signed_mass_fraction(cfg, self.faces)
        du = (0.5 + w * rbar) * u * v
        dv = -(0.5 * Ubar + w * P) * v
        return du, dv, dw

    def _rk4(self, u, v, w, cfg0, s):
        w0 = w
        k1 = self.rates(u, v, w, cfg0)
        u2, v2, w2 = u + 0.5 * s * k1[0], v + 0.5 * s * k1[1], w + 0.5 * s * k1[2]
        k2 = self.rates(u2, v2, w2, self._cfg_along(cfg0, w0, w2))
        u3, v3, w3 = u + 0.5 * s * k2[0], v + 0.5 * s * k2[1], w + 0.5 * s * k2[2]
        k3 = self.rates(u3, v3, w3, self._cfg_along(cfg0, w0, w3))
        u4, v4, w4 = u + s * k3[0], v + s * k3[1], w + s * k3[2]
        k4 = self.rates(u4, v4, w4, self._cfg_along(cfg0, w0, w4))
        un = u + (s / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        vn = v + (s / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        wn = w + (s / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        wn = min(max(wn, -self.hi), self.hi)
        return un, max(vn, 0.0), wn, k1[2]

    def _piece(self, st: SystemState, s: float):
        """RK4 over length ``s`` from ``st``; returns end state, events, start/end input velocity."""
        un, vn, wn, dw0 = self._rk4(st.u, st.v, st.w, st.cfg, s)
        cfg, ev = config_update(st.cfg, MonotoneSegment(st.w, wn))
        dw1 = self.rates(un, vn, wn, cfg)[2]
        return SystemState(st.t + s, un, vn, wn, cfg), ev, dw0, dw1

    def _bisect(self, st: SystemState, s_hi: float, bad) -> tuple[float, tuple]:
        """Shrink ``[0, s_hi]`` around the first length where ``bad(piece)`` holds."""
        lo_s, hi_s = 0.0, s_hi
        hi_piece = self._piece(st, s_hi)
        tol = max(self.params.tol_event, 1e-15 * max(st.t, 1.0))
        for _ in range(64):
            if hi_s - lo_s <= tol:
                return hi_s, hi_piece
            mid = 0.5 * (lo_s + hi_s)
            piece = self._piece(st, mid)
            if bad(piece):
                hi_s, hi_piece = mid, piece
            else:
                lo_s = mid
        raise IntegrationError(f"event bisection did not converge near t={st.t}")

    def reaction(self, st: SystemState, dt: float):
        """Advance the reaction stage over ``dt`` (in pieces split at events)."""
        events: list[tuple[SystemState, object]] = []
        moved = False
        t_end = st.t + dt
        while t_end - st.t > 1e-15 * max(1.0, t_end):
            s = t_end - st.t
            new, ev, dw0, dw1 = self._piece(st, s)
            d0 = np.sign(dw0)

            def reversed_(p, st=st, d0=d0):
                # tolerances keep round-off at a sliding equilibrium from reading as a turn
                return (np.sign(p[3]) == -d0 and abs(p[3]) > 1e-12) or (
                    np.sign(p[0].w - st.w) == -d0 and abs(p[0].w - st.w) > 1e-14)

            if d0 != 0 and reversed_((new, ev, dw0, dw1)):
                s, (new, ev, dw0, dw1) = self._bisect(st, s, reversed_)
            structural = [e for e in ev if e.kind != "move"]
            if structural:
                first = structural[0]

                def reached(p, first=first):
                    return any(e.kind == first.kind and e.position == first.position for e in p[1])

                s, (new, ev, dw0, dw1) = self._bisect(st, s, reached)
            moved = moved or any(e.kind == "move" for e in ev)
            for e in ev:
                if e.kind != "move":
                    events.append((new, e))
            st = new
        return st, events, moved

    # -- full step ----------------------------------------------------------
    def step(self, st: SystemState, dt: float):
        """Strang step: half diffusion, reaction with events, half diffusion."""
        if not dt > 0:
            raise IntegrationError("dt must be positive")
        u_half = self.diffusion.step(st.u, 0.5 * dt)
        mid = SystemState(st.t, u_half, st.v, st.w, st.cfg)
        mid, events, moved = self.reaction(mid, dt)
        u_new = self.diffusion.step(mid.u, 0.5 * dt)
        return SystemState(st.t + dt, u_new, mid.v, mid.w, mid.cfg), events, moved

    def step_too_large(self, st: SystemState, new: SystemState, dt: float) -> bool:
        """Front sweeps more than ``dU_max`` of mass, or the sliding mode is stiff for ``dt``."""
        a, b = st.cfg.leftmost, new.cfg.leftmost
        if a is None or b is None or b <= a or new.cfg.n_fronts != st.cfg.n_fronts:
            return False
        U = tail_mass(self.grid, new.u, [a, b])
        if U[0] - U[1] > self.params.dU_max:
            return True
        i0, i1 = self.grid.cell_of(a), self.grid.cell_of(b)
        lam = 2.0 * (0.5 + new.w) * (0.5 - new.w) * float(new.u[i0:i1 + 1].max())
        return lam * dt > 1.0


def reaction_substep(state: SystemState, dt: float, params: ModelParams, grid: Grid | None = None) -> SystemState:
    """Reaction stage alone over ``dt``, relay switching included."""
    return Integrator(params, grid).reaction(state, dt)[0]


def step(state: SystemState, dt: float, params: ModelParams, grid: Grid | None = None):
    """One Strang step; returns the new state and the structural relay events."""
    new, events, _ = Integrator(params, grid).step(state, dt)
    return new, [e for _, e in events]


@dataclass
class StopRule:
    T: float
    v_min: float | None = None
    steady_steps: int | None = None
    steady_tol: float = 1e-10


def run(params: ModelParams, data: InitialData, stop: StopRule | float, *, grid: Grid | None = None,
        cadence: float = 0.05, probes=None, profile_cadence: float | None = None,
        check_concentration: bool = False, record_times=None) -> TimeSeries:
    """Integrate from ``data`` until the stop rule fires.

    Records are taken every ``cadence`` time units, at every ``record_times``
    entry, and whenever a structural event or a change of the sliding state
    occurs.  ``probes`` are thresholds at which ``U(x, t)`` is stored with
    each record; full profiles are stored every ``profile_cadence``.
    """
    if not isinstance(stop, StopRule):
        stop = StopRule(float(stop))
    eng = Integrator(params, grid)
    grid = eng.grid
    st = init(params, data, grid, check_concentration=check_concentration)
    probes_x = None if probes is None else np.asarray(probes, dtype=float)
    series = TimeSeries(grid, params, probes_x=probes_x, initial=data)
    mon = MonitorReport(float(data.v0), params.mu, params.domain.hi)
    series.monitor = mon
    pending: list = []
    marks = sorted(float(t) for t in (record_times or ()) if 0 < t <= stop.T)

    def record(state, Ubar, with_profile=False):
        pr = None if probes_x is None else tail_mass(grid, state.u, probes_x)
        _, Uf = mass_functions(state, grid)
        P = preisach(lambda x: np.interp(x, grid.faces, Uf), state.cfg)
        series.records.append(Record(state.t, state.v, state.w, Ubar, state.cfg, pr,
                                     state.u.copy() if with_profile else None, list(pending), P))
        pending.clear()

    Ubar = float(np.dot(st.u, grid.widths))
    record(st, Ubar, profile_cadence is not None)
    next_rec = cadence
    next_prof = profile_cadence if profile_cadence is not None else math.inf
    dt = params.dt_init
    sliding = False
    steady_count = 0
    while True:
        if st.t >= stop.T * (1 - 1e-14):
            series.stop_reason = "T"
            break
        if stop.v_min is not None and st.v < stop.v_min and not stop.steady_steps:
            series.stop_reason = "v_min"
            break
        target = min(stop.T, next_rec, next_prof, marks[0] if marks else math.inf)
        h = min(dt, target - st.t)
        rejected = False
        for _ in range(60):
            new, events, moved = eng.step(st, h)
            if not eng.step_too_large(st, new, h) or h < 1e-12:
                break
            h *= 0.5
            rejected = True
        else:
            raise IntegrationError(f"step size control failed at t={st.t}")
        if rejected:
            dt = h
        elif h >= dt * (1 - 1e-12):
            dt = min(params.dt_max, dt * 1.2)
        Ubar_new = float(np.dot(new.u, grid.widths))
        mon.observe(st, new, Ubar, Ubar_new)
        for ev_state, e in events:
            Ub, Uf = mass_functions(ev_state, grid)
            x1 = ev_state.cfg.leftmost if ev_state.cfg.leftmost is not None else params.domain.hi
            ratio = float(np.interp(x1, grid.faces, Uf) / Ub) if e.kind == "collision" else None
            le = LoggedEvent(e.kind, ev_state.t, float(e.position), e.origin, ratio, ev_state.cfg.n_fronts, ev_state.w)
            series.events.append(le)
            pending.append(le)
        if moved != sliding:
            kind = "slide_start" if moved else "slide_stop"
            pos = (new.cfg.leftmost if moved else st.cfg.leftmost) or params.domain.hi
            le = LoggedEvent(kind, new.t if moved else st.t, float(pos), None, None, new.cfg.n_fronts, new.w)
            series.events.append(le)
            pending.append(le)
            sliding = moved
        if stop.steady_steps:
            frozen = new.cfg == st.cfg and float(np.max(np.abs(new.u - st.u))) < stop.steady_tol
            steady_count = steady_count + 1 if frozen else 0
        st, Ubar = new, Ubar_new
        hit_rec = st.t >= next_rec * (1 - 1e-12)
        hit_prof = st.t >= next_prof * (1 - 1e-12)
        hit_mark = bool(marks) and st.t >= marks[0] * (1 - 1e-12)
        while marks and st.t >= marks[0] * (1 - 1e-12):
            marks.pop(0)
        if hit_rec or hit_prof or hit_mark or pending:
            record(st, Ubar, hit_prof)
        while next_rec <= st.t * (1 + 1e-12):
            next_rec += cadence
        while next_prof <= st.t * (1 + 1e-12):
            next_prof += profile_cadence
        if stop.steady_steps and steady_count >= stop.steady_steps and (stop.v_min is None or st.v < stop.v_min):
            series.stop_reason = "steady"
            break
    if series.records[-1].t != st.t:
        record(st, Ubar, profile_cadence is not None)
    series.final = st
    log.info("run finished at t=%.6g after %d steps (%s)", st.t, mon.steps, series.stop_reason)
    return series
