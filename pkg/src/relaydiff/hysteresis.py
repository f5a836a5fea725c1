"""Non-ideal relays with symmetric thresholds ``±x`` and their distributed state.

A distributed relay state over thresholds ``x in (lo, hi]`` is piecewise
constant with alternating signs, so it is stored as a sorted list of
breakpoints (fronts) plus the sign of the top interval.  The sign on an
interval ``(front_k, front_{k+1}]`` is therefore implied and alternation is
structural.
"""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class StructureError(ValueError):
    """A configuration or domain layout violates its structural invariants."""


class InputDomainError(ValueError):
    """The relay input left ``[-hi, hi]``."""


def _check_sign(s: int) -> int:
    if s not in (-1, 1):
        raise StructureError(f"relay sign must be +1 or -1, got {s!r}")
    return int(s)


@dataclass(frozen=True)
class SimpleConfig:
    """Piecewise-constant relay state on ``(lo, hi]``.

    ``fronts`` are strictly increasing interior points; ``upper_sign`` is the
    sign on the interval adjacent to ``hi``.  Intervals are closed on the
    right, so the value at a front belongs to the interval left of it.
    """

    lo: float
    hi: float
    fronts: tuple[float, ...] = ()
    upper_sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "fronts", tuple(float(p) for p in self.fronts))
        _check_sign(self.upper_sign)
        if not self.lo < self.hi:
            raise StructureError(f"empty threshold domain ({self.lo}, {self.hi}]")
        prev = self.lo
        for p in self.fronts:
            if not prev < p:
                raise StructureError(f"fronts must be strictly increasing inside ({self.lo}, {self.hi}): {self.fronts}")
            prev = p
        if self.fronts and not self.fronts[-1] < self.hi:
            raise StructureError(f"front {self.fronts[-1]} not strictly below hi={self.hi}")

    @classmethod
    def uniform(cls, lo: float, hi: float, sign: int = 1) -> "SimpleConfig":
        return cls(lo, hi, (), sign)

    @property
    def n_fronts(self) -> int:
        return len(self.fronts)

    @property
    def lower_sign(self) -> int:
        """Sign on the interval adjacent to ``lo``."""
        return self.upper_sign * (-1) ** len(self.fronts)

    @property
    def leftmost(self) -> float | None:
        return self.fronts[0] if self.fronts else None

    def sign_at(self, x):
        """Relay state at threshold(s) ``x`` in ``(lo, hi]``."""
        x = np.asarray(x, dtype=float)
        # number of fronts >= x decides the parity relative to the top interval
        n_ge = len(self.fronts) - np.searchsorted(self.fronts, x, side="left")
        out = self.upper_sign * np.where(n_ge % 2 == 0, 1, -1)
        return out if out.ndim else int(out)

    def breakpoints(self) -> np.ndarray:
        """``[lo, fronts..., hi]``."""
        return np.array((self.lo, *self.fronts, self.hi))

    def interval_signs(self) -> np.ndarray:
        """Sign on each interval between consecutive breakpoints, low to high."""
        n = len(self.fronts)
        return self.upper_sign * np.array([(-1) ** (n - k) for k in range(n + 1)])

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "fronts": list(self.fronts), "upper_sign": self.upper_sign}

    @classmethod
    def from_dict(cls, d: dict) -> "SimpleConfig":
        try:
            return cls(float(d["lo"]), float(d["hi"]), tuple(d.get("fronts", ())), int(d["upper_sign"]))
        except KeyError as exc:
            raise StructureError(f"missing key {exc} in relay configuration") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SimpleConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MonotoneSegment:
    """Input moving monotonically from ``w_from`` to ``w_to``."""

    w_from: float
    w_to: float

    @property
    def direction(self) -> int:
        return int(np.sign(self.w_to - self.w_from))


@dataclass
class SwitchEvent:
    """Structural change of a configuration.

    ``kind`` is one of ``birth`` (new leftmost front at ``lo``), ``move``
    (leftmost front pushed from ``origin`` to ``position``), ``collision``
    (the two leftmost fronts annihilate at ``position``) or ``exit`` (the
    leftmost front pushed out through ``hi``).
    """

    kind: str
    position: float
    origin: float | None = None
    extra: dict = field(default_factory=dict)


def _apply_level(cfg: SimpleConfig, c: float, s: int, events: list) -> SimpleConfig:
    """Set every threshold ``x <= c`` to ``s``."""
    if c <= cfg.lo:
        return cfg
    fronts = list(cfg.fronts)
    k = bisect.bisect_right(fronts, c)
    swept = fronts[:k]
    if cfg.lower_sign != s:
        # region just above lo flips: a front is born at lo and pushed up
        events.append(SwitchEvent("birth", cfg.lo))
        swept = [cfg.lo] + swept
    if c >= cfg.hi:
        for j in range(0, len(swept) - 1, 2):
            events.append(SwitchEvent("collision", swept[j + 1], swept[j]))
        if len(swept) % 2:
            events.append(SwitchEvent("exit", cfg.hi, swept[-1]))
        return SimpleConfig(cfg.lo, cfg.hi, (), s)
    for j in range(0, len(swept) - 1, 2):
        events.append(SwitchEvent("collision", swept[j + 1], swept[j]))
    rest = fronts[k:]
    if len(swept) % 2:
        if c != swept[-1]:
            events.append(SwitchEvent("move", c, swept[-1]))
        rest = [c] + rest
    return SimpleConfig(cfg.lo, cfg.hi, tuple(rest), cfg.upper_sign)


def config_update(cfg: SimpleConfig, seg: MonotoneSegment) -> tuple[SimpleConfig, list[SwitchEvent]]:
    """Advance the distributed relay state along one monotone input segment.

    Both endpoints are applied with closed switching: a threshold ``x`` is
    set to ``+1`` if the segment reaches a value ``>= x`` and to ``-1`` if it
    reaches ``<= -x``; the later of the two wins.

    Returns
    -------
    new_cfg, events
        ``events`` lists births, moves, collisions and exits in order.
    """
    a, b = float(seg.w_from), float(seg.w_to)
    for w in (a, b):
        if abs(w) > cfg.hi:
            raise InputDomainError(f"input {w} outside [-{cfg.hi}, {cfg.hi}]")
    events: list[SwitchEvent] = []
    if b >= a:
        cfg = _apply_level(cfg, -a, -1, events)
        cfg = _apply_level(cfg, b, 1, events)
    else:
        cfg = _apply_level(cfg, a, 1, events)
        cfg = _apply_level(cfg, -b, -1, events)
    return cfg, events


def apply_input_path(cfg: SimpleConfig, w_path: Sequence[float]) -> tuple[SimpleConfig, list[SwitchEvent]]:
    """Run ``config_update`` over a sampled path split at its turning points."""
    w = np.asarray(w_path, dtype=float)
    events: list[SwitchEvent] = []
    if w.size == 0:
        return cfg, events
    cfg, ev = config_update(cfg, MonotoneSegment(w[0], w[0]))
    events += ev
    start, direction = 0, 0
    for k in range(1, w.size):
        d = int(np.sign(w[k] - w[k - 1]))
        if d and direction and d != direction:
            cfg, ev = config_update(cfg, MonotoneSegment(w[start], w[k - 1]))
            events += ev
            start = k - 1
        direction = d or direction
    cfg, ev = config_update(cfg, MonotoneSegment(w[start], w[-1]))
    events += ev
    return cfg, events


def brute_force_relay(x: float, w_samples: Sequence[float], r0: int) -> int:
    """State of the single relay with thresholds ``±x`` after the sampled input.

    A literal reading of the three-case relay definition: the last sample at
    or beyond one of the thresholds decides, otherwise the initial state
    persists.
    """
    state = _check_sign(r0)
    for w in w_samples:
        if w >= x:
            state = 1
        elif w <= -x:
            state = -1
    return state


def cumulative_from_faces(faces: np.ndarray, U_faces: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Linear interpolant of ``U`` through its face values."""
    faces = np.asarray(faces, dtype=float)
    U_faces = np.asarray(U_faces, dtype=float)
    return lambda x: np.interp(x, faces, U_faces)


def preisach(u_cum: Callable[[np.ndarray], np.ndarray], cfg: SimpleConfig, domain: tuple[float, float] | None = None) -> float:
    """Preisach value ``∫ u r dx`` from the tail mass ``U(x) = ∫_x^hi u``.

    ``r`` is constant between breakpoints, so the integral telescopes to a
    signed sum of ``U`` at the breakpoints.
    """
    if domain is not None and (not np.isclose(domain[0], cfg.lo) or not np.isclose(domain[1], cfg.hi)):
        raise StructureError(f"density domain {domain} does not match relay domain ({cfg.lo}, {cfg.hi}]")
    U = np.asarray(u_cum(cfg.breakpoints()), dtype=float)
    return float(np.dot(cfg.interval_signs(), U[:-1] - U[1:]))


def sign_changes_in(cfg: SimpleConfig, x_lo: float) -> int:
    """Number of fronts in ``[x_lo, hi)``."""
    return len(cfg.fronts) - bisect.bisect_left(cfg.fronts, x_lo)


def signed_mass_fraction(cfg: SimpleConfig, faces: np.ndarray) -> np.ndarray:
    """Cell averages of ``r`` over the cells delimited by ``faces``."""
    bp = cfg.breakpoints()
    # S(x) = ∫_x^hi r dy is piecewise linear with kinks at the breakpoints
    S_bp = np.concatenate((np.cumsum((cfg.interval_signs() * np.diff(bp))[::-1])[::-1], [0.0]))
    S = np.interp(faces, bp, S_bp)
    return (S[:-1] - S[1:]) / np.diff(faces)
