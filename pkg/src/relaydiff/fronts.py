"""Front bookkeeping on top of a recorded run.

Fronts are the breakpoints of the relay configuration.  Only the leftmost
one can move (rightward, dragged by the input), new fronts are born at the
low threshold, and the two leftmost fronts annihilate on contact.  Tracks
are rebuilt from the configuration snapshots plus the event log, which is
enough to give every front a stable identity.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hysteresis import StructureError
from .solver import TimeSeries, tail_mass


@dataclass
class FrontTrack:
    id: int
    birth_time: float
    trajectory: list[tuple[float, float]] = field(default_factory=list)
    death: tuple[str, float, float] | None = None
    steady_since: float | None = None
    immortal_certificate: dict | None = None

    @property
    def alive(self) -> bool:
        return self.death is None

    @property
    def position(self) -> float:
        return self.trajectory[-1][1]

    def position_at(self, t: float) -> float | None:
        """Position at the last snapshot not later than ``t``."""
        ts = [p[0] for p in self.trajectory]
        k = int(np.searchsorted(ts, t, side="right")) - 1
        return None if k < 0 else self.trajectory[k][1]


@dataclass
class CollisionEvent:
    t: float
    merged_front_ids: tuple[int, int]
    position: float
    new_leftmost: float | None
    U_ratio: float

    def __post_init__(self):
        if not -1e-12 <= self.U_ratio <= 1.0 + 1e-12:
            raise StructureError(f"collision mass ratio {self.U_ratio} outside [0, 1]")


def track(series: TimeSeries, pos_tol: float = 0.0) -> tuple[list[FrontTrack], list[CollisionEvent]]:
    """Assign every front in every snapshot to exactly one track.

    Births push a new track in at the left, collisions retire the two
    leftmost tracks, exits retire the leftmost one.  After each snapshot's
    events the number of live tracks must equal the number of fronts, every
    track must not have moved left, and only the leftmost may have moved at
    all; anything else means the log is inconsistent.
    """
    if not series.records:
        raise StructureError("series has no snapshots")
    first = series.records[0]
    tracks: list[FrontTrack] = []
    active: list[FrontTrack] = []
    for x in first.cfg.fronts:
        tr = FrontTrack(len(tracks), first.t, [(first.t, x)])
        tracks.append(tr)
        active.append(tr)
    collisions: list[CollisionEvent] = []
    if first.events:
        raise StructureError("events logged before the first snapshot")
    for rec in series.records[1:]:
        # any front that was leftmost at some point since the last snapshot may have moved
        movers = {active[0].id} if active else set()
        for ev in rec.events:
            if ev.kind == "birth":
                tr = FrontTrack(len(tracks), ev.t, [(ev.t, ev.position)])
                tracks.append(tr)
                active.insert(0, tr)
            elif ev.kind == "collision":
                if len(active) < 2:
                    raise StructureError(f"collision at t={ev.t} with {len(active)} live fronts")
                a, b = active.pop(0), active.pop(0)
                for tr in (a, b):
                    tr.trajectory.append((ev.t, ev.position))
                    tr.death = ("collision", ev.t, ev.position)
                left = active[0].position if active else None
                collisions.append(CollisionEvent(ev.t, (a.id, b.id), ev.position, left,
                                                 float(ev.U_ratio) if ev.U_ratio is not None else math.nan))
            elif ev.kind == "exit":
                if not active:
                    raise StructureError(f"exit at t={ev.t} with no live fronts")
                tr = active.pop(0)
                tr.trajectory.append((ev.t, ev.position))
                tr.death = ("exit", ev.t, ev.position)
            if active:
                movers.add(active[0].id)
        fronts = rec.cfg.fronts
        if len(fronts) != len(active):
            raise StructureError(f"snapshot t={rec.t} has {len(fronts)} fronts but the log leaves {len(active)}")
        for tr, x in zip(active, fronts):
            prev = tr.position
            if x < prev - pos_tol:
                raise StructureError(f"track {tr.id} moved left at t={rec.t}: {prev} -> {x}")
            if tr.id not in movers and abs(x - prev) > pos_tol:
                raise StructureError(f"non-leftmost track {tr.id} moved at t={rec.t}")
            if tr.trajectory[-1] != (rec.t, x):
                tr.trajectory.append((rec.t, x))
    return tracks, collisions


def check_collision_lemma(ev: CollisionEvent, tol: float = 5e-3) -> tuple[bool, dict]:
    """Tail mass right of the new leftmost front must be at least half at a collision."""
    ok = bool(ev.U_ratio >= 0.5 - tol)
    witness = {"t": ev.t, "merged": list(ev.merged_front_ids), "position": ev.position,
               "new_leftmost": ev.new_leftmost, "U_ratio": ev.U_ratio, "tol": tol}
    return ok, witness


def tail_ratio(series: TimeSeries, x: float) -> tuple[np.ndarray, np.ndarray]:
    """``(t, U(x, t) / Ubar(t))`` over the snapshots that carry enough data.

    Uses a stored probe at ``x`` when there is one, otherwise the stored
    profiles.
    """
    ts, vals = [], []
    k = None
    if series.probes_x is not None:
        hit = np.nonzero(np.isclose(series.probes_x, x, rtol=0.0, atol=1e-15))[0]
        k = int(hit[0]) if hit.size else None
    for rec in series.records:
        if k is not None and rec.probes is not None:
            U = rec.probes[k]
        elif rec.u is not None:
            U = float(tail_mass(series.grid, rec.u, x))
        else:
            continue
        ts.append(rec.t)
        vals.append(U / rec.U_bar)
    if not ts:
        raise ValueError(f"series stores neither a probe at x={x} nor profiles")
    return np.array(ts), np.array(vals)


def certify_immortal(tracks: list[FrontTrack], series: TimeSeries, x_cut: float, t_cut: float,
                     tol: float = 1e-3) -> list[int]:
    """Certify the live tracks in ``[x_cut, hi)`` at ``t_cut`` as immortal up to the horizon.

    A collision at or right of ``x_cut`` would need ``U(x_cut)/Ubar >= 1/2``
    there, since ``U`` decreases in ``x``; so if the ratio stays below
    ``1/2 - tol`` for all recorded ``t >= t_cut`` those fronts cannot die.
    """
    ts, ratio = tail_ratio(series, x_cut)
    sel = ts >= t_cut
    if not np.any(sel):
        return []
    sup = float(ratio[sel].max())
    if not sup < 0.5 - tol:
        return []
    horizon = float(ts[-1])
    out = []
    for tr in tracks:
        x = tr.position_at(t_cut)
        if x is None or x < x_cut or (tr.death is not None and tr.death[1] <= t_cut):
            continue
        tr.immortal_certificate = {"criterion": "tail_mass_below_half", "t_cut": t_cut, "x_cut": x_cut,
                                   "sup_ratio": sup, "tol": tol, "horizon": horizon}
        out.append(tr.id)
    return out


@dataclass
class SteadyFront:
    track_id: int
    t: float | None
    x: float
    determined: bool = True


def steady_fronts(tracks: list[FrontTrack], series: TimeSeries, rel_tol: float = 1e-2,
                  v_min: float = 1e-6) -> list[SteadyFront]:
    """Surviving fronts that have stopped, with the time they settled.

    The settling time is the first snapshot after which the position stays
    within ``rel_tol * sqrt(D)`` of its final value.  The verdict is only
    trusted when ``|w|`` stays below the front after its last move and the
    nutrient has decayed below ``v_min`` by the end; otherwise the track is
    reported with ``determined=False``.
    """
    scale = rel_tol * math.sqrt(series.params.D)
    rec_t = series.t
    abs_w = np.abs([r.w for r in series.records])
    v_end = series.records[-1].v
    out: list[SteadyFront] = []
    for tr in tracks:
        if not tr.alive:
            continue
        t = np.array([p[0] for p in tr.trajectory])
        x = np.array([p[1] for p in tr.trajectory])
        xf = x[-1]
        far = np.nonzero(np.abs(x - xf) >= scale)[0]
        t_n = float(t[far[-1] + 1]) if far.size else float(t[0])
        moved = np.nonzero(x != xf)[0]
        t_stop = float(t[moved[-1] + 1]) if moved.size else float(t[0])
        after = rec_t > t_stop
        quiet = bool(np.all(abs_w[after] < xf)) and bool(np.any(after))
        determined = bool(quiet and v_end < v_min)
        if moved.size == 0 and bool(np.all(abs_w < xf)):
            determined = True
        tr.steady_since = t_n if determined else None
        out.append(SteadyFront(tr.id, t_n if determined else None, float(xf), determined))
    out.sort(key=lambda s: (not s.determined, s.t if s.t is not None else math.inf, s.track_id))
    return out


def _f(v: float) -> str:
    return format(float(v), ".17g")


def write_fronts_csv(path, tracks: list[FrontTrack]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["track_id", "birth_t", "death_t", "steady_t", "x_final", "immortal"])
        for tr in tracks:
            w.writerow([tr.id, _f(tr.birth_time), "-" if tr.death is None else _f(tr.death[1]),
                        "-" if tr.steady_since is None else _f(tr.steady_since),
                        _f(tr.position), tr.immortal_certificate is not None])


def write_certificates(path, tracks: list[FrontTrack]) -> None:
    certs = [{"track_id": tr.id, **tr.immortal_certificate} for tr in tracks if tr.immortal_certificate]
    Path(path).write_text(json.dumps(certs, indent=2))
