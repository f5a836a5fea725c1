import json

import numpy as np
import pytest

from relaydiff.fronts import (CollisionEvent, certify_immortal, check_collision_lemma, steady_fronts, tail_ratio, track,
                              write_certificates, write_fronts_csv)
from relaydiff.hysteresis import SimpleConfig, StructureError
from relaydiff.kernels import ThresholdDomain
from relaydiff.solver import (Grid, InitialData, LoggedEvent, ModelParams, Record, TimeSeries, bump_profile, run,
                              uniform_profile)

LO, HI = 0.05, 0.25
DOM = ThresholdDomain(LO, HI)


def cfg(*fronts, top=1):
    return SimpleConfig(LO, HI, tuple(fronts), top)


def synthetic(records):
    p = ModelParams(DOM, 1e-4, grid_n=10)
    s = TimeSeries(Grid.uniform(DOM, 10), p)
    for t, c, evs, w in records:
        r = Record(t, 0.0, w, 1.0, c, None, None, list(evs))
        s.records.append(r)
        s.events += r.events
    return s


def ev(kind, t, x, ratio=None):
    return LoggedEvent(kind, t, x, None, ratio)


@pytest.fixture
def collision_log():
    # two fronts at 0.1/0.2 with -1 in between; a third is born, slides, and collides with 0.1
    return synthetic([
        (0.0, cfg(0.1, 0.2), [], 0.0),
        (1.0, cfg(0.06, 0.1, 0.2, top=-1), [ev("birth", 0.5, LO)], 0.06),
        (2.0, cfg(0.08, 0.1, 0.2, top=-1), [], 0.08),
        (3.0, cfg(0.2, top=1), [ev("collision", 2.5, 0.1, 0.8)], 0.05),
        (4.0, cfg(0.2, top=1), [], 0.0),
    ])


def test_frozen_log_gives_constant_tracks():
    s = synthetic([(t, cfg(0.1, 0.2), [], 0.0) for t in (0.0, 1.0, 2.0)])
    tracks, coll = track(s)
    assert len(tracks) == 2 and not coll
    assert all(tr.alive and len({p[1] for p in tr.trajectory}) == 1 for tr in tracks)
    steady = steady_fronts(tracks, s)
    assert [f.t for f in steady] == [0.0, 0.0] and all(f.determined for f in steady)


def test_collision_log_closes_two_tracks(collision_log):
    tracks, coll = track(collision_log)
    assert len(tracks) == 3
    assert tracks[2].birth_time == 0.5
    assert [tr.trajectory for tr in tracks[2:]] == [[(0.5, LO), (1.0, 0.06), (2.0, 0.08), (2.5, 0.1)]]
    assert tracks[0].death == ("collision", 2.5, 0.1) and tracks[2].death == ("collision", 2.5, 0.1)
    assert tracks[1].alive and tracks[1].position == 0.2
    assert len(coll) == 1 and set(coll[0].merged_front_ids) == {0, 2} and coll[0].new_leftmost == 0.2
    assert check_collision_lemma(coll[0])[0]


def test_positions_non_decreasing(collision_log):
    tracks, _ = track(collision_log)
    for tr in tracks:
        xs = [p[1] for p in tr.trajectory]
        assert xs == sorted(xs)


@pytest.mark.parametrize("records, msg", [
    ([(0.0, cfg(0.1), [], 0.0), (1.0, cfg(0.1, 0.2), [], 0.0)], "fronts"),
    ([(0.0, cfg(0.1, 0.2), [], 0.0), (1.0, cfg(0.08, 0.2), [], 0.0)], "left"),
    ([(0.0, cfg(0.1, 0.2), [], 0.0), (1.0, cfg(0.1, 0.21), [], 0.0)], "non-leftmost"),
    ([(0.0, cfg(), [], 0.0), (1.0, cfg(), [ev("collision", 0.5, 0.1)], 0.0)], "collision"),
    ([(0.0, cfg(), [], 0.0), (1.0, cfg(), [ev("exit", 0.5, HI)], 0.0)], "exit"),
])
def test_inconsistent_logs_rejected(records, msg):
    with pytest.raises(StructureError, match=msg):
        track(synthetic(records))


def test_collision_lemma_boundary():
    ok, wit = check_collision_lemma(CollisionEvent(1.0, (0, 1), 0.1, 0.2, 0.4999), tol=1e-3)
    assert ok and wit["U_ratio"] == 0.4999
    assert not check_collision_lemma(CollisionEvent(1.0, (0, 1), 0.1, 0.2, 0.45), tol=1e-3)[0]
    assert check_collision_lemma(CollisionEvent(1.0, (0, 1), 0.1, 0.2, 1.0))[0]
    with pytest.raises(StructureError):
        CollisionEvent(1.0, (0, 1), 0.1, 0.2, 1.5)


# -- certification ---------------------------------------------------------------

def _profile_series(u, fronts, top=1, times=(0.0, 1.0, 2.0)):
    g = Grid.uniform(DOM, len(u))
    s = TimeSeries(g, ModelParams(DOM, 1e-4, grid_n=len(u)))
    for t in times:
        s.records.append(Record(t, 0.0, 0.0, float(np.dot(u, g.widths)), cfg(*fronts, top=top), None, np.asarray(u)))
    return s


def test_uniform_mass_at_midpoint_not_certified():
    s = _profile_series(np.full(200, 1 / DOM.L), (0.16, 0.2))
    tracks, _ = track(s)
    assert tail_ratio(s, 0.15)[1] == pytest.approx(0.5)
    assert certify_immortal(tracks, s, 0.15, 0.0) == []


def test_mass_left_of_cut_certifies_fronts():
    g = Grid.uniform(DOM, 200)
    u = (g.centers < 0.12).astype(float)
    u /= np.dot(u, g.widths)
    s = _profile_series(u, (0.1, 0.16, 0.2))
    tracks, _ = track(s)
    ids = certify_immortal(tracks, s, 0.15, 0.0)
    assert ids == [1, 2]
    assert tracks[1].immortal_certificate["horizon"] == 2.0
    assert tracks[0].immortal_certificate is None


def test_tail_ratio_needs_data():
    s = synthetic([(0.0, cfg(), [], 0.0)])
    with pytest.raises(ValueError):
        tail_ratio(s, 0.1)


# -- a simulated collision -----------------------------------------------------------

@pytest.fixture(scope="module")
def collision_run():
    p = ModelParams(DOM, 1e-6, grid_n=200, dt_max=0.02)
    g = p.make_grid()
    u = uniform_profile(g) * 0.3 + 0.7 * bump_profile(g, 0.05)
    data = InitialData(u, 0.0, 0.1, SimpleConfig(LO, HI, (0.1, 0.12, 0.2), -1))
    return run(p, data, 3.0, grid=g, cadence=0.05, probes=[0.2])


def test_simulated_collision_satisfies_lemma(collision_run):
    tracks, coll = track(collision_run)
    assert len(coll) >= 1
    for c in coll:
        ok, wit = check_collision_lemma(c, tol=5e-3)
        assert ok, wit
    dead = [tr for tr in tracks if not tr.alive]
    assert len(dead) >= 2


def test_certified_tracks_never_die(collision_run):
    tracks, _ = track(collision_run)
    ratio = tail_ratio(collision_run, 0.2)[1]
    assert ratio.max() > 0.5  # mass right of 0.2 dominates, so no certification there
    assert certify_immortal(tracks, collision_run, 0.2, 0.0) == []


def test_outputs(tmp_path, collision_log):
    tracks, _ = track(collision_log)
    steady_fronts(tracks, collision_log)
    tracks[1].immortal_certificate = {"criterion": "x", "horizon": 4.0}
    write_fronts_csv(tmp_path / "f.csv", tracks)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "track_id,birth_t,death_t,steady_t,x_final,immortal"
    assert lines[1].split(",")[2] == "2.5" and lines[2].split(",")[2] == "-"
    write_certificates(tmp_path / "c.json", tracks)
    assert json.loads((tmp_path / "c.json").read_text()) == [{"track_id": 1, "criterion": "x", "horizon": 4.0}]


def test_steady_front_undetermined_when_input_active():
    # input still above the front at the end: steadiness cannot be decided
    s = synthetic([(0.0, cfg(0.1), [], 0.0), (1.0, cfg(0.15), [], 0.15), (2.0, cfg(0.15), [], 0.2)])
    s.records[-1].v = 1.0
    tracks, _ = track(s)
    (f,) = steady_fronts(tracks, s)
    assert not f.determined and f.t is None
