import json
import logging
import math

import pytest
from hypothesis import given, settings, strategies as st

from aimmimic.profile import (
    ARCH,
    PROPERTIES,
    BootstrapCriteria,
    HitSequence,
    ProfileError,
    TraceSamples,
    angular_divergence,
    build_profile,
    dump_profile,
    extract_choices,
    extract_samples,
    extract_shots,
    extract_timing,
    load_profile,
    profile_from_samples,
    recoil_compensation,
    suspiciousness,
)
from aimmimic.simulator import Scenario, SkillModel, simulate_campaign
from aimmimic.telemetry import EngagementTrace, EventKind as K, GameEvent as E, Vec3, direction

from oracle import oracle

X, Y, Z = Vec3(1.0, 0.0, 0.0), Vec3(0.0, 1.0, 0.0), Vec3(0.0, 0.0, 1.0)


def trace(events, **kw):
    kw.setdefault("match_id", "m0")
    kw.setdefault("player_id", "p")
    return EngagementTrace(events=tuple(events), **kw)


# ---------------------------------------------------------------- formulas


def test_suspiciousness_examples():
    assert suspiciousness(HitSequence(("head", "chest"))) == 1.0
    assert suspiciousness(HitSequence(("chest", "arm_l", "head", "chest"))) == pytest.approx(1 / 3)
    assert suspiciousness(HitSequence(("chest", "stomach"))) == 0.0


def test_suspiciousness_empty_is_an_error():
    with pytest.raises(ValueError):
        suspiciousness(HitSequence(()))


@given(st.lists(st.booleans(), min_size=1, max_size=30))
def test_suspiciousness_closed_form(crit):
    v = suspiciousness(HitSequence(tuple("head" if c else "chest" for c in crit), tuple(crit)))
    if True in crit:
        assert v == 1.0 / (crit.index(True) + 1)
    else:
        assert v == 0.0


def test_recoil_compensation_examples():
    assert recoil_compensation(X, [(X, Y), (X, Z)]) == 0.0
    # D(c_1) = angle(a, c_1) = 1 rad
    c1 = Vec3(math.cos(1.0), math.sin(1.0), 0.0)
    assert recoil_compensation(X, [(Y, c1)], k=1) == pytest.approx(math.sqrt(2))


def test_recoil_compensation_zero_denominator_is_skipped(caplog):
    with caplog.at_level(logging.WARNING, logger="aimmimic.profile"):
        assert recoil_compensation(X, [(Y, X), (Y, Y)]) == pytest.approx(math.sqrt(2) / (math.pi / 2))
    assert "zero denominator" in caplog.text


def test_recoil_compensation_rejects_bad_k():
    with pytest.raises(ValueError):
        recoil_compensation(X, [(X, Y)], k=2)
    with pytest.raises(ValueError):
        recoil_compensation(X, [(X, Y)], k=0)


unit_dirs = st.builds(direction, st.floats(-3.0, 3.0), st.floats(-1.4, 1.4))


@given(unit_dirs, st.lists(st.tuples(unit_dirs, unit_dirs), min_size=1, max_size=8))
def test_recoil_compensation_is_linear_in_numerators(a, shots):
    # scale every |a - a_j| by two while leaving each D(c_j) alone
    doubled = []
    for a_j, c_j in shots:
        d = a_j - a
        doubled.append((Vec3(a.x + 2 * d.x, a.y + 2 * d.y, a.z + 2 * d.z), c_j))
    base = recoil_compensation(a, shots)
    assert recoil_compensation(a, doubled) == pytest.approx(2 * base, rel=1e-9, abs=1e-12)


def test_angular_divergence():
    assert angular_divergence(X, Y) == pytest.approx(math.pi / 2)
    assert angular_divergence(X, X) == 0.0
    with pytest.raises(ValueError):
        angular_divergence(X, Vec3(0.0, 0.0, 0.0))


# ------------------------------------------------------------- extraction


def test_extract_shots_examples():
    target = direction(0.0, 0.0)
    ev = [E(0, K.SIGHTING_START, gaze=X, target=target)]
    for i in range(10):
        ev.append(E(1 + i, K.SHOT_FIRED, gaze=target, moving=False))
        if i < 6:
            ev.append(E(1 + i, K.HIT, body_part="chest", critical=False, hit_dir=target))
    shots = extract_shots(trace(ev))
    assert shots["s4"].value == pytest.approx(0.6)
    assert shots["s4"].n == 10
    assert shots["s2"].n == 0 and shots["s2"].value is None


def test_first_shot_ratio_over_engagements():
    ev = []
    for k in range(5):
        t = 100 * k
        ev += [E(t, K.SIGHTING_START, gaze=X, target=X), E(t + 1, K.SHOT_FIRED, gaze=X, moving=False)]
        if k < 3:
            ev.append(E(t + 1, K.HIT, body_part="chest", critical=False, hit_dir=X))
        ev.append(E(t + 2, K.AIM_OFF))
    assert extract_shots(trace(ev))["s5"].value == pytest.approx(0.6)


def test_s7_orthogonal_first_hit():
    ev = [
        E(0, K.SIGHTING_START, gaze=X, target=Y),
        E(5, K.SHOT_FIRED, gaze=Y, moving=True),
        E(5, K.HIT, body_part="chest", critical=False, hit_dir=Y),
    ]
    s = extract_shots(trace(ev))
    assert s["s7"].value == pytest.approx(math.pi / 2)
    assert s["s2"].value == 1.0


def test_timing_and_weapon_choices():
    tgt = direction(0.4, 0.0)
    ev = [
        E(0, K.SIGHTING_START, gaze=X, target=tgt),
        E(8, K.LOCK_REGION_ENTER),
        E(20, K.AIM_ON),
        E(30, K.SHOT_FIRED, gaze=tgt, moving=False),
        E(30, K.MAGAZINE_EMPTY),
        E(52, K.AIM_OFF),
        E(60, K.WEAPON_SWITCH, to="secondary"),
        E(200, K.SIGHTING_START, gaze=X, target=tgt),
        E(210, K.LOCK_REGION_ENTER),
        E(214, K.AIM_ON),
        E(220, K.SHOT_FIRED, gaze=tgt, moving=False),
        E(220, K.HIT, body_part="head", critical=True, hit_dir=tgt),
        E(220, K.KILL),
        E(220, K.SIGHTING_START, gaze=X, target=tgt),
        E(252, K.AIM_ON),
        E(252, K.AIM_OFF),
    ]
    tm = extract_timing(trace(ev))
    assert tm["a2"].value == pytest.approx(20 / 64)
    assert tm["a3"].n == 2 and tm["a3"].value == pytest.approx((12 + 4) / 2 / 64)
    assert tm["a4"].value == pytest.approx(32 / 64)
    assert tm["a5"].value == pytest.approx(22 / 64)
    assert tm["a7"].value == pytest.approx(30 / 64)
    ch = extract_choices(trace(ev))
    assert ch["a6"].value == 0.0 and ch["a6"].n == 1


def test_empty_on_secondary_is_not_a_decision():
    ev = [
        E(0, K.WEAPON_SWITCH, to="secondary"),
        E(10, K.MAGAZINE_EMPTY),
        E(20, K.RELOAD),
        E(30, K.WEAPON_SWITCH, to="primary"),
        E(40, K.MAGAZINE_EMPTY),
        E(50, K.RELOAD),
    ]
    ch = extract_choices(trace(ev))
    assert (ch["a6"].value, ch["a6"].n) == (1.0, 1)


def test_arch_direction_and_height():
    # sweep right with the path bulging upward
    start, end = direction(0.0, 0.0), direction(0.4, 0.0)
    pts = [direction(0.1, 0.02), direction(0.2, 0.03), direction(0.3, 0.02), end]
    ev = [E(0, K.SIGHTING_START, gaze=start, target=end)]
    ev += [E(i + 1, K.AIM_SAMPLE, gaze=p) for i, p in enumerate(pts)]
    ev.append(E(5, K.AIM_ON))
    ch = extract_choices(trace(ev))
    assert ch["a8"].value == 1.0
    assert ch["arch_height"].value == pytest.approx((0.02 + 0.03 + 0.02) / 3, rel=1e-3)


# ------------------------------------------------------ oracle equivalence

PARTS = ("head", "chest", "stomach", "arm_l", "arm_r", "leg_l", "leg_r")


@st.composite
def small_traces(draw):
    ev = []
    t = 0
    chained_from = None
    for _ in range(draw(st.integers(1, 3))):
        start = chained_from if chained_from is not None else t
        gaze = draw(unit_dirs)
        ev.append(E(start, K.SIGHTING_START, gaze=gaze, target=draw(unit_dirs)))
        t = start + draw(st.integers(0, 3))
        if draw(st.booleans()):
            t += draw(st.integers(1, 5))
            ev.append(E(t, K.LOCK_REGION_ENTER))
        for _ in range(draw(st.integers(0, 3))):
            t += 1
            ev.append(E(t, K.AIM_SAMPLE, gaze=draw(unit_dirs)))
        if draw(st.booleans()):
            t += draw(st.integers(0, 4))
            ev.append(E(t, K.AIM_ON))
        first_gaze, hit_any = None, False
        for _ in range(draw(st.integers(0, 4))):
            t += draw(st.integers(1, 6))
            sg = draw(unit_dirs)
            first_gaze = first_gaze or sg
            ev.append(E(t, K.SHOT_FIRED, gaze=sg, moving=draw(st.booleans())))
            if draw(st.booleans()):
                hd = first_gaze if draw(st.integers(0, 4)) == 0 else draw(unit_dirs)
                part = draw(st.sampled_from(PARTS))
                hit_any = True
                ev.append(E(t, K.HIT, body_part=part, critical=part == "head", hit_dir=hd))
        if draw(st.booleans()):
            ev.append(E(t, K.MAGAZINE_EMPTY))
        end = draw(st.sampled_from(["kill", "off", "open"] if hit_any else ["off", "open"]))
        chained_from = None
        t += draw(st.integers(1, 6))
        if end == "kill":
            ev.append(E(t, K.KILL))
            if draw(st.booleans()):
                chained_from = t
        elif end == "off":
            ev.append(E(t, K.AIM_OFF))
        if chained_from is None:
            choice = draw(st.sampled_from(["none", "reload", "secondary", "primary"]))
            t += draw(st.integers(1, 6))
            if choice == "reload":
                ev.append(E(t, K.RELOAD))
            elif choice != "none":
                ev.append(E(t, K.WEAPON_SWITCH, to=choice))
            t += 10
    return trace(ev)


@settings(max_examples=300, deadline=None)
@given(small_traces())
def test_extractor_matches_brute_force_oracle(tr):
    ts = extract_samples(tr)
    want = oracle(list(tr.events), tr.tick_rate)
    for p in PROPERTIES:
        got = ts.samples[p]
        value, n = want[p]
        assert len(got) == n, p
        if n:
            assert math.fsum(got) / n == pytest.approx(value, rel=1e-9, abs=1e-12), p
    assert len(ts.samples[ARCH]) == want["arch"][1]


@settings(max_examples=100, deadline=None)
@given(small_traces())
def test_property_ranges_and_time_sums(tr):
    ts = extract_samples(tr)
    prof = profile_from_samples("p", ts, 1.0, 1, 1)
    for p in PROPERTIES:
        est = prof[p]
        if est.value is None:
            continue
        if p in ("a6", "a8", "s2", "s3", "s4", "s5"):
            assert 0.0 <= est.value <= 1.0
        if p in ("a1", "s7"):
            assert 0.0 <= est.value <= math.pi
        if p in ("a2", "a3", "a4", "a5", "a7"):
            assert est.value >= 0.0
            assert abs(est.value * est.n - math.fsum(ts.samples[p])) <= 1e-9


# ------------------------------------------------------------ bootstrap gate


def full_samples(n=40):
    ts = TraceSamples()
    for p in PROPERTIES:
        ts.samples[p] = [0.5] * n
    return ts


def test_gate_accepts_when_all_criteria_met():
    prof = profile_from_samples("p", full_samples(), hours=12.5, matches=16, wins=10)
    assert prof.gate.accepted and prof.gate.reasons == ()


def test_gate_rejects_insufficient_wins():
    prof = profile_from_samples("p", full_samples(), hours=13.0, matches=16, wins=9)
    assert not prof.gate.accepted
    assert len(prof.gate.reasons) == 1 and "insufficient wins" in prof.gate.reasons[0]


def test_gate_rejects_sparse_property():
    ts = full_samples()
    ts.samples["a6"] = [1.0, 0.0]
    prof = profile_from_samples("p", ts, hours=13.0, matches=16, wins=10)
    assert not prof.gate.accepted
    assert "insufficient samples" in prof.gate.reasons[0] and "a6" in prof.gate.reasons[0]


def test_gate_collects_every_reason():
    prof = profile_from_samples("p", TraceSamples(), hours=1.0, matches=2, wins=0)
    assert len(prof.gate.reasons) == 4


def test_criteria_validation():
    with pytest.raises(ValueError):
        BootstrapCriteria(min_hours=0)
    with pytest.raises(ValueError):
        BootstrapCriteria(min_samples={"a1": 0})


def test_build_profile_rejects_mixed_players():
    with pytest.raises(ProfileError):
        build_profile([trace([], player_id="a"), trace([], player_id="b")])
    with pytest.raises(ProfileError):
        build_profile([])


@pytest.fixture(scope="module")
def campaign():
    return simulate_campaign(SkillModel(), Scenario(), 16, 11, player_id="A")


def test_simulated_bootstrap_passes_gate(campaign):
    prof = build_profile(campaign)
    assert prof.gate.accepted, prof.gate.reasons
    assert prof.matches == 16


def test_build_profile_is_deterministic_and_sample_weighted(campaign):
    p1, p2 = build_profile(campaign), build_profile(list(campaign))
    assert dump_profile(p1) == dump_profile(p2)
    parts = [extract_samples(t) for t in campaign]
    n = sum(len(s.samples["a2"]) for s in parts)
    total = math.fsum(x for s in parts for x in s.samples["a2"])
    assert p1["a2"].n == n
    assert p1["a2"].value == pytest.approx(total / n, rel=1e-12)


def test_profile_json_round_trip(campaign):
    prof = build_profile(campaign)
    text = dump_profile(prof, {"seed": 11})
    back = load_profile(text)
    assert dump_profile(back, {"seed": 11}) == text
    assert json.loads(text)["provenance"] == {"seed": 11}


def test_load_profile_errors():
    with pytest.raises(ProfileError):
        load_profile("{not json")
    with pytest.raises(ProfileError):
        load_profile(json.dumps({"schema_version": 99}))
    with pytest.raises(ProfileError):
        load_profile(json.dumps({"schema_version": 1}))
