import numpy as np
import pytest

from clmac.incumbents import UEProfile
from clmac.oracle import (
    ScheduleViolation,
    SearchTooLarge,
    brute_force_optimum,
    check_constraints,
    derive_support,
    incumbent_trace,
    load_instance,
    objective,
    windowed_throughput,
)


def schedule_from(starts, T, C=1):
    r = np.zeros((T, C), dtype=int)
    for t, length, c in starts:
        r[t, c] = length
    return derive_support(r)


def test_derive_support_waveforms():
    s = schedule_from([(2, 5, 0), (9, 2, 0)], 12)
    assert s.r[:, 0].tolist() == [0, 0, 5, 0, 0, 0, 0, 0, 0, 2, 0, 0]
    assert s.z[:, 0].tolist() == [0, 0, 5, 4, 3, 2, 1, 0, 0, 2, 1, 0]
    assert s.m[:, 0].tolist() == [0, 0, 1, 1, 1, 1, 1, 0, 0, 1, 1, 0]
    assert s.d[:, 0].tolist() == [1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 0, 1]


def test_derive_support_rejects_overlap():
    r = np.zeros((6, 2), dtype=int)
    r[0, 0] = 3
    r[1, 1] = 1
    with pytest.raises(ScheduleViolation) as exc:
        derive_support(r)
    assert exc.value.constraint == "no-overlap"


def test_windowed_throughput():
    m = np.array([[1], [1], [0], [1]])
    np.testing.assert_allclose(windowed_throughput(m, 2)[:, 0], [0.5, 1.0, 0.5, 0.5])


def test_checker_reports_each_violation():
    busy = np.zeros((8, 2), dtype=bool)
    busy[3, 0] = True
    s = schedule_from([(2, 2, 0)], 8, 2)
    assert check_constraints(s, busy, [1, 1], 4).first_violation("incumbent-free") == (3, 0)
    s = schedule_from([(0, 4, 1)], 8, 2)
    assert check_constraints(s, np.zeros((8, 2)), [0.5, 0.5], 4).first_violation("fair-share") == (3, 1)
    s = schedule_from([(0, 2, 0)], 8, 2)
    s.m[0, 1] = 1
    s.z[0, 1] = 1
    s.r[0, 1] = 1
    assert check_constraints(s, np.zeros((8, 2)), [1, 1], 4).first_violation("single-channel") is not None
    s = schedule_from([(0, 3, 0)], 8, 2)
    s.z[1, 0] = 3
    assert check_constraints(s, np.zeros((8, 2)), [1, 1], 4).first_violation("coupling") is not None
    s = schedule_from([(0, 3, 0)], 8, 2)
    s.d[1, 0] = 1
    assert check_constraints(s, np.zeros((8, 2)), [1, 1], 4).first_violation("no-overlap") == (0, 0)


def test_tdma_frame_optimum():
    busy = incumbent_trace([(UEProfile.tdma(3, 0, 8), 0)], 1, 8)
    res = brute_force_optimum(busy, [0.625], 8, 5)
    assert res.objective == pytest.approx(0.625)
    assert check_constraints(res.schedule, busy, [0.625], 8).ok
    assert objective(res.schedule, 8) == pytest.approx(res.objective)


def test_optimum_respects_lower_target():
    busy = np.zeros((6, 1), dtype=bool)
    res = brute_force_optimum(busy, [0.5], 4, 3)
    assert check_constraints(res.schedule, busy, [0.5], 4).ok
    assert res.objective == pytest.approx(1.5)  # three evaluated slots at 2/4 each


def test_optimum_uses_both_channels():
    busy = np.zeros((4, 2), dtype=bool)
    busy[:2, 0] = True
    busy[2:, 1] = True
    res = brute_force_optimum(busy, [0.5, 0.5], 4, 2)
    assert res.objective == pytest.approx(1.0)
    assert check_constraints(res.schedule, busy, [0.5, 0.5], 4).ok


def test_search_limit():
    with pytest.raises(SearchTooLarge):
        brute_force_optimum(np.zeros((100, 3)), [1, 1, 1], 30, 5)


def test_incumbent_trace_rejects_random_profiles():
    with pytest.raises(ValueError):
        incumbent_trace([(UEProfile.csma(2, 4, 6), 0)], 1, 10)
    with pytest.raises(ValueError):
        incumbent_trace([(UEProfile.ch(2, 1), None)], 2, 10)


def test_load_instance(tmp_path):
    p = tmp_path / "i.yaml"
    p.write_text("version: 1\nnum_channels: 2\nhorizon: 8\nwindow: 4\nmax_packet_len: 2\nincumbents: ['TDMA(3,0,8)@1', 'CH(1,1)@2']\ntargets: {2: 0.2}\n")
    inst = load_instance(p)
    assert inst.busy.shape == (8, 2)
    assert inst.busy[:, 0].tolist() == [True, True, True, True, False, True, False, True]
    assert inst.targets[1] == pytest.approx(0.2)
