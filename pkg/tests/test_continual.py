import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clmac.agent import Learner, Hyperparams
from clmac.continual import (
    ContextRegistry,
    CorruptSnapshotError,
    apply_permutation,
    canonicalize,
    context_bound,
    detransform_action,
    detransform_state,
    invert,
    transform_action,
    transform_state,
)
from clmac.sim import Observation
from clmac.spaces import Action, AgentState

TYPES = ["TDMA(3,0,8)", "TDMA(3,4,8)", "CSMA(2,4,6)", "CSMA(3,4,8)", "CSMA(1,4,6)"]


@st.composite
def context_and_perm(draw):
    C = draw(st.integers(1, 5))
    ctx = tuple(tuple(sorted(draw(st.lists(st.sampled_from(TYPES), max_size=3)))) for _ in range(C))
    sigma = draw(st.permutations(range(C)))
    return ctx, tuple(sigma)


@st.composite
def state_for(draw, C, H=4, R=5):
    entries = []
    for _ in range(H):
        if draw(st.booleans()):
            entries.append((None, None))
        else:
            entries.append((draw(st.sampled_from(list(Observation))), Action(draw(st.integers(0, R)), draw(st.integers(0, C - 1)))))
    ratios = tuple(draw(st.floats(0, 3)) for _ in range(C))
    return AgentState(tuple(entries), ratios)


def test_context_bound_values():
    assert context_bound(6, 3) == 56
    assert context_bound(1, 4) == 1
    assert context_bound(3, 1) == 3
    with pytest.raises(ValueError):
        context_bound(0, 3)
    with pytest.raises(TypeError):
        context_bound(2.5, 3)


def test_bound_counts_multisets():
    for types, C in [(2, 3), (3, 3), (4, 2)]:
        keys = {canonicalize(tuple((f"T{t}",) for t in combo)).key for combo in itertools.product(range(types), repeat=C)}
        assert len(keys) == context_bound(types, C)


@settings(max_examples=200, deadline=None)
@given(context_and_perm())
def test_keys_invariant_under_permutation(cp):
    ctx, sigma = cp
    assert canonicalize(apply_permutation(ctx, sigma)).key == canonicalize(ctx).key


@settings(max_examples=200, deadline=None)
@given(context_and_perm())
def test_perm_maps_onto_canonical(cp):
    ctx, _ = cp
    canon = canonicalize(ctx)
    assert apply_permutation(ctx, canon.perm) == canon.channels
    assert invert(invert(canon.perm)) == canon.perm


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_state_and_action_round_trip(data):
    ctx, sigma = data.draw(context_and_perm())
    C = len(ctx)
    s = data.draw(state_for(C))
    assert detransform_state(transform_state(s, sigma), sigma) == s
    a = Action(data.draw(st.integers(0, 5)), data.draw(st.integers(0, C - 1)))
    assert detransform_action(transform_action(a, sigma), sigma) == a


def test_registry_reuses_permuted_context():
    reg = ContextRegistry()
    q1 = (("CSMA(2,4,6)", "TDMA(3,0,8)"), ("TDMA(3,4,8)",), ("CSMA(1,4,6)", "CSMA(3,4,8)"))
    q2 = (q1[0], q1[2], q1[1])
    a, _, created_a = reg.lookup_or_create(q1, 0, object)
    b, perm, created_b = reg.lookup_or_create(q2, 10, object)
    assert created_a and not created_b and a is b
    assert apply_permutation(q2, perm) == canonicalize(q1).channels
    assert a.visits == 2 and len(reg) == 1


def test_registry_without_symmetry_always_creates():
    reg = ContextRegistry(symmetry_aware=False)
    ctx = ((), ("A",))
    for k in range(3):
        _, perm, created = reg.lookup_or_create(ctx, k, object)
        assert created and perm == canonicalize(ctx).perm
    assert len(reg) == 3


def test_registry_spill_round_trip(tmp_path):
    hyper = Hyperparams()
    reg = ContextRegistry(spill_dir=tmp_path, loader=Learner.from_bytes)
    make = lambda: Learner.fresh(hyper, 2, np.random.default_rng(0))  # noqa: E731
    snap, _, _ = reg.lookup_or_create((("A",), ()), 0, make)
    x = np.ones(snap.payload.memory.width)
    q = snap.payload.online.q_values(x)
    reg.lookup_or_create((("B",), ()), 1, make)
    assert snap.payload is None
    again, _, created = reg.lookup_or_create((("A",), ()), 2, make)
    assert not created and np.array_equal(again.payload.online.q_values(x), q)


def test_registry_reports_corruption(tmp_path):
    reg = ContextRegistry(spill_dir=tmp_path, loader=Learner.from_bytes)
    make = lambda: Learner.fresh(Hyperparams(), 2, np.random.default_rng(0))  # noqa: E731
    reg.lookup_or_create((("A",), ()), 0, make)
    reg.lookup_or_create((("B",), ()), 1, make)
    for f in tmp_path.iterdir():
        f.write_bytes(b"garbage")
    with pytest.raises(CorruptSnapshotError):
        reg.lookup_or_create((("A",), ()), 2, make)


def test_registry_dump(tmp_path):
    reg = ContextRegistry()
    reg.lookup_or_create((("A",),), 0, object)
    reg.dump_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "key,visits,decisions_trained,created_slot" and len(lines) == 2
