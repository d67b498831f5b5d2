from types import MappingProxyType

import pytest
from hypothesis import given, strategies as st

from abp.model import Capability as C
from abp.store import (
    CapabilityViolation,
    InstanceState,
    NewInstance,
    NotAvailable,
    ObjectStore,
    UnknownInstance,
)

ALL = frozenset(C)


@pytest.fixture
def store():
    return ObjectStore({"reader": frozenset({C.CREATE, C.READ}), "admin": ALL})


def test_create_records_provenance(store):
    store.step = 3
    iid = store.apply_operation("reader", C.CREATE, NewInstance("doc", "OK", {"k": "v"}))
    inst = store[iid]
    assert (inst.producer, inst.step, inst.variant, inst.state) == ("reader", 3, "OK", InstanceState.AVAILABLE)
    assert iid == "doc#1"
    assert store.apply_operation("reader", C.READ, iid) == {"k": "v"}


def test_delete_without_capability(store):
    iid = store.seed("doc")
    before = store.to_json()
    with pytest.raises(CapabilityViolation) as err:
        store.apply_operation("reader", C.DELETE, iid)
    assert (err.value.actor, err.value.op) == ("reader", C.DELETE)
    assert store.to_json() == before


def test_unknown_actor_has_no_capabilities(store):
    with pytest.raises(CapabilityViolation):
        store.apply_operation("stranger", C.CREATE, NewInstance("doc"))


def test_archive_grows_by_one(store):
    iid = store.seed("doc")
    n = len(store.archive)
    store.apply_operation("admin", C.ARCHIVE, iid)
    assert len(store.archive) == n + 1
    assert store.archive[-1].reason == "archived"
    assert store[iid].state is InstanceState.ARCHIVED
    with pytest.raises(NotAvailable):
        store.apply_operation("admin", C.READ, iid)


def test_delete_leaves_tombstone(store):
    iid = store.seed("doc")
    store.apply_operation("admin", C.DELETE, iid)
    assert iid in store
    assert store.archive[-1].instance.state is InstanceState.DELETED


def test_update_merges_payload(store):
    iid = store.seed("doc", payload={"a": "1"})
    store.apply_operation("admin", C.UPDATE, (iid, {"b": "2"}))
    assert dict(store[iid].payload) == {"a": "1", "b": "2"}
    with pytest.raises(CapabilityViolation):
        store.apply_operation("reader", C.UPDATE, (iid, {"a": "x"}))


def test_create_needs_new_instance(store):
    with pytest.raises(TypeError):
        store.apply_operation("admin", C.CREATE, "doc")


def test_unknown_instance(store):
    with pytest.raises(UnknownInstance):
        store.apply_operation("admin", C.READ, "ghost#9")


def test_snapshot_is_isolated(store):
    iid = store.seed("doc", payload={"a": "1"})
    view = store.snapshot()
    store.apply_operation("admin", C.UPDATE, (iid, {"a": "2"}))
    store.apply_operation("admin", C.ARCHIVE, iid)
    store.seed("other")
    assert len(view) == 1
    assert dict(view.instances[0].payload) == {"a": "1"}
    assert view.archive == ()
    assert isinstance(view.instances[0].payload, MappingProxyType)


def test_consume_then_archive(store):
    iid = store.seed("doc")
    store.consume(iid)
    assert store.available() == []
    assert store.archive_consumed() == [iid]
    assert store.archive[-1].reason == "consumed"
    with pytest.raises(NotAvailable):
        store.consume(iid)


def test_copy_is_independent(store):
    iid = store.seed("doc")
    clone = store.copy()
    clone.apply_operation("admin", C.DELETE, iid)
    assert store[iid].state is InstanceState.AVAILABLE


ops = st.lists(
    st.tuples(st.sampled_from(["reader", "admin"]), st.sampled_from(list(C)), st.integers(0, 20)),
    max_size=40,
)


@given(ops)
def test_conservation(sequence):
    store = ObjectStore({"reader": frozenset({C.CREATE, C.READ}), "admin": ALL})
    created = 0
    archive_len = 0
    for actor, op, pick in sequence:
        ids = list(store._instances)
        target = NewInstance("t") if op is C.CREATE else (ids[pick % len(ids)] if ids else "t#0")
        if op is C.UPDATE:
            target = (target, {"n": str(pick)})
        before = store.to_json()
        try:
            store.apply_operation(actor, op, target)
        except (CapabilityViolation, NotAvailable, UnknownInstance):
            assert store.to_json() == before
            continue
        created += op is C.CREATE
        assert len(store.archive) >= archive_len
        archive_len = len(store.archive)
    # every instance ever created is still present in exactly one state
    assert len(store) == created
    view = store.snapshot()
    assert sum(len(view.by_state(s)) for s in InstanceState) == created
    gone = len(view.by_state(InstanceState.ARCHIVED)) + len(view.by_state(InstanceState.DELETED))
    assert len(view.archive) == gone
