import json

import pytest

from morse_pi1.continuation import (EndpointMismatch, StepMap, compose, identity_map,
                                    verify_theorem_quotient)
from morse_pi1.functoriality import det2
from morse_pi1.mscomplex import torus_complex, word_str

I2 = [[1, 0], [0, 1]]


def _texts(sm):
    return {sid: word_str(w) for sid, w in sm.images.items()}


def test_identity_continuation(phi_identity):
    assert _texts(phi_identity) == {0: "a", 1: "b"}
    assert phi_identity.transport == {0: 0}
    assert phi_identity.abelian_matrix() == I2


@pytest.mark.parametrize("name", ["phi_forward", "phi_back"])
def test_translated_continuations(name, request):
    sm = request.getfixturevalue(name)
    assert _texts(sm) == {0: "a", 1: "b"}
    assert sm.abelian_matrix() == I2
    assert sm.check_coherence()


@pytest.mark.parametrize("name", ["phi_identity", "phi_forward", "phi_back"])
def test_relators_descend(name, request):
    counts = verify_theorem_quotient(request.getfixturevalue(name))["counts"]
    assert counts == {"Trivial": 1, "Nontrivial": 0, "Unknown": 0}


def test_shear_graft_matrix(grafts):
    sm, dims = grafts["shear"]
    assert _texts(sm) == {0: "a", 1: "a b"}
    M = sm.abelian_matrix()
    assert M == [[1, 1], [0, 1]]
    assert det2(M) == 1 and M[0][0] + M[1][1] == 2
    assert not dims["anomalies"]


def test_identity_and_constant_grafts(grafts):
    sm, dims = grafts["identity"]
    assert sm.abelian_matrix() == I2 and not dims["anomalies"]
    sm, dims = grafts["constant"]
    assert _texts(sm) == {0: "1", 1: "1"}
    assert sm.abelian_matrix() == [[0, 0], [0, 0]] and not dims["anomalies"]


def test_graft_rigid_entries_have_index_difference_one(grafts):
    for sm, dims in grafts.values():
        for e in dims["entries"]:
            if e["kind"] == "rigid":
                assert e["source_index"] - e["target_index"] == 1


def test_step_map_json_round_trip(phi_forward):
    doc = json.loads(json.dumps(phi_forward.to_json()))
    back = StepMap.from_json(doc, phi_forward.source, phi_forward.target)
    assert back.images == phi_forward.images and back.transport == phi_forward.transport


def test_coherence_rejects_broken_images():
    T = torus_complex()
    sm = identity_map(T)
    assert compose(sm, sm).images == sm.images
    bad = StepMap(T, T, {0: ((0, 1),), 1: ((1, 1),)}, {0: 3})
    with pytest.raises(EndpointMismatch):
        bad.check_coherence()


def test_all_produced_maps_are_coherent(phi_identity, phi_forward, phi_back, grafts):
    for sm in [phi_identity, phi_forward, phi_back] + [g[0] for g in grafts.values()]:
        assert sm.check_coherence()
