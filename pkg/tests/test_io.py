import json

import numpy as np
import pytest

from aamdp.bellman import SamplingMode
from aamdp.gallery import build_fig1, build_lemma_mdp, lemma_presets, robust_random
from aamdp.io import (
    DocumentError,
    doc_to_instance,
    doc_to_policy,
    dumps,
    instance_to_doc,
    load_instance,
    load_policy,
    policy_to_doc,
    save_instance,
    save_policy,
    write_atomic,
)

SMALL = {
    "states": ["Start", "End"],
    "actions": ["go"],
    "gamma": 0.5,
    "initial_dist": {"Start": 1.0},
    "rewards": [{"from": "Start", "action": "go", "to": "End", "value": 1.0}],
    "kernel_scenarios": {
        "Start": [{"weight": 1.0, "rows": {"go": {"Start": 0.25, "End": 0.75}}}],
        "End": [{"weight": 1.0, "rows": {"go": {"End": 1.0}}}],
    },
    "mode": "resampled",
}


def test_parse_small_document():
    inst, nu, mode = doc_to_instance(SMALL)
    assert mode is SamplingMode.RESAMPLED
    assert inst.rewards[0, 0, 1] == 1.0 and inst.rewards.sum() == 1.0
    np.testing.assert_allclose(nu.blocks[0, 0, 0], [0.25, 0.75])


def _lemma():
    p = lemma_presets()["var-witness"]
    return build_lemma_mdp(p.X, p.Y, p.Z)


@pytest.mark.parametrize("build", [lambda: build_fig1(3), lambda: robust_random(7, 4, 3, 3), _lemma])
def test_round_trip_is_stable(tmp_path, build):
    inst, nu = build()
    path = tmp_path / "inst.json"
    save_instance(path, inst, nu, SamplingMode.STATIC)
    inst2, nu2, mode = load_instance(path)
    assert inst2 == inst and mode is SamplingMode.STATIC
    np.testing.assert_array_equal(nu2.weights, nu.weights)
    np.testing.assert_array_equal(nu2.blocks, nu.blocks)
    assert dumps(instance_to_doc(inst2, nu2)) == path.read_text()


def test_unknown_key_reports_position(tmp_path):
    text = json.dumps(SMALL, indent=2).replace('"mode"', '"colour": 1,\n  "mode"')
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(DocumentError, match=r"line \d+, column 3: unknown key 'colour'"):
        load_instance(path)


def test_nested_unknown_key():
    doc = json.loads(json.dumps(SMALL))
    doc["rewards"][0]["extra"] = 1
    with pytest.raises(DocumentError, match="unknown key 'extra' in rewards"):
        doc_to_instance(doc)


def test_syntax_error_reports_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "states": [1,\n}')
    with pytest.raises(DocumentError, match=r"line 3, column 1"):
        load_instance(path)


def test_rows_within_tolerance_are_renormalized():
    doc = json.loads(json.dumps(SMALL))
    doc["kernel_scenarios"]["Start"][0]["rows"]["go"] = {"Start": 0.25, "End": 0.75 + 5e-10}
    _, nu, _ = doc_to_instance(doc)
    assert nu.blocks[0, 0, 0].sum() == pytest.approx(1.0, abs=1e-15)
    doc["kernel_scenarios"]["Start"][0]["rows"]["go"] = {"Start": 0.25, "End": 0.76}
    with pytest.raises(DocumentError, match="not a probability vector"):
        doc_to_instance(doc)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d.pop("gamma"), "missing key"),
        (lambda d: d.update(gamma=1.0), "discount"),
        (lambda d: d.update(mode="sometimes"), "mode must be"),
        (lambda d: d["kernel_scenarios"].pop("End"), "no entry for state 'End'"),
        (lambda d: d["rewards"][0].update(to="Nowhere"), "unknown name 'Nowhere'"),
        (lambda d: d.update(states=["A", "A"]), "duplicate"),
    ],
)
def test_validation_errors(mutate, message):
    doc = json.loads(json.dumps(SMALL))
    mutate(doc)
    with pytest.raises(DocumentError, match=message):
        doc_to_instance(doc)


def test_policy_documents(tmp_path):
    inst, nu = robust_random(1, 3, 2, 2)
    pi = np.array([[1.0, 0.0], [0.25, 0.75], [0.0, 1.0]])
    path = tmp_path / "pi.json"
    save_policy(path, pi, inst)
    np.testing.assert_array_equal(load_policy(path, inst), pi)
    doc = policy_to_doc(pi, inst)
    del doc["policy"]["s1"]
    with pytest.raises(DocumentError, match="no row for state 's1'"):
        doc_to_policy(doc, inst)


def test_write_atomic_replaces_and_cleans_up(tmp_path):
    path = tmp_path / "out.txt"
    write_atomic(path, "one")
    write_atomic(path, "two")
    assert path.read_text() == "two"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
