"""Instance and policy documents (JSON) and atomic report output.

Instance document::

    {
      "states": ["Start", "End"],
      "actions": ["go"],
      "gamma": 0.5,
      "initial_dist": {"Start": 1.0},
      "rewards": [{"from": "Start", "action": "go", "to": "End", "value": 1.0}],
      "kernel_scenarios": {
        "Start": [{"weight": 0.5, "rows": {"go": {"Start": 0.25, "End": 0.75}}}, ...],
        "End": [{"weight": 1.0, "rows": {"go": {"End": 1.0}}}]
      },
      "mode": "static"
    }

Omitted reward triples and omitted next states are zero.  States and actions
are indexed in document order.
"""
from __future__ import annotations

import json
import os
import re
import tempfile

import numpy as np

from .bellman import KernelDistribution, SamplingMode
from .mdp import MdpInstance, policy_problems, validate_instance

ACCEPT_TOL = 1e-9
RENORM_TOL = 1e-12

TOP_KEYS = {"states", "actions", "gamma", "initial_dist", "rewards", "kernel_scenarios", "mode"}
REQUIRED_KEYS = TOP_KEYS - {"mode"}
REWARD_KEYS = {"from", "action", "to", "value"}
SCENARIO_KEYS = {"weight", "rows"}
POLICY_KEYS = {"policy"}


class DocumentError(ValueError):
    pass


def _position(text: str | None, key: str) -> str:
    if not text:
        return ""
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    if not m:
        return ""
    line = text.count("\n", 0, m.start()) + 1
    col = m.start() - (text.rfind("\n", 0, m.start()) + 1) + 1
    return f"line {line}, column {col}: "


def _check_keys(obj, allowed, required, where, text):
    if not isinstance(obj, dict):
        raise DocumentError(f"{where} must be an object")
    for key in obj:
        if key not in allowed:
            raise DocumentError(f"{_position(text, key)}unknown key {key!r} in {where}")
    missing = sorted(set(required) - set(obj))
    if missing:
        raise DocumentError(f"missing key(s) {missing} in {where}")


def _parse_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _prob_vector(mapping, names, where, text):
    if not isinstance(mapping, dict):
        raise DocumentError(f"{where} must map names to probabilities")
    index = {n: i for i, n in enumerate(names)}
    out = np.zeros(len(names))
    for name, p in mapping.items():
        if name not in index:
            raise DocumentError(f"{_position(text, name)}unknown name {name!r} in {where}")
        out[index[name]] = float(p)
    total = out.sum()
    if np.any(out < 0) or not np.all(np.isfinite(out)) or abs(total - 1.0) > ACCEPT_TOL:
        raise DocumentError(f"{where} is not a probability vector (sum {total!r})")
    if abs(total - 1.0) > RENORM_TOL:
        out = out / total
    return out


def _names(doc, key):
    names = doc[key]
    if not isinstance(names, list) or not names or not all(isinstance(n, str) for n in names):
        raise DocumentError(f"{key} must be a non-empty list of names")
    if len(set(names)) != len(names):
        raise DocumentError(f"duplicate names in {key}")
    return tuple(names)


def doc_to_instance(doc: dict, text: str | None = None):
    """``(instance, nu, mode)`` from a parsed instance document."""
    _check_keys(doc, TOP_KEYS, REQUIRED_KEYS, "instance document", text)
    states = _names(doc, "states")
    actions = _names(doc, "actions")
    S, A = len(states), len(actions)
    s_index = {n: i for i, n in enumerate(states)}
    a_index = {n: i for i, n in enumerate(actions)}
    gamma = doc["gamma"]
    if not isinstance(gamma, (int, float)) or isinstance(gamma, bool):
        raise DocumentError("gamma must be a number")
    mu = _prob_vector(doc["initial_dist"], states, "initial_dist", text)

    rewards = np.zeros((S, A, S))
    if not isinstance(doc["rewards"], list):
        raise DocumentError("rewards must be a list")
    for i, entry in enumerate(doc["rewards"]):
        _check_keys(entry, REWARD_KEYS, REWARD_KEYS, f"rewards[{i}]", text)
        try:
            s, a, t = s_index[entry["from"]], a_index[entry["action"]], s_index[entry["to"]]
        except KeyError as exc:
            raise DocumentError(f"rewards[{i}]: unknown name {exc.args[0]!r}") from None
        rewards[s, a, t] = float(entry["value"])

    scen_doc = doc["kernel_scenarios"]
    if not isinstance(scen_doc, dict):
        raise DocumentError("kernel_scenarios must map states to scenario lists")
    for name in scen_doc:
        if name not in s_index:
            raise DocumentError(f"{_position(text, name)}unknown state {name!r} in kernel_scenarios")
    scenarios = []
    for s_name in states:
        if s_name not in scen_doc:
            raise DocumentError(f"kernel_scenarios has no entry for state {s_name!r}")
        entries = scen_doc[s_name]
        if not isinstance(entries, list) or not entries:
            raise DocumentError(f"kernel_scenarios[{s_name!r}] must be a non-empty list")
        weights, blocks = [], []
        for k, entry in enumerate(entries):
            where = f"kernel_scenarios[{s_name!r}][{k}]"
            _check_keys(entry, SCENARIO_KEYS, SCENARIO_KEYS, where, text)
            rows = entry["rows"]
            if not isinstance(rows, dict):
                raise DocumentError(f"{where}.rows must map actions to rows")
            for a_name in rows:
                if a_name not in a_index:
                    raise DocumentError(f"{_position(text, a_name)}unknown action {a_name!r} in {where}")
            block = np.zeros((A, S))
            for a_name in actions:
                if a_name not in rows:
                    raise DocumentError(f"{where} has no row for action {a_name!r}")
                block[a_index[a_name]] = _prob_vector(rows[a_name], states, f"{where}.rows[{a_name!r}]", text)
            w = float(entry["weight"])
            if not w > 0:
                raise DocumentError(f"{where}: weight must be positive")
            weights.append(w)
            blocks.append(block)
        total = sum(weights)
        if abs(total - 1.0) > ACCEPT_TOL:
            raise DocumentError(f"scenario weights of state {s_name!r} sum to {total!r}")
        if abs(total - 1.0) > RENORM_TOL:
            weights = [w / total for w in weights]
        scenarios.append(list(zip(weights, blocks)))

    try:
        mode = SamplingMode(doc.get("mode", "static"))
    except ValueError:
        raise DocumentError(f"mode must be 'static' or 'resampled', got {doc.get('mode')!r}") from None
    inst = MdpInstance(rewards, float(gamma), mu, states, actions)
    nu = KernelDistribution.from_scenarios(scenarios)
    problems = validate_instance(inst) + nu.problems()
    if problems:
        raise DocumentError("; ".join(problems))
    return inst, nu, mode


def instance_to_doc(instance: MdpInstance, nu: KernelDistribution, mode=SamplingMode.STATIC) -> dict:
    states, actions = list(instance.state_names), list(instance.action_names)
    rewards = [
        {"from": states[s], "action": actions[a], "to": states[t], "value": float(instance.rewards[s, a, t])}
        for s, a, t in zip(*np.nonzero(instance.rewards))
    ]
    scen = {}
    for s, name in enumerate(states):
        scen[name] = [
            {
                "weight": w,
                "rows": {
                    actions[a]: {states[t]: float(block[a, t]) for t in np.flatnonzero(block[a])}
                    for a in range(len(actions))
                },
            }
            for w, block in nu.scenarios(s)
        ]
    return {
        "states": states,
        "actions": actions,
        "gamma": instance.discount,
        "initial_dist": {states[s]: float(p) for s, p in enumerate(instance.initial_dist) if p != 0},
        "rewards": rewards,
        "kernel_scenarios": scen,
        "mode": SamplingMode(mode).value,
    }


def doc_to_policy(doc: dict, instance: MdpInstance, text: str | None = None) -> np.ndarray:
    """Policy matrix from ``{"policy": {state: {action: prob}}}``; missing states are an error."""
    _check_keys(doc, POLICY_KEYS, POLICY_KEYS, "policy document", text)
    rows = doc["policy"]
    if not isinstance(rows, dict):
        raise DocumentError("policy must map states to action distributions")
    for name in rows:
        if name not in instance.state_names:
            raise DocumentError(f"{_position(text, name)}unknown state {name!r} in policy")
    pi = np.zeros((instance.n_states, instance.n_actions))
    for s, name in enumerate(instance.state_names):
        if name not in rows:
            raise DocumentError(f"policy has no row for state {name!r}")
        pi[s] = _prob_vector(rows[name], instance.action_names, f"policy[{name!r}]", text)
    problems = policy_problems(pi, instance.n_states, instance.n_actions)
    if problems:
        raise DocumentError("; ".join(problems))
    return pi


def policy_to_doc(policy, instance: MdpInstance) -> dict:
    policy = np.asarray(policy, dtype=float)
    return {
        "policy": {
            name: {instance.action_names[a]: float(policy[s, a]) for a in np.flatnonzero(policy[s])}
            for s, name in enumerate(instance.state_names)
        }
    }


def _read(path) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def load_instance(path):
    text = _read(path)
    return doc_to_instance(_parse_json(text), text)


def load_policy(path, instance: MdpInstance) -> np.ndarray:
    text = _read(path)
    return doc_to_policy(_parse_json(text), instance, text)


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_atomic(path, text: str):
    """Write via a temporary file in the target directory and rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_instance(path, instance, nu, mode=SamplingMode.STATIC):
    write_atomic(path, dumps(instance_to_doc(instance, nu, mode)))


def save_policy(path, policy, instance):
    write_atomic(path, dumps(policy_to_doc(policy, instance)))
