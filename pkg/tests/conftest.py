"""Shared fixtures, plus an audit of every Viterbi decode made by the suite.

The wrapper installed below checks each decoded path against the lattice it
came from: no masked entry may be used, and when the lattice carries a label
schema's hard constraints the label sequence must satisfy them.
"""
import numpy as np
import pytest

import elcrf
from elcrf import inference, kernels
from elcrf.labels import sequence_is_valid
from elcrf.potentials import INFEASIBLE, ConstraintMask

AUDIT = {"decodes": 0, "constrained": 0, "violations": []}

_real_decode = inference.viterbi_decode


def _encodes_constraints(lattice, states):
    mask = ConstraintMask.from_states(states)
    pairs = bool(np.all(lattice.trans[~mask.allowed] <= INFEASIBLE))
    start = bool(np.all(lattice.psi[0, ~mask.start] <= INFEASIBLE))
    end = bool(np.all(lattice.psi[-1, ~mask.end] <= INFEASIBLE))
    return pairs, start, end


def _audited_decode(lattice, states=None):
    result = _real_decode(lattice, states)
    AUDIT["decodes"] += 1
    z = result.states
    problems = []
    if np.any(lattice.psi[np.arange(lattice.T), z] <= INFEASIBLE):
        problems.append("path uses a masked local score")
    if lattice.T > 1 and np.any(lattice.trans[z[:-1], z[1:]] <= INFEASIBLE):
        problems.append("path uses a masked transition")
    if states is not None:
        pairs, start, end = _encodes_constraints(lattice, states)
        if pairs and start and end:
            AUDIT["constrained"] += 1
            if not sequence_is_valid(result.labels, states.schema):
                problems.append(f"label sequence violates the scheme: {result.labels}")
    if problems:
        AUDIT["violations"].append(problems)
    return result


inference.viterbi_decode = _audited_decode
elcrf.viterbi_decode = _audited_decode


@pytest.fixture(autouse=True)
def _no_new_decode_violations():
    before = len(AUDIT["violations"])
    yield
    new = AUDIT["violations"][before:]
    assert not new, f"decode audit found violations: {new[:3]}"


def pytest_collection_modifyitems(items):
    # the audit criterion must see every other decode first
    last = [it for it in items if "criterion_6" in it.name]
    items[:] = [it for it in items if it not in last] + last


def pytest_terminal_summary(terminalreporter):
    terminalreporter.write_line(
        f"decode audit: {AUDIT['decodes']} decodes, {AUDIT['constrained']} under full scheme "
        f"constraints, {len(AUDIT['violations'])} violations")


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.backend_name()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
