"""
Invariant suite: passes on sound models, fails loudly on a broken mask
"""

import numpy as np
import pytest

from dnnet_cli.commands.verify_commands import fresh_model
from dnnet_cli.core.errors import VerificationError
from dnnet_cli.slicing.cost import cost_table
from dnnet_cli.verify.suite import (
    CHECKS,
    check_causality,
    check_cost_oracle,
    check_mask_structure,
    check_slice_equivalence,
    probe_inputs,
    run_suite,
)


@pytest.fixture
def leaky_model():
    """Toy model whose first conv lets output channel 0 (group 1) read channel 4 (group 2)"""
    model = fresh_model("toy")
    kernel = model.blocks[0].conv1.kernel
    mask = kernel.mask.copy()
    mask[0, 4, 1, 1] = True
    mask.setflags(write=False)
    kernel._mask = mask
    kernel.weight.data[0, 4, 1, 1] = 0.5
    return model


def test_suite_passes_on_a_fresh_model(toy_model):
    steps = []
    report = run_suite(toy_model, inputs=12, grad_samples=16, selector_draws=50, seed=0, progress=steps.append)
    assert report.passed, report.to_frame().to_string()
    assert steps == list(CHECKS)
    assert [c.name for c in report.checks] == list(CHECKS)
    report.raise_for_failures()


def test_report_frame_and_lookup(toy_model):
    report = run_suite(toy_model, inputs=6, grad_samples=8, selector_draws=20)
    frame = report.to_frame()
    assert list(frame.columns) == ["name", "passed", "measured", "detail"]
    assert frame["passed"].all()
    assert report.get("causality").measured == 0.0
    with pytest.raises(KeyError):
        report.get("nope")


def test_broken_mask_is_caught(leaky_model):
    x, _ = probe_inputs(leaky_model, 6)
    structure = check_mask_structure(leaky_model)
    assert not structure.passed
    assert "blocks.0.conv1" in structure.detail
    causality = check_causality(leaky_model, x, slices=[(1, 1), (2, 1)])
    assert not causality.passed
    assert causality.measured > 0


def test_broken_mask_fails_the_report(leaky_model):
    report = run_suite(leaky_model, inputs=6, grad_samples=8, selector_draws=20)
    assert not report.passed
    assert {"mask_structure", "causality"} <= {c.name for c in report.failures}
    with pytest.raises(VerificationError, match="mask_structure"):
        report.raise_for_failures()


def test_equivalence_and_cost_on_unfrozen_model(toy4_model):
    unfrozen = toy4_model.clone().unfreeze()
    x, _ = probe_inputs(unfrozen, 4)
    assert check_slice_equivalence(unfrozen, x).passed
    assert check_cost_oracle(unfrozen, x).passed
    assert not unfrozen.frozen


def test_probe_inputs_follow_the_model(toy4_model):
    x, labels = probe_inputs(toy4_model, 5, seed=2)
    assert x.shape == (5, 1, 8, 8)
    assert x.dtype == toy4_model.dtype
    assert labels.max() < toy4_model.descriptor.classes
    again, _ = probe_inputs(toy4_model, 5, seed=2)
    assert np.array_equal(x, again)


def test_cost_table_matches_plan(toy4_model):
    assert cost_table(toy4_model.plan).shape == (toy4_model.L, toy4_model.C)


@pytest.mark.slow
def test_full_suite_on_toy4(toy4_model):
    report = run_suite(toy4_model)
    assert report.passed, report.to_frame().to_string()
