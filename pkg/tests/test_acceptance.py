"""Acceptance battery, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass/fail line
per criterion, or ``perfektor suite`` for the CSV version.  The statistical
criteria run at their stated sizes (1e5 replicates and the like), so this
module takes several minutes.
"""

import pytest

from perfektor import acceptance


def _check(fn):
    result = fn()
    print(f"\n[{'PASS' if result.passed else 'FAIL'}] {result.name}: {result.detail}")
    assert result.passed, f"{result.name}: {result.detail}"


def test_criterion_1_reconstruction():
    _check(acceptance.criterion_1_reconstruction)


def test_criterion_2_alpha_closed_form():
    _check(acceptance.criterion_2_alpha_closed_form)


def test_criterion_3_spontaneous():
    _check(acceptance.criterion_3_spontaneous)


def test_criterion_4_sampler_vs_oracle():
    _check(acceptance.criterion_4_sampler_vs_oracle)


def test_criterion_5_nstop_bound():
    _check(acceptance.criterion_5_nstop_bound)


def test_criterion_6_coupling_decay():
    _check(acceptance.criterion_6_coupling_decay)


def test_criterion_7_growth_decay():
    _check(acceptance.criterion_7_growth_decay)


def test_criterion_8_bit_costs():
    _check(acceptance.criterion_8_bit_costs)


def test_criterion_9_finitary_property():
    _check(acceptance.criterion_9_finitary_property)


def test_criterion_10_embedded_chain():
    _check(acceptance.criterion_10_embedded_chain)
