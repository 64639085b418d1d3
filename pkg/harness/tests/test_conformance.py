import pytest

from nnharness.conformance import run_gate
from nnharness.data import read_manifest, split_rows


def test_loss_conformance_gate(tiny_dataset):
    rows = split_rows(read_manifest(tiny_dataset), "all")[:2]
    worst = run_gate(rows, tiny_dataset)
    assert worst  # at least one metric compared
    for key, rel in worst.items():
        assert rel <= 1e-4, f"{key}: {rel}"
