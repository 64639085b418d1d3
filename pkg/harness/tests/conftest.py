import subprocess
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A small reference-built dataset shared by the harness tests."""
    root = tmp_path_factory.mktemp("harness_ds")
    corpus = root / "corpus"
    subprocess.run(
        [
            "python3", "-c",
            "import sys; sys.argv=['x']; "
            "from bsmkit.synth import write_corpus; "
            f"write_corpus({str(corpus)!r}, n_clips=3, seconds=4.0, seed=5)",
        ],
        check=True,
    )
    out = root / "data"
    proc = subprocess.run(
        [
            "bsmkit", "dataset", "--seed", "31", "--scenes", "10",
            "--corpus", str(corpus), "--out", str(out),
        ],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return out
