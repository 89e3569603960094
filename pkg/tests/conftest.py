"""Shared fixtures.

The reference pipeline run is expensive (CNN-LSTM training dominates), so
it executes once per session through the real CLI entry point and every
test that needs its artefacts reads from the same directory.
"""

import json
import time
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
REFERENCE_CONFIG = REPO_ROOT / "configs" / "reference.json"


@pytest.fixture(scope="session")
def reference_run(tmp_path_factory):
    """Full pipeline on the reference config; returns paths and timing."""
    from insarcast import cli

    out_dir = tmp_path_factory.mktemp("reference_run")
    argv = [
        "pipeline",
        "--config", str(REFERENCE_CONFIG),
        "--set", f"paths.output_dir={out_dir}",
    ]
    started = time.perf_counter()
    code = cli.main(argv)
    elapsed = time.perf_counter() - started
    assert code == 0, "reference pipeline exited non-zero"
    metrics = json.loads((out_dir / "metrics.json").read_text(encoding="utf-8"))
    return {"out_dir": out_dir, "elapsed": elapsed, "metrics": metrics}
