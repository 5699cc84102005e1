import json
import sys
import time
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(Path(__file__).resolve().parent))

from lincomb.cli import main  # noqa: E402


class PipelineRuns:
    """Full ``lincomb run`` per dataset config, executed at most once per session."""

    def __init__(self, base: Path):
        self.base = base
        self._cache = {}

    def run(self, name: str, tag: str = "a"):
        key = (name, tag)
        if key not in self._cache:
            out = self.base / f"{name}-{tag}"
            t0 = time.perf_counter()
            code = main(["run", "-c", str(ROOT / "configs" / f"{name}.ini"), "-o", str(out)])
            elapsed = time.perf_counter() - t0
            assert code == 0, f"pipeline {name} exited with {code}"
            self._cache[key] = {
                "out": out,
                "seconds": elapsed,
                "metrics": json.loads((out / "metrics.json").read_text()),
                "weights": json.loads((out / "weights.json").read_text()),
            }
        return self._cache[key]


@pytest.fixture(scope="session")
def pipelines(tmp_path_factory):
    return PipelineRuns(tmp_path_factory.mktemp("pipelines"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
