import runpy
from pathlib import Path

import pytest

from geosplat import backend

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_render.py"


@pytest.mark.skipif(backend.compiled_kernels is None, reason="compiled kernels not built")
def test_benchmark_runs(capsys):
    main = runpy.run_path(str(BENCH))["main"]
    assert main(["--sizes", "16", "--gaussians", "20", "--repeat", "1"]) == 0
    row = capsys.readouterr().out.splitlines()[-1]
    assert float(row.split("|")[-1]) < 1e-9
