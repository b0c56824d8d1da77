"""Python bindings for the spmd process pool."""

import os
import shutil

from ._core import *  # noqa: F401,F403
from ._core import run_master as _run_master

_BUNDLED = os.path.join(os.path.dirname(__file__), "bin", "spmd")


def worker_executable():
    """Path of the `spmd` executable that workers are started from."""
    env = os.environ.get("SPMD_WORKER_EXE")
    if env:
        return env
    if os.access(_BUNDLED, os.X_OK):
        return _BUNDLED
    found = shutil.which("spmd")
    if found:
        return found
    raise FileNotFoundError("spmd executable not found; set SPMD_WORKER_EXE")


def run_master(nproc, maxvalue, step, compute=BENCHMARK_WORKLOAD, store=True, workdir=".",  # noqa: F405
               poll_ms=100, timeout_s=600.0, worker_exe=None):
    return _run_master(nproc, maxvalue, step, compute, store, os.fspath(workdir), poll_ms, timeout_s,
                       worker_exe or worker_executable())
