import numpy as np
import pytest

from conftest import random_theta
from hypsigma import _kernels
from hypsigma import mc_sampler as mc
from hypsigma.dual_action import ModelParams
from hypsigma.lattice import build_lattice

needs_compiled = pytest.mark.skipif(_kernels.compiled is None, reason="extension not built")


def test_backend_reported():
    assert _kernels.BACKEND in ("cython", "python")
    if _kernels.compiled is not None:
        assert _kernels.BACKEND == "cython"


@needs_compiled
@pytest.mark.parametrize("d, L", [(1, 5), (2, 2), (2, 4), (3, 3)])
def test_compiled_python_reference_sweeps_agree(d, L):
    lat = build_lattice(d, L)
    p = ModelParams(N=12, lam=1.5)
    start = random_theta(np.random.default_rng(d * 10 + L), lat.V, 0.4)
    cfgs = [mc.ThetaConfig.initial(lat, 0, start) for _ in range(3)]
    variants = [("fast", _kernels.compiled.sweep_lowrank), ("fast", _kernels.python.sweep_lowrank),
                ("reference", None)]
    for sweep in range(15):
        counts = [mc.metropolis_sweep(c, p, 0.5, np.random.default_rng(sweep), m, k)
                  for c, (m, k) in zip(cfgs, variants)]
        assert len(set(counts)) == 1
        ref = cfgs[2]
        for c in cfgs[:2]:
            assert np.max(np.abs(c.theta - ref.theta)) <= 1e-10
            assert abs(c.logdet - ref.logdet) <= 1e-10
            assert np.max(np.abs(c.G - ref.G)) <= 1e-10


@needs_compiled
def test_correlator_kernels_agree():
    lat = build_lattice(2, 4)
    p = ModelParams(N=40, lam=1.0)
    cfg = mc.ThetaConfig.initial(lat, 3, random_theta(np.random.default_rng(0), lat.V, 0.5, x0=3))
    a = mc.translation_averaged(cfg, p, _kernels.compiled.accumulate_correlator)
    b = mc.translation_averaged(cfg, p, _kernels.python.accumulate_correlator)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)
    assert a[0] == pytest.approx(1.0, abs=1e-14)


def test_pure_python_selection(monkeypatch):
    import importlib

    monkeypatch.setenv("HYPSIGMA_PURE_PYTHON", "1")
    mod = importlib.reload(_kernels)
    try:
        assert mod.BACKEND == "python" and mod.sweep_lowrank is mod.python.sweep_lowrank
    finally:
        monkeypatch.delenv("HYPSIGMA_PURE_PYTHON")
        importlib.reload(_kernels)
