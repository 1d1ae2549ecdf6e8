import subprocess
import sys

import numpy as np
import pytest

from elcrf import kernels
from elcrf.kernels import _pykernels
from elcrf.potentials import NEG_INF


def _ck():
    if "compiled" not in kernels.available_backends():
        pytest.skip("compiled extension not built")
    from elcrf.kernels import _ckernels
    return _ckernels


def test_fallback_selected_when_extension_missing():
    code = ("import sys; sys.modules['elcrf.kernels._ckernels'] = None\n"
            "from elcrf import kernels, inference\n"
            "import numpy as np\n"
            "assert kernels.backend_name() == 'python', kernels.backend_name()\n"
            "assert kernels.available_backends() == ['python']\n"
            "lat = inference.Lattice(np.zeros((2, 2)), np.zeros((2, 2)))\n"
            "print(round(inference.forward_log_partition(lat), 6))\n")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "1.386294"


def _cases(rng):
    for T, M in [(1, 1), (1, 4), (2, 3), (7, 5), (30, 12)]:
        psi = rng.normal(scale=3.0, size=(T, M))
        trans = rng.normal(scale=3.0, size=(M, M))
        yield psi, trans
        masked = trans.copy()
        masked[rng.random((M, M)) < 0.4] = NEG_INF
        psi_m = psi.copy()
        psi_m[0, rng.random(M) < 0.3] = NEG_INF
        yield psi_m, masked


def test_forward_backward_agree(rng):
    c = _ck()
    for psi, trans in _cases(rng):
        np.testing.assert_allclose(c.forward(psi, trans), _pykernels.forward(psi, trans), rtol=1e-12, atol=1e-9)
        np.testing.assert_allclose(c.backward(psi, trans), _pykernels.backward(psi, trans), rtol=1e-12, atol=1e-9)


def test_edge_expectations_agree(rng):
    c = _ck()
    for psi, trans in _cases(rng):
        alpha = _pykernels.forward(psi, trans)
        beta = _pykernels.backward(psi, trans)
        log_z = float(np.logaddexp.reduce(alpha[-1]))
        if log_z < NEG_INF / 2:
            continue
        np.testing.assert_allclose(c.edge_expectations(psi, trans, alpha, beta, log_z),
                                   _pykernels.edge_expectations(psi, trans, alpha, beta, log_z),
                                   rtol=1e-10, atol=1e-12)


def test_viterbi_identical(rng):
    c = _ck()
    for psi, trans in _cases(rng):
        zc, sc = c.viterbi(psi, trans)
        zp, sp = _pykernels.viterbi(psi, trans)
        np.testing.assert_array_equal(zc, zp)
        assert sc == pytest.approx(sp, rel=1e-12)


def test_viterbi_ties_identical():
    c = _ck()
    psi = np.zeros((5, 4))
    trans = np.zeros((4, 4))
    np.testing.assert_array_equal(c.viterbi(psi, trans)[0], _pykernels.viterbi(psi, trans)[0])


def test_switching_backends():
    previous = kernels.backend_name()
    try:
        kernels.use_backend("python")
        assert kernels.backend_name() == "python"
        with pytest.raises(ValueError):
            kernels.use_backend("gpu")
    finally:
        kernels.use_backend(previous)


def test_extreme_scales_agree(rng):
    # large scores push the scaled sums into the exact fallback paths
    c = _ck()
    for scale in (50.0, 400.0, 2000.0):
        for T, M in [(6, 4), (12, 9)]:
            psi = rng.normal(scale=scale, size=(T, M))
            trans = rng.normal(scale=scale, size=(M, M))
            trans[rng.random((M, M)) < 0.3] = NEG_INF
            alpha_c, alpha_p = c.forward(psi, trans), _pykernels.forward(psi, trans)
            beta_c, beta_p = c.backward(psi, trans), _pykernels.backward(psi, trans)
            np.testing.assert_allclose(alpha_c, alpha_p, rtol=1e-12, atol=1e-9)
            np.testing.assert_allclose(beta_c, beta_p, rtol=1e-12, atol=1e-9)
            log_z = float(np.logaddexp.reduce(alpha_p[-1]))
            if log_z < NEG_INF / 2:
                continue
            e_c = c.edge_expectations(psi, trans, alpha_p, beta_p, log_z)
            e_p = _pykernels.edge_expectations(psi, trans, alpha_p, beta_p, log_z)
            np.testing.assert_allclose(e_c, e_p, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(e_c.sum(), T - 1, rtol=1e-9)
