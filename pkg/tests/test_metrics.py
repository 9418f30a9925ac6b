import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qmetro.channels import amplitude_damping, noise_for_overlap, unitary_mixture, x_dephasing
from qmetro.metrics import (
    EncodingFamily, QfiResult, ape, central_difference, db_gain, drho_dphi, heisenberg_limit,
    projector_derivative, qcrb_variance, qfi, qfi_field, qfi_pure, qfi_symmetric, sql,
)
from qmetro.sensing import SensingConfig, phase_generator, target_state
from qmetro.states import eigendecompose, projector, random_density, random_unitary

seeds = st.integers(0, 2**32 - 1)
phis = st.floats(0.05, 3.0)


def random_pair(rng, n, rank=None):
    rho = random_density(n, rng, rank)
    a = rng.standard_normal((2**n,) * 2) + 1j * rng.standard_normal((2**n,) * 2)
    h = a + a.conj().T
    return rho, -1j * (h @ rho - rho @ h)


class TestQfiForms:
    @given(seeds, st.integers(1, 3), st.integers(1, 8))
    def test_forms_agree(self, seed, n, rank):
        rho, drho = random_pair(np.random.default_rng(seed), n, min(rank, 2**n))
        assert qfi(rho, drho).value == pytest.approx(qfi_symmetric(rho, drho), rel=1e-9, abs=1e-9)

    @given(phis, st.integers(1, 6))
    def test_pure_ghz(self, phi, n):
        fam = EncodingFamily(n)
        assert qfi(fam.rho(phi), fam.drho(phi)).value == pytest.approx(n**2, abs=1e-9)
        psi = target_state(phi, n)
        assert qfi_pure(psi, -1j * phase_generator(n) @ psi) == pytest.approx(n**2, abs=1e-9)

    @given(phis, st.integers(1, 4), st.floats(0.0, 1.0))
    def test_mixed_rotation(self, phi, n, coherence):
        # a Bloch vector of length r rotating at rate n has QFI r^2 n^2
        fam = EncodingFamily(n, (x_dephasing(coherence, n),))
        assert qfi(fam.rho(phi), fam.drho(phi)).value == pytest.approx(coherence**2 * n**2, abs=1e-9)

    def test_maximally_mixed_is_zero(self):
        fam = EncodingFamily(2, (x_dephasing(0.0, 2),))
        assert qfi(fam.rho(0.4), fam.drho(0.4)).value == pytest.approx(0.0, abs=1e-12)

    def test_result_type(self):
        fam = EncodingFamily(1)
        res = qfi(fam.rho(0.3), fam.drho(0.3))
        assert isinstance(res, QfiResult) and res.parameter == "phi" and float(res) == res.value

    @pytest.mark.parametrize("drho", [np.array([[0, 1], [0, 0]]), np.eye(2)])
    def test_rejects_bad_derivative(self, drho):
        with pytest.raises(ValueError):
            qfi(np.eye(2) / 2, drho)

    def test_rejects_shape(self):
        with pytest.raises(ValueError):
            qfi(np.eye(2) / 2, np.zeros((4, 4)))


class TestDerivatives:
    @given(phis, st.integers(1, 4), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_analytic_vs_central(self, phi, n, p0, ov, g):
        n_op = noise_for_overlap(target_state(phi, n), ov)
        fam = EncodingFamily(n, (unitary_mixture(p0, n_op), amplitude_damping(g, n)))
        fd = central_difference(fam.rho, phi)
        assert np.max(np.abs(fam.drho(phi) - fd)) < 1e-6

    def test_fallback_only_when_asked(self):
        fam = EncodingFamily(2)
        with pytest.raises(TypeError):
            drho_dphi(fam.rho, 0.3)
        d = drho_dphi(fam.rho, 0.3, fallback=True)
        assert np.allclose(d, drho_dphi(fam, 0.3), atol=1e-6)

    def test_then(self):
        fam = EncodingFamily(1).then(x_dephasing(0.5))
        assert len(fam.channels) == 1

    @given(seeds, st.floats(0.05, 3.0))
    def test_projector_derivative_matches_eigenvector_motion(self, seed, phi):
        rng = np.random.default_rng(seed)
        n = 2
        n_op = random_unitary(4, rng)
        fam = EncodingFamily(n, (unitary_mixture(0.8, n_op),))
        rho = fam.rho(phi)
        lam, vecs = eigendecompose(rho)
        if lam[0] - lam[1] < 1e-3:
            return
        dp = projector_derivative(rho, fam.drho(phi), vecs)
        h = 1e-5
        top = lambda x: projector(eigendecompose(fam.rho(x)).eigenvectors[:, 0])
        fd = (top(phi + h) - top(phi - h)) / (2 * h)
        assert np.max(np.abs(dp - fd)) < 1e-5 / (lam[0] - lam[1])

    def test_projector_derivative_degenerate(self):
        with pytest.raises(ValueError):
            projector_derivative(np.eye(2) / 2, np.zeros((2, 2)), np.eye(2))


class TestScalars:
    @pytest.mark.parametrize("a,f,expect", [(0.25, 0.25, 0.0), (1.0, 3.0, 1.0), (3.0, 1.0, 1.0), (2.0, 0.0, 2.0)])
    def test_ape(self, a, f, expect):
        assert ape(a, f) == pytest.approx(expect)

    def test_ape_undefined(self):
        with pytest.raises(ZeroDivisionError):
            ape(1.0, -1.0)

    def test_qcrb(self):
        assert qcrb_variance(100, 4.0) == pytest.approx(1 / 400)
        assert qcrb_variance(10, 0.0) == math.inf
        with pytest.raises(ValueError):
            qcrb_variance(0, 1.0)
        with pytest.raises(ValueError):
            qcrb_variance(1, -1.0)

    def test_db(self):
        assert db_gain(100.0, 1.0) == pytest.approx(20.0)
        assert db_gain(2.0, 2.0) == 0.0
        with pytest.raises(ValueError):
            db_gain(0.0, 1.0)

    @pytest.mark.parametrize("n", [1, 2, 4, 6])
    def test_limits(self, n):
        cfg = SensingConfig(tau=20e-9)
        assert heisenberg_limit(n, cfg) == pytest.approx(n**2 * cfg.scale**2)
        assert sql(n, cfg) == pytest.approx(n * cfg.scale**2)
        assert heisenberg_limit(n, cfg) >= sql(n, cfg)

    def test_limits_reject(self):
        with pytest.raises(ValueError):
            heisenberg_limit(0, SensingConfig())
        with pytest.raises(ValueError):
            sql(0, SensingConfig())

    def test_field_chain_rule(self):
        cfg = SensingConfig(n=2)
        fam = EncodingFamily(2)
        res = qfi_field(fam.rho(cfg.phase), fam.drho(cfg.phase), cfg)
        assert res.parameter == "B_s"
        assert res.value == pytest.approx(heisenberg_limit(2, cfg), rel=1e-9)
