import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nopa_cascade.errors import ValidationError
from nopa_cascade.network import (
    ExternalSpectrum,
    Loss,
    NetworkChain,
    Nopa,
    PhaseShift,
    correlation_report,
    evaluate,
    loss_channel,
)
from nopa_cascade.nopa import AMPLIFICATION, DEAMPLIFICATION, DecayRates, NopaParams
from nopa_cascade.quad import X_DIFF, X_SUM, Y_DIFF, Y_SUM, SpectralCovariance, combination_variance, vacuum_spectrum

from conftest import random_psd

ALL = (X_SUM, Y_DIFF, X_DIFF, Y_SUM)


def fixed(matrix):
    return ExternalSpectrum(lambda w: SpectralCovariance(matrix, w))


def variances(s):
    return np.array([combination_variance(s, c) for c in ALL])


def flip_phase(nopa):
    p = nopa.params
    return replace(nopa, params=replace(p, pump_phase=p.pump_phase + math.pi))


class TestLoss:
    def test_examples(self):
        s = SpectralCovariance(np.diag([0.212, 4.0, 0.212, 4.0]))
        np.testing.assert_allclose(loss_channel(s, 1.0).matrix, s.matrix)
        np.testing.assert_allclose(loss_channel(s, 0.0).matrix, np.eye(4))
        out = loss_channel(s, 0.539)
        assert out.matrix[0, 0].real == pytest.approx(0.539 * 0.212 + 0.461)
        assert 10 * math.log10(out.matrix[0, 0].real) == pytest.approx(-2.4, abs=0.01)

    def test_per_mode_efficiency(self):
        out = loss_channel(SpectralCovariance(3 * np.eye(4)), (0.5, 0.25))
        np.testing.assert_allclose(np.diag(out.matrix).real, [2.0, 2.0, 1.5, 1.5])

    @pytest.mark.parametrize("bad", [-0.1, 1.1, (0.5, 2.0), (0.1, 0.2, 0.3)])
    def test_invalid_efficiency(self, bad):
        with pytest.raises(ValidationError):
            Loss(bad)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), a=st.floats(0, 1), b=st.floats(0, 1))
    def test_losses_compose_and_commute(self, seed, a, b):
        m = random_psd(np.random.default_rng(seed))
        ab = evaluate(NetworkChain(fixed(m), [Loss(a), Loss(b)]))
        ba = evaluate(NetworkChain(fixed(m), [Loss(b), Loss(a)]))
        one = evaluate(NetworkChain(fixed(m), [Loss(a * b)]))
        np.testing.assert_allclose(ab.matrix, one.matrix, atol=1e-12)
        np.testing.assert_allclose(ba.matrix, one.matrix, atol=1e-12)

    def test_composition_example(self):
        m = random_psd(np.random.default_rng(7))
        a = evaluate(NetworkChain(fixed(m), [Loss(0.8), Loss(0.5)]))
        b = evaluate(NetworkChain(fixed(m), [Loss(0.4)]))
        np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(v=st.floats(0.01, 0.99), eta_hi=st.floats(0.01, 1.0), frac=st.floats(0.0, 0.99))
    def test_loss_moves_squeezing_toward_snl(self, v, eta_hi, frac):
        s = SpectralCovariance(np.diag([v, 1 / v, v, 1 / v]))
        eta_lo = eta_hi * frac
        hi = combination_variance(loss_channel(s, eta_hi), X_SUM) / 2
        lo = combination_variance(loss_channel(s, eta_lo), X_SUM) / 2
        assert v <= hi <= 1.0
        assert hi < lo <= 1.0


class TestChain:
    def test_empty_chain_is_vacuum(self):
        np.testing.assert_array_equal(evaluate(NetworkChain()).matrix, np.eye(4))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), w=st.floats(0, 30), n=st.integers(1, 3))
    def test_inert_resonant_nopas_are_identity(self, seed, w, n):
        m = random_psd(np.random.default_rng(seed))
        nopas = [Nopa(NopaParams(DecayRates.from_linewidth(1.0 + k), 0.0), f"n{k}") for k in range(n)]
        out = evaluate(NetworkChain(fixed(m), nopas), analysis_frequency=w)
        np.testing.assert_allclose(out.matrix, m, atol=1e-12)

    def test_phase_shift_on_idler_swaps_correlations(self):
        m = np.array([[1.5, 0, -1, 0], [0, 1.5, 0, 1], [-1, 0, 1.5, 0], [0, 1, 0, 1.5]])
        out = evaluate(NetworkChain(fixed(m), [PhaseShift((0.0, math.pi))]))
        np.testing.assert_allclose(variances(out), variances(SpectralCovariance(m))[[2, 3, 0, 1]], atol=1e-12)

    def test_detection_efficiency_and_noise_floor(self):
        m = np.diag([0.5, 2.0, 0.5, 2.0])
        out = evaluate(NetworkChain(fixed(m), detection_efficiency=0.5, electronic_noise_db=-10))
        np.testing.assert_allclose(np.diag(out.matrix).real, [0.85, 1.6, 0.85, 1.6])
        with pytest.raises(ValidationError):
            NetworkChain(detection_efficiency=0.0)

    def test_names_and_overrides(self, nopa2_rates):
        chain = NetworkChain(elements=[Loss(0.9, "l"), Nopa(NopaParams(nopa2_rates, 0.5), "n")])
        assert chain.index_of("n") == 1 and chain.index_of(0) == 0
        with pytest.raises(ValidationError):
            chain.index_of("missing")
        with pytest.raises(ValidationError):
            evaluate(chain, {"l": 1.0})
        with pytest.raises(ValidationError):
            NetworkChain(elements=[Loss(0.9, "x"), Loss(0.8, "x")])
        a = evaluate(chain, {"n": 2.0})
        b = evaluate(NetworkChain(elements=[Loss(0.9), Nopa(NopaParams(nopa2_rates, 0.5, detuning=2.0))]))
        np.testing.assert_allclose(a.matrix, b.matrix)


class TestReport:
    def test_vacuum(self):
        r = correlation_report(vacuum_spectrum(3.0))
        assert (r.v_xsum_db, r.v_ydiff_db, r.v_xdiff_db, r.v_ysum_db) == (0.0, 0.0, 0.0, 0.0)
        assert r.duan_plus == 4.0 and r.duan_minus == 4.0

    def test_observable_lookup(self):
        r = correlation_report(vacuum_spectrum())
        assert r.observable("duan_plus") == 4.0
        with pytest.raises(ValidationError):
            r.observable("v_nonsense")

    def test_fig2_resonance(self, fig2_cfg):
        r = correlation_report(evaluate(fig2_cfg.build_chain(), {"nopa2": 0.0}, 3.0))
        assert r.v_xsum_db == pytest.approx(-3.0, abs=0.01)
        assert r.v_ydiff_db == pytest.approx(r.v_xsum_db, abs=1e-9)


class TestPumpPhaseDuality:
    @settings(max_examples=100, deadline=None)
    @given(s1=st.floats(0, 0.95), s2=st.floats(0, 0.95), eta=st.floats(0.05, 1), w=st.floats(0, 20),
           delta=st.floats(-10, 10))
    def test_flipping_every_nopa_exchanges_pairs(self, nopa1_rates, nopa2_rates, s1, s2, eta, w, delta):
        chain = NetworkChain(elements=[
            Nopa(NopaParams(nopa1_rates, s1, DEAMPLIFICATION), "nopa1"), Loss(eta),
            Nopa(NopaParams(nopa2_rates, s2, DEAMPLIFICATION, delta), "nopa2")])
        flipped = replace(chain, elements=[flip_phase(e) if isinstance(e, Nopa) else e for e in chain.elements])
        a, b = variances(evaluate(chain, analysis_frequency=w)), variances(evaluate(flipped, analysis_frequency=w))
        np.testing.assert_allclose(b, a[[2, 3, 0, 1]], rtol=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(s2=st.floats(0, 0.95), n=st.floats(1, 5), eta=st.floats(0.05, 1), w=st.floats(0, 20))
    def test_flipping_one_nopa_exchanges_pairs_for_uncorrelated_input(self, nopa2_rates, s2, n, eta, w):
        # a thermal input carries no signal-idler correlation, so it is unchanged
        # by the idler sign flip that a pump phase shift of pi amounts to
        chain = NetworkChain(fixed(n * np.eye(4)), [Loss(eta), Nopa(NopaParams(nopa2_rates, s2), "nopa2")])
        flipped = replace(chain, elements=[chain.elements[0], flip_phase(chain.elements[1])])
        a, b = variances(evaluate(chain, analysis_frequency=w)), variances(evaluate(flipped, analysis_frequency=w))
        np.testing.assert_allclose(b, a[[2, 3, 0, 1]], rtol=1e-10)

    def test_flipping_nopa2_only_is_not_a_relabelling_for_entangled_input(self, fig2_cfg, fig3_cfg):
        fig2 = correlation_report(evaluate(fig2_cfg.build_chain(), analysis_frequency=3.0))
        fig3 = correlation_report(evaluate(fig3_cfg.build_chain(), analysis_frequency=3.0))
        assert fig3.v_xdiff_db - fig2.v_xsum_db > 2.0
