import json
import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from mpmath import mp, mpf

from flatcert.ledger import (
    HarnackParams,
    check_threshold_chain,
    derive_ledger,
    ledger_to_json,
    max_harnack_depth,
)


def eps0_closed_form_log2(n, eps1, eta, dps=160):
    """Independent high-precision evaluation of the closed form."""
    with mp.workdps(dps):
        a = -mp.log(1 - mpf(eta), 2)
        g = 1 / (1 - a)
        exponent = 8 / (g * a * a)
        inner = g * a * mp.log(mpf(eps1), 2) - 33 - 5 * a - 3 * mp.log(mpf(n), 2)
        return exponent * inner


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            HarnackParams(1, 0.25, 0.2)
        with pytest.raises(ValueError):
            HarnackParams(3, 0.3, 0.2)
        with pytest.raises(ValueError):
            HarnackParams(3, 0.25, 0.21)
        with pytest.raises(ValueError):
            HarnackParams(3, 0.25, 0.0)
        HarnackParams(3, 0.25, 0.2)  # boundary values allowed

    def test_from_alpha_quarter(self):
        p = HarnackParams.from_alpha(2, Fraction(1, 4), Fraction(1, 4))
        assert p.alpha_exact == Fraction(1, 4)
        assert p.eta == pytest.approx(1 - 2**-0.25, rel=1e-15)

    def test_from_alpha_too_large(self):
        with pytest.raises(ValueError):
            HarnackParams.from_alpha(2, 0.25, Fraction(1, 2))


class TestDerivation:
    def test_exact_quarter_alpha(self):
        # eta chosen so the decay exponent is exactly 1/4
        led = derive_ledger(HarnackParams.from_alpha(2, Fraction(1, 4), Fraction(1, 4)))
        assert led.alpha_fraction == Fraction(1, 4)
        assert led.gamma_fraction == Fraction(4, 3)
        assert led.eps0_exponent == Fraction(96)
        assert led.modulus_coeff.log2_float() == 5.0  # 2**(4 + 4/4)
        assert not led.alpha_warning

    def test_radius_dimension_three(self):
        led = derive_ledger(HarnackParams(3, 0.17, 0.11))
        assert led.radius.to_float() == pytest.approx(1.0 / (2**16 * 9), rel=1e-15)

    def test_eps0_against_highprec_oracle(self):
        led = derive_ledger(HarnackParams(3, 2**-4, 0.1))
        expected = eps0_closed_form_log2(3, 2**-4, 0.1)
        rel = abs(led.flatness_threshold.log2 - expected) / abs(expected)
        assert float(rel) < 1e-12

    def test_alpha_warning_at_eta_fifth(self):
        led = derive_ledger(HarnackParams(3, 0.25, 0.2))
        assert float(led.alpha) == pytest.approx(-math.log2(0.8), rel=1e-15)
        assert led.alpha_warning

    def test_quarter_alpha_remark_identities(self):
        # modulus_reach <= eps1**-gamma and gamma*alpha/4 <= 1/12 when alpha <= 1/4
        led = derive_ledger(HarnackParams.from_alpha(3, 0.25, Fraction(1, 4)))
        with mp.workdps(led.digits):
            assert led.modulus_reach.log2 <= -led.gamma * mp.log(mpf(0.25), 2) + mpf("1e-30")
            assert led.gamma * led.alpha / 4 <= mpf(1) / 12 + mpf("1e-30")


class TestChain:
    def test_chain_holds_quarter_alpha(self):
        led = derive_ledger(HarnackParams.from_alpha(2, Fraction(1, 4), Fraction(1, 4)))
        report = check_threshold_chain(led)
        assert report.passed
        assert not report.alpha_warning

    def test_chain_holds_with_warning(self):
        led = derive_ledger(HarnackParams(3, 0.25, 0.2))
        report = check_threshold_chain(led)
        assert report.alpha_warning
        assert report.passed
        assert len(report.rows()) == 5

    def test_constructed_violation_reports_false(self):
        led = derive_ledger(HarnackParams(3, 0.25, 0.2))
        # flatness threshold forced above the touch threshold
        bogus = replace(
            led,
            flatness_threshold=led.threshold("touch").pow(Fraction(1, 2)),
        )
        report = check_threshold_chain(bogus)
        assert not report.passed
        failing = {l.name for l in report.links if not l.ok}
        assert "flatness_threshold <= barrier" in failing


class TestDepth:
    def test_boundary_case(self):
        params = HarnackParams(3, 0.25, 0.2)
        d = max_harnack_depth(0.25 / 8, params)
        assert d.m_value == pytest.approx(3.0, abs=1e-12)
        assert d.mtilde == 3
        assert d.scale_bound_ok
        assert d.scale_bound_strict_ok  # integer depth: no flooring loss

    def test_quarter_alpha_example(self):
        params = HarnackParams.from_alpha(3, Fraction(1, 16), Fraction(1, 4))
        eps = 2.0**-10 / 16
        d = max_harnack_depth(eps, params)
        assert d.m_value == pytest.approx(37.0 / 3.0, rel=1e-14)
        assert d.mtilde == 12
        # defining inequality holds at 12, fails at 13
        eta = float(params.eta)
        assert 2**12 * eps * (1 - eta) ** 9 <= 1 / 16 * (1 + 1e-12)
        assert 2**13 * eps * (1 - eta) ** 10 > 1 / 16
        # flooring costs up to one halving: certified bound holds, exact form not
        assert d.scale_bound_ok
        assert not d.scale_bound_strict_ok

    def test_depth_consistency_random(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            eps1 = float(rng.uniform(0.01, 0.25))
            eta = float(rng.uniform(0.01, 0.2))
            params = HarnackParams(int(rng.integers(2, 6)), eps1, eta)
            eps = float(rng.uniform(1e-8, eps1 / 8))
            d = max_harnack_depth(eps, params)
            assert 2**d.mtilde * eps * (1 - eta) ** (d.mtilde - 3) <= eps1 * (1 + 1e-9)
            assert 2 ** (d.mtilde + 1) * eps * (1 - eta) ** (d.mtilde - 2) > eps1 * (1 - 1e-9)
            assert d.scale_bound_ok

    def test_eps_out_of_range(self):
        params = HarnackParams(3, 0.25, 0.2)
        with pytest.raises(ValueError):
            max_harnack_depth(0.1, params)
        with pytest.raises(ValueError):
            max_harnack_depth(0.0, params)


class TestProperties:
    def test_monotonicity_in_inputs(self):
        # flatness threshold nondecreasing in eps1; radius nonincreasing in n
        eps1_grid = [0.02, 0.05, 0.1, 0.2, 0.25]
        logs = [
            derive_ledger(HarnackParams(3, e, 0.1)).flatness_threshold.log2
            for e in eps1_grid
        ]
        assert all(a <= b for a, b in zip(logs, logs[1:]))
        radii = [
            derive_ledger(HarnackParams(n, 0.1, 0.1)).radius.log2 for n in range(2, 9)
        ]
        assert all(a >= b for a, b in zip(radii, radii[1:]))

    def test_identity_sampled(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            eps1 = float(rng.uniform(1e-3, 0.25))
            eta = float(rng.uniform(1e-3, 0.2))
            led = derive_ledger(HarnackParams(n, eps1, eta))
            assert led.identity_rel_err < 1e-12


class TestJson:
    def test_export_shape(self):
        led = derive_ledger(HarnackParams(3, 0.25, 0.2))
        doc = ledger_to_json(led)
        assert doc["n"] == 3
        assert doc["alpha_warning"] is True
        assert set(doc["constants"]) == {
            "modulus_coeff",
            "modulus_reach",
            "sandwich_gap",
            "touch_slack",
            "barrier_lift",
            "closeness_coeff",
            "radius",
            "flatness_threshold",
        }
        eps0 = doc["constants"]["flatness_threshold"]
        assert eps0["approx"] == "underflow"
        assert float(eps0["log2"]) < -2000
        assert [t["name"] for t in doc["thresholds"]] == [
            "harnack",
            "touch",
            "grad",
            "barrier",
            "final",
        ]
        assert doc["passed"] is True
        json.dumps(doc)  # serializable

    def test_export_deterministic(self):
        a = ledger_to_json(derive_ledger(HarnackParams(3, 0.25, 0.2)))
        b = ledger_to_json(derive_ledger(HarnackParams(3, 0.25, 0.2)))
        assert json.dumps(a) == json.dumps(b)
