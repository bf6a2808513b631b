import math

import numpy as np
import pytest

from flatcert.envelope import MultiGraph, extract_multigraph, stretched_envelopes
from flatcert.grid import boundary_trace, from_function, make_grid
from flatcert.ledger import HarnackParams, derive_ledger
from flatcert.mse import exact_solution, preset_boundary, solve_mse
from flatcert.pipeline import (
    StageFailure,
    audit_to_csv,
    certificate_to_json,
    harnack_decay_audit,
    improvement_step,
    iterate_flatness,
    samples_from_graph,
    _rotation_to_vertical,
)

from oracles import nearest_sample_oracle, projection_max_oracle

EPS = 1e-2


@pytest.fixture(scope="module")
def params():
    return HarnackParams(3, 0.25, 0.2)


@pytest.fixture(scope="module")
def ledger(params):
    return derive_ledger(params)


def plane_samples(a, resolution=65, radius=1.0):
    g = make_grid(2, radius, resolution)
    field = exact_solution("affine", a=a, grid=g)
    return samples_from_graph(field)


class TestDecayAudit:
    def test_flat_plane(self, params):
        samples = plane_samples((0.0, 0.0))
        audit = harnack_decay_audit(samples, np.zeros(3), EPS, params, resolution=65)
        assert audit.passed
        for row in audit.rows:
            if not row.truncated:
                assert row.measured == 0.0
        assert audit.modulus is not None and audit.modulus.ok

    def test_quadratic_graph_exact_decay(self, params):
        # heights eps*|x'|^2: slab half-width at scale 2^-m is eps*4^-m
        rng = np.random.default_rng(31)
        pts = rng.uniform(-1, 1, size=(4000, 2))
        pts = pts[np.sum(pts * pts, axis=1) <= 1.0]
        # add points near each audited rim so the sup is attained
        for m in range(3, 9):
            r = 2.0**-m
            angles = np.linspace(0, 2 * np.pi, 32, endpoint=False)
            ring = (r * 0.999) * np.column_stack([np.cos(angles), np.sin(angles)])
            pts = np.vstack([pts, ring])
        pts = np.vstack([pts, [[0.0, 0.0]]])
        heights = EPS * np.sum(pts * pts, axis=1)
        samples = np.column_stack([pts, heights])
        audit = harnack_decay_audit(samples, np.zeros(3), EPS, params, min_samples=2)
        assert audit.passed
        for row in audit.rows:
            if row.truncated:
                continue
            expected = EPS * row.radius**2
            assert row.measured <= expected * (1 + 1e-9)
            assert row.measured >= expected * 0.95
            assert row.measured < row.bound

    def test_solved_graph(self, params, ledger):
        g = make_grid(2, 1.0, 65)
        sol = solve_mse(boundary_trace(preset_boundary(g, "saddle", EPS, q=0.12)))
        samples = samples_from_graph(sol.u)
        center = samples[int(np.argmin(np.sum(samples * samples, axis=1)))]
        audit = harnack_decay_audit(samples, center, EPS, params, resolution=65)
        assert audit.passed
        assert all(r.ok for r in audit.rows)

    def test_csv_shape(self, params):
        audit = harnack_decay_audit(
            plane_samples((0.0, 0.0)), np.zeros(3), EPS, params, resolution=65
        )
        csv = audit_to_csv(audit)
        lines = csv.strip().splitlines()
        assert lines[0] == "m,radius,measured,bound"
        assert len(lines) == 1 + len(audit.rows)

    def test_eps_cap_enforced(self, params):
        with pytest.raises(ValueError):
            harnack_decay_audit(plane_samples((0.0, 0.0)), np.zeros(3), 0.2, params)


class TestImprovementStep:
    def test_flat_plane_maximal_margins(self, ledger):
        run = improvement_step(plane_samples((0.0, 0.0)), EPS, ledger, resolution=65)
        cert = run.certificate
        assert cert.verdict
        assert cert.nu == (-0.0, -0.0, 1.0) or cert.nu == (0.0, 0.0, 1.0)
        assert cert.closeness_measured == 0.0
        assert cert.sandwich_gap_measured == 0.0
        assert cert.inclusion_empirical_ratio == 0.0

    def test_tilted_plane_direction(self, ledger):
        a = np.array([EPS / 2, -EPS / 3])
        run = improvement_step(plane_samples(tuple(a)), EPS, ledger, resolution=65)
        nu_expected = np.concatenate([-a, [1.0]])
        nu_expected /= np.linalg.norm(nu_expected)
        assert np.max(np.abs(np.array(run.certificate.nu) - nu_expected)) < 1e-8

    def test_stage_report_order(self, ledger):
        run = improvement_step(plane_samples((0.0, 0.0)), EPS, ledger, resolution=65)
        names = [s.name for s in run.certificate.stages]
        assert names == [
            "extract",
            "regularize",
            "sandwich",
            "barriers",
            "separation",
            "replace",
            "inclusion_analytic",
            "inclusion_empirical",
        ]
        assert all(s.ok for s in run.certificate.stages)

    def test_threshold_checks_recorded_not_enforced(self, ledger):
        run = improvement_step(plane_samples((0.0, 0.0)), EPS, ledger, resolution=65)
        checks = dict(run.certificate.threshold_checks)
        assert checks["flatness_threshold"] is False  # eps far above it
        assert checks["harnack"] is True

    def test_constructed_sandwich_violation_aborts(self, ledger):
        # at small flatness the sandwich gap bound drops below one sheet
        # spacing, so a full-height second sheet must fail the stage
        eps = 1e-5
        samples = plane_samples((0.0, 0.0), resolution=65)
        top = samples.copy()
        top[:, -1] = eps
        merged = np.vstack([samples, top])
        with pytest.raises(StageFailure) as err:
            improvement_step(merged, eps, ledger, resolution=65)
        assert err.value.failing.name == "sandwich"
        assert any(s.name == "regularize" for s in err.value.stages)

    def test_monotone_margin_combination(self, ledger):
        run = improvement_step(plane_samples((0.0, 0.0)), EPS, ledger, resolution=65)
        cert = run.certificate
        r0 = cert.radius_certified
        # shrinking the measured contributions can only grow the margin
        base = r0 / 2 - (cert.sandwich_gap_measured + 2 * cert.closeness_measured
                         + cert.taylor_estimate)
        assert base == pytest.approx(cert.inclusion_analytic_margin)
        better = r0 / 2 - (0.5 * cert.sandwich_gap_measured
                           + 2 * cert.closeness_measured + cert.taylor_estimate)
        assert better >= cert.inclusion_analytic_margin

    def test_certificate_json(self, ledger, params):
        run = improvement_step(plane_samples((0.0, 0.0)), EPS, ledger, resolution=65)
        doc = certificate_to_json(run.certificate, params)
        assert set(doc["margins"]) == {
            "taylor",
            "closeness",
            "inclusionAnalytic",
            "inclusionEmpirical",
        }
        assert doc["eps"] == EPS
        assert doc["ledgerRef"] == {"n": 3, "eps1": 0.25, "eta": 0.2}
        assert doc["verdict"] is True
        assert [s["name"] for s in doc["stages"]][0] == "extract"


class TestEquivariance:
    def test_quarter_turn_rotation(self, ledger):
        # a quarter turn maps grid nodes to grid nodes: exact equivariance
        a = np.array([EPS / 2, -EPS / 3])
        samples = plane_samples(tuple(a), resolution=65)
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])
        rotated = samples.copy()
        rotated[:, :2] = samples[:, :2] @ rot.T
        run_orig = improvement_step(samples, EPS, ledger, resolution=65)
        run_rot = improvement_step(rotated, EPS, ledger, resolution=65)
        nu_o = np.array(run_orig.certificate.nu)
        nu_r = np.array(run_rot.certificate.nu)
        expected = np.concatenate([rot @ nu_o[:2], nu_o[2:]])
        assert np.max(np.abs(nu_r - expected)) < 1e-12

    def test_small_rotation_of_surface(self, ledger):
        # generic rotations leave the node lattice, so the rotated *surface*
        # is resampled at nodes; the certified direction must co-rotate
        a = np.array([EPS / 2, -EPS / 5])
        theta = 0.05
        rot = np.array(
            [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
        )
        a_rot = rot @ a
        run_orig = improvement_step(plane_samples(tuple(a)), EPS, ledger, resolution=65)
        run_rot = improvement_step(
            plane_samples(tuple(a_rot)), EPS, ledger, resolution=65
        )
        nu_o = np.array(run_orig.certificate.nu)
        expected = np.concatenate([rot @ nu_o[:2], nu_o[2:]])
        assert np.max(np.abs(np.array(run_rot.certificate.nu) - expected)) < 1e-10

    def test_dilation_preserves_stretched_graph(self, ledger):
        g = make_grid(2, 1.0, 65)
        field = from_function(g, lambda x, y: EPS * 0.3 * (x * x - y * y))
        samples = samples_from_graph(field)
        lam = 0.5
        scaled = samples * lam
        mg = extract_multigraph(samples, EPS, radius=1.0, resolution=65)
        mg_scaled = extract_multigraph(scaled, lam * EPS, radius=lam, resolution=65)
        a1, _ = stretched_envelopes(mg)
        a2, _ = stretched_envelopes(mg_scaled)
        sel1, sel2 = mg.covered(), mg_scaled.covered()
        assert np.array_equal(sel1, sel2)
        assert np.allclose(a1[sel1], a2[sel2], atol=1e-13)


class TestIteration:
    def test_flat_plane_direction_constant(self, ledger):
        result = iterate_flatness(
            plane_samples((0.0, 0.0)), EPS, 3, ledger, resolution=65
        )
        assert len(result.certificates) == 3
        for cert in result.certificates:
            assert tuple(abs(x) for x in cert.nu) == (0.0, 0.0, 1.0)
        assert not result.stopped_early

    def test_tilted_plane_resolves_normal(self, ledger):
        a = np.array([EPS / 2, -EPS / 4])
        result = iterate_flatness(plane_samples(tuple(a)), EPS, 3, ledger, resolution=65)
        nu_expected = np.concatenate([-a, [1.0]])
        nu_expected /= np.linalg.norm(nu_expected)
        assert np.max(np.abs(np.array(result.certificates[0].nu) - nu_expected)) < 1e-8
        # after rotating the plane flat the surface sits at numerical noise
        if result.stopped_early:
            assert result.stop_reason == "surface flat at numerical precision"
        else:
            for cert in result.certificates[1:]:
                assert abs(cert.nu[2] - 1.0) < 1e-9

    def test_solved_graph_flatness_halves(self, ledger):
        g = make_grid(2, 1.0, 65)
        sol = solve_mse(boundary_trace(preset_boundary(g, "saddle", EPS, q=0.12)))
        result = iterate_flatness(samples_from_graph(sol.u), EPS, 3, ledger, resolution=65)
        assert len(result.certificates) == 3
        assert not result.stopped_early
        for k, eps_k in enumerate(result.eps_sequence):
            assert eps_k <= EPS * 2.0**-k * (1 + 1e-9)

    def test_rotation_helper(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            v = rng.normal(size=3)
            v[2] = abs(v[2]) + 0.5
            v /= np.linalg.norm(v)
            rot = _rotation_to_vertical(v)
            assert np.allclose(rot @ v, [0, 0, 1], atol=1e-14)
            assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-14)


class TestOneDimensionalBase:
    def test_line_certificate(self):
        params = HarnackParams(2, 0.25, 0.2)
        led = derive_ledger(params)
        g = make_grid(1, 1.0, 65)
        line = from_function(g, lambda x: (EPS / 2) * x)
        run = improvement_step(samples_from_graph(line), EPS, led, resolution=65)
        assert run.certificate.verdict
        expected = np.array([-EPS / 2, 1.0])
        expected /= np.linalg.norm(expected)
        assert np.max(np.abs(np.array(run.certificate.nu) - expected)) < 1e-10

    def test_solved_interval_graph(self):
        params = HarnackParams(2, 0.25, 0.2)
        led = derive_ledger(params)
        g = make_grid(1, 1.0, 65)
        data = preset_boundary(g, "saddle", EPS, q=0.12)
        sol = solve_mse(boundary_trace(data))
        run = improvement_step(samples_from_graph(sol.u), EPS, led, resolution=65)
        assert run.certificate.verdict
        samples = samples_from_graph(sol.u)
        center = samples[int(np.argmin(np.sum(samples * samples, axis=1)))]
        audit = harnack_decay_audit(samples, center, EPS, params, resolution=65)
        assert audit.passed


class TestScanOracles:
    def test_projection_scan(self, ledger):
        run = improvement_step(
            plane_samples((EPS / 2, 0.0), resolution=33), EPS, ledger, resolution=33
        )
        nu = np.array(run.certificate.nu)
        samples = plane_samples((EPS / 2, 0.0), resolution=33)
        rho = run.certificate.empirical_radius
        got = projection_max_oracle(samples, nu, rho)
        # recompute the implementation's scan on the raw (unrefined) samples
        from flatcert.pipeline import _norm2_rows, _proj_rows

        n2 = _norm2_rows(samples)
        sel = n2 <= rho * rho * (1 + 1e-12)
        fast = float(np.max(np.abs(_proj_rows(samples[sel], nu))))
        assert fast == got

    def test_nearest_sample(self):
        rng = np.random.default_rng(51)
        samples = rng.normal(size=(500, 3))
        from flatcert.pipeline import _norm2_rows

        assert int(np.argmin(_norm2_rows(samples))) == nearest_sample_oracle(samples)
