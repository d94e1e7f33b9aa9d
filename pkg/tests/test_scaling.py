import math

import numpy as np
import pytest

from framescale import (
    Frame,
    FlowState,
    ScalingPair,
    SolverConfig,
    derivative_diagnostics,
    error_report,
    flip_flop_step,
    gradient_flow_step,
    op_norm_symmetric,
    sample_sphere_frame,
    size,
    solve_scaling,
    SeedSpec,
)
from framescale.scaling import IllConditionedError, pd_inv_sqrt, pd_sqrt

TWO_HEAVY = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def mercedes():
    ang = np.deg2rad([90.0, 210.0, 330.0])
    return Frame(np.vstack([np.cos(ang), np.sin(ang)]))


class TestPDRoots:
    def test_sqrt_inverse_consistency(self):
        gen = np.random.default_rng(0)
        mat = gen.standard_normal((4, 4))
        spd = mat @ mat.T + 4 * np.eye(4)
        root = pd_sqrt(spd)
        inv_root = pd_inv_sqrt(spd)
        assert np.allclose(root @ root, spd, atol=1e-10)
        assert np.allclose(root @ inv_root, np.eye(4), atol=1e-10)


class TestScalingPair:
    def test_rejects_singular_left(self):
        with pytest.raises(ValueError):
            ScalingPair(np.zeros((2, 2)), np.ones(3))

    def test_rejects_nonpositive_right(self):
        with pytest.raises(ValueError):
            ScalingPair(np.eye(2), np.array([1.0, 0.0]))


class TestFlipFlopStep:
    def test_identity_fixed_point(self):
        out, pair = flip_flop_step(Frame(np.eye(3)))
        assert np.allclose(out.entries, np.eye(3), atol=1e-14)
        assert np.allclose(pair.left, np.eye(3), atol=1e-14)
        assert np.allclose(pair.right, 1.0, atol=1e-14)

    def test_axis_scaled_example(self):
        out, pair = flip_flop_step(Frame(np.diag([2.0, 1.0])))
        assert np.allclose(out.entries, np.eye(2), atol=1e-14)
        assert np.allclose(pair.left, np.diag([0.5, 1.0]), atol=1e-14)
        assert np.allclose(pair.right, 1.0, atol=1e-14)

    def test_left_half_step_isotropy_exact(self):
        frame = sample_sphere_frame(3, 10, SeedSpec(0, 0))
        _, pair = flip_flop_step(frame)
        iso = pair.left @ frame.entries
        gram = iso @ iso.T
        assert np.allclose(gram, np.eye(3), atol=1e-12)

    def test_right_half_step_unit_columns(self):
        frame = sample_sphere_frame(3, 10, SeedSpec(0, 1))
        out, _ = flip_flop_step(frame)
        norms = np.linalg.norm(out.entries, axis=0)
        assert np.allclose(norms, 1.0, atol=1e-12)

    def test_composite_reproduces_frame(self):
        frame = sample_sphere_frame(4, 9, SeedSpec(0, 2))
        out, pair = flip_flop_step(frame)
        assert np.allclose(pair.apply(frame.entries), out.entries, atol=1e-13)

    def test_ill_conditioned_gram(self):
        mat = np.array([[1.0, 1.0], [0.0, 1e-8]])
        with pytest.raises(IllConditionedError):
            flip_flop_step(Frame(mat))


class TestGradientFlowStep:
    def test_balanced_fixed_point(self):
        state = FlowState.start(Frame(np.eye(3) / math.sqrt(3.0)))
        nxt = gradient_flow_step(state, SolverConfig())
        assert np.allclose(nxt.frame.entries, state.frame.entries, atol=1e-15)
        assert nxt.time > 0

    def test_two_heavy_explicit_update(self):
        state = FlowState.start(Frame(TWO_HEAVY))
        nxt = gradient_flow_step(state, SolverConfig(), dt=0.01)
        expected = np.array([[0.99, 0.99, 0.0], [0.0, 0.0, 1.01]])
        assert np.allclose(nxt.frame.entries, expected, atol=1e-15)
        assert np.allclose(nxt.scaling.left, np.diag([0.99, 1.01]), atol=1e-15)
        assert np.allclose(nxt.scaling.right, 1.0, atol=1e-15)

    def test_size_derivative_matches_l2_error(self):
        for frame in (
            Frame(TWO_HEAVY),
            sample_sphere_frame(3, 9, SeedSpec(1, 0)),
            sample_sphere_frame(2, 6, SeedSpec(1, 1)),
        ):
            state = FlowState.start(frame)
            h = 1e-6
            nxt = gradient_flow_step(state, SolverConfig(), dt=h)
            rate = (size(nxt.frame) - size(frame)) / h
            rep = error_report(frame)
            assert rate == pytest.approx(-2.0 * rep.l2_error, rel=1e-3)

    def test_reconstruction_invariant_along_trajectory(self):
        state = FlowState.start(sample_sphere_frame(3, 12, SeedSpec(1, 2)))
        config = SolverConfig()
        for _ in range(200):
            state = gradient_flow_step(state, config)
        assert state.reconstruction_error() <= 1e-8

    def test_integrals_accumulate(self):
        state = FlowState.start(Frame(TWO_HEAVY))
        nxt = gradient_flow_step(state, SolverConfig(), dt=0.01)
        assert nxt.int_isotropy_op == pytest.approx(0.01 * 1.0, rel=1e-12)
        assert nxt.int_norm_op == 0.0


class TestSolveScaling:
    def test_identity_zero_iterations(self):
        result = solve_scaling(Frame(np.eye(4)), SolverConfig(tol=1e-10))
        assert result.converged
        assert result.iterations == 0
        assert np.array_equal(result.scaling.left, np.eye(4))
        assert np.array_equal(result.scaling.right, np.ones(4))

    def test_doubled_basis_already_balanced(self):
        frame = Frame(np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]))
        result = solve_scaling(frame, SolverConfig(tol=1e-10))
        assert result.converged and result.iterations == 0

    def test_mercedes_already_balanced(self):
        result = solve_scaling(mercedes(), SolverConfig(tol=1e-10))
        assert result.converged and result.iterations == 0

    @pytest.mark.parametrize("method", ["flipflop", "flow"])
    def test_balances_random_frame(self, method):
        frame = sample_sphere_frame(4, 16, SeedSpec(2, 0))
        result = solve_scaling(frame, SolverConfig(tol=1e-9), method=method)
        assert result.converged
        rep = error_report(result.frame)
        assert rep.op_error <= 1e-9 * rep.size

    @pytest.mark.parametrize("method", ["flipflop", "flow"])
    def test_reconstruction_identity(self, method):
        frame = sample_sphere_frame(3, 9, SeedSpec(2, 1))
        result = solve_scaling(frame, SolverConfig(tol=1e-9), method=method)
        rebuilt = result.scaling.apply(frame.entries)
        rel = np.linalg.norm(rebuilt - result.frame.entries) / np.linalg.norm(
            result.frame.entries
        )
        assert rel <= 1e-8

    def test_methods_agree_after_canonicalization(self):
        frame = sample_sphere_frame(4, 16, SeedSpec(2, 2))
        config = SolverConfig(tol=1e-10)
        results = [
            solve_scaling(frame, config, method=m) for m in ("flipflop", "flow")
        ]
        canon = [
            _canonicalize(r.scaling.left, r.scaling.right, frame.entries)
            for r in results
        ]
        for a, b in zip(canon[0], canon[1]):
            assert np.linalg.norm(a - b) <= 1e-6

    def test_zero_column_is_structured_failure(self):
        frame = Frame(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        result = solve_scaling(frame, SolverConfig(tol=1e-10, max_iters=50))
        assert not result.converged
        assert result.failure is not None

    def test_flipflop_round_ratios_logged(self):
        frame = sample_sphere_frame(3, 9, SeedSpec(2, 3))
        result = solve_scaling(frame, SolverConfig(tol=1e-9))
        assert len(result.round_ratios) == result.iterations + 1
        assert result.round_ratios[-1] <= 1e-9

    def test_flow_reports_accumulation_bound(self):
        frame = sample_sphere_frame(4, 16, SeedSpec(2, 4))
        unit = frame.scaled(1.0 / math.sqrt(size(frame)))
        result = solve_scaling(unit, SolverConfig(tol=1e-9), method="flow")
        assert result.converged
        bound = result.scaling_bound
        assert bound is not None
        assert set(bound) >= {"left_gap", "left_bound", "left_holds",
                              "right_gap", "right_bound", "right_holds"}

    def test_monotone_size_decay(self):
        config = SolverConfig(tol=1e-9)
        for stream in range(5):
            state = FlowState.start(sample_sphere_frame(3, 9, SeedSpec(3, stream)))
            prev = size(state.frame)
            for _ in range(500):
                state = gradient_flow_step(state, config)
                current = size(state.frame)
                assert current <= prev + 1e-12
                prev = current


def _canonicalize(left, right, entries):
    # mod out the orthogonal and scalar symmetry of a scaling pair
    polar = pd_sqrt(left.T @ left)
    gm = float(np.exp(np.mean(np.log(right))))
    left_c = gm * polar
    right_c = right / gm
    frame_c = (left_c @ entries) * right_c[None, :]
    scale = 1.0 / math.sqrt(float(np.sum(frame_c * frame_c)))
    return scale * left_c, right_c, scale * frame_c


class TestDerivativeDiagnostics:
    def test_balanced_frame_all_zero(self):
        frame = Frame(np.eye(3) / math.sqrt(3.0))
        report = derivative_diagnostics(frame, 1e-6)
        for check in report.checks:
            assert check.analytic == pytest.approx(0.0, abs=1e-12)
            assert abs(check.finite_difference) <= 1e-8

    def test_two_heavy_one_light(self):
        report = derivative_diagnostics(Frame(TWO_HEAVY), 1e-6)
        assert report.max_rel_error() <= 1e-3
        by_name = {c.name: c for c in report.checks}
        assert by_name["size"].analytic == pytest.approx(-2.0, rel=1e-12)

    def test_scalar_homogeneity_fourth_power(self):
        c = 10.0
        base = derivative_diagnostics(Frame(TWO_HEAVY), 1e-6)
        scaled = derivative_diagnostics(Frame(c * TWO_HEAVY), 1e-6)
        for a, b in zip(base.checks, scaled.checks):
            assert b.analytic == pytest.approx(c**4 * a.analytic, rel=1e-10)
            assert b.rel_error <= 1e-3

    def test_h_range_validated(self):
        frame = Frame(np.eye(2))
        with pytest.raises(ValueError):
            derivative_diagnostics(frame, 1e-2)
        with pytest.raises(ValueError):
            derivative_diagnostics(frame, 1e-10)

    def test_random_frames_pass_gate(self):
        for stream in range(5):
            frame = sample_sphere_frame(3, 8, SeedSpec(4, stream))
            report = derivative_diagnostics(frame, 1e-6)
            assert report.max_rel_error() <= 1e-3
