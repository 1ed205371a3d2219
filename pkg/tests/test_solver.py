"""Alternating solver: updates, trace behaviour, compression round trips."""

import numpy as np
import pytest

from mtt import matops
from mtt.errors import DegenerateInjectionError
from mtt.solver import (
    MttConfig,
    _refit_factored,
    compress,
    compression_ratio,
    decompress,
    mtt_fit,
    mtt_init,
    objective,
    update_injection,
    update_second_factor,
)
from mtt.transforms import FactorPair, apply_transform, reconstruction_error


def small_problem(seed, m=6, n=5, q=4, s=12):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((m, s))
    y = rng.standard_normal((n, s))
    return x, y


def second_term_error(x, pair, z):
    return np.linalg.norm(x - pair.D @ (pair.C @ z)) ** 2


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            MttConfig(k1=0, k2=1, q=1)
        with pytest.raises(ValueError):
            MttConfig(k1=1, k2=2, q=1)   # q < k2
        with pytest.raises(ValueError):
            MttConfig(k1=1, k2=1, q=1, delta=0.0)
        with pytest.raises(ValueError):
            MttConfig(k1=1, k2=1, q=1, max_iter=0)


class TestUpdateInjection:
    def test_orthogonal_full_map_with_identity_projector(self):
        # D2 C2 with orthonormal rows spanning the whole space and G = I:
        # the update is simply (D2 C2)^T X.
        rng = np.random.default_rng(0)
        m, q, s = 4, 6, 10
        d2 = np.linalg.qr(rng.standard_normal((m, m)))[0]
        c2 = np.linalg.qr(rng.standard_normal((q, m)))[0].T
        pair = FactorPair(D=d2, C=c2, k=m)
        x = rng.standard_normal((m, s))
        v = update_injection(x, pair, np.eye(s))
        np.testing.assert_allclose(v, (d2 @ c2).T @ x, atol=1e-10)

    def test_consistent_system_reaches_zero(self):
        rng = np.random.default_rng(1)
        m, q, s, k2 = 5, 4, 10, 3
        d2 = np.linalg.qr(rng.standard_normal((m, k2)))[0]
        c2 = rng.standard_normal((k2, q))
        pair = FactorPair(D=d2, C=c2, k=k2)
        y = rng.standard_normal((2, s))
        g = matops.null_projector(y)
        x = d2 @ c2 @ rng.standard_normal((q, s)) @ g
        v = update_injection(x, pair, g)
        assert np.linalg.norm(x - d2 @ (c2 @ (v @ g))) <= 1e-8

    def test_matches_direct_pseudo_inverse(self):
        rng = np.random.default_rng(2)
        m, q, s, k2 = 5, 4, 10, 3
        d2 = np.linalg.qr(rng.standard_normal((m, k2)))[0]
        pair = FactorPair(D=d2, C=rng.standard_normal((k2, q)), k=k2)
        y = rng.standard_normal((2, s))
        g = matops.null_projector(y)
        x = rng.standard_normal((m, s))
        v = update_injection(x, pair, g)
        direct = matops.pinv(d2 @ pair.C) @ x @ g
        np.testing.assert_allclose(v, direct, atol=1e-9)

    def test_dominates_perturbations(self):
        rng = np.random.default_rng(3)
        x, y = small_problem(3)
        g = matops.null_projector(y)
        d2 = np.linalg.qr(rng.standard_normal((6, 2)))[0]
        pair = FactorPair(D=d2, C=rng.standard_normal((2, 4)), k=2)
        v = update_injection(x, pair, g)
        base = second_term_error(x, pair, v @ g)
        vnorm = max(1.0, np.linalg.norm(v))
        for i in range(1000):
            scale = 10.0 ** rng.uniform(-4, 1)
            delta = rng.standard_normal(v.shape) * scale * vnorm
            err = second_term_error(x, pair, (v + delta) @ g)
            assert base <= err + 1e-9 * max(1.0, err)


class TestUpdateSecondFactor:
    def test_padded_orthonormal_rows_fit_exactly(self):
        rng = np.random.default_rng(4)
        q, s, m = 3, 10, 5
        z = np.linalg.qr(rng.standard_normal((s, q)))[0].T
        x = np.vstack([z, np.zeros((m - q, s))])
        pair = update_second_factor(x, z, q)
        assert second_term_error(x, pair, z) <= 1e-8

    def test_rank_one_residual_matches_tail(self):
        # X built inside the row space of Z, so the best rank-1 residual
        # is the energy of S_Z past its leading singular value.
        rng = np.random.default_rng(5)
        q, s, m = 4, 12, 5
        z = rng.standard_normal((q, s))
        x = rng.standard_normal((m, q)) @ z
        pair = update_second_factor(x, z, 1)
        s_z = x @ z.T @ matops.gram_sqrt_pinv(z)
        sigma = np.linalg.svd(s_z, compute_uv=False)
        expected = np.linalg.norm(s_z) ** 2 - sigma[0] ** 2
        got = second_term_error(x, pair, z)
        assert abs(got - expected) <= 1e-8 * max(1.0, expected)

    def test_dominates_random_pairs(self):
        rng = np.random.default_rng(6)
        x, y = small_problem(6)
        z = rng.standard_normal((4, 12))
        k2 = 2
        pair = update_second_factor(x, z, k2)
        best = second_term_error(x, pair, z)
        for _ in range(1000):
            cand = FactorPair(
                D=rng.standard_normal((6, k2)), C=rng.standard_normal((k2, 4)), k=k2
            )
            err = second_term_error(x, cand, z)
            assert best <= err + 1e-9 * max(1.0, err)

    def test_zero_injection_rejected(self):
        with pytest.raises(DegenerateInjectionError):
            update_second_factor(np.eye(3), np.zeros((2, 3)), 1)

    def test_factored_refit_matches_materialised(self):
        rng = np.random.default_rng(30)
        for m, q, r, s, k in [(8, 6, 3, 20, 2), (5, 7, 2, 12, 2), (6, 6, 4, 15, 4)]:
            x = rng.standard_normal((m, s))
            a = rng.standard_normal((q, r))
            b = rng.standard_normal((r, s))
            z = a @ b
            fast = _refit_factored(x, z, a, b, k)
            plain = update_second_factor(x, z, k)
            np.testing.assert_allclose(
                fast.D @ fast.C, plain.D @ plain.C, atol=1e-9
            )
            e_fast = second_term_error(x, fast, z)
            e_plain = second_term_error(x, plain, z)
            assert abs(e_fast - e_plain) <= 1e-10 * max(1.0, e_plain)

    def test_factored_refit_rank_deficient_falls_back(self):
        rng = np.random.default_rng(31)
        a = rng.standard_normal((6, 3))
        a[:, 2] = a[:, 0] + a[:, 1]          # core rank 2
        b = rng.standard_normal((3, 14))
        b[2] = b[0] - b[1]
        z = a @ b
        x = rng.standard_normal((5, 14))
        fast = _refit_factored(x, z, a, b, 3)
        plain = update_second_factor(x, z, 3)
        np.testing.assert_allclose(fast.D @ fast.C, plain.D @ plain.C, atol=1e-9)

    def test_full_loop_matches_unfactored_loop(self, monkeypatch):
        import mtt.solver as solver_mod
        from mtt.transforms import _best_rank_pair

        for seed in (0, 1, 2, 3):
            rng = np.random.default_rng(5000 + seed)
            x = rng.standard_normal((8, 20))
            y = rng.standard_normal((6, 20))
            cfg = MttConfig(k1=2, k2=2, q=5, delta=1e-9, max_iter=80, seed=seed)
            _, fast = mtt_fit(x, y, cfg)
            with pytest.MonkeyPatch.context() as mp:
                mp.setattr(
                    solver_mod,
                    "_refit_factored",
                    lambda x, z, a, b, k, pinv_tol=None: _best_rank_pair(
                        x, z, k, pinv_tol
                    ),
                )
                _, plain = mtt_fit(x, y, cfg)
            assert fast.branches == plain.branches
            np.testing.assert_allclose(
                fast.errors, plain.errors,
                rtol=1e-12, atol=1e-12 * max(1.0, fast.errors[0]),
            )


class TestInit:
    def test_same_seed_bit_identical(self):
        x, y = small_problem(7)
        cfg = MttConfig(k1=2, k2=2, q=4, seed=123)
        m1, e1 = mtt_init(x, y, cfg)
        m2, e2 = mtt_init(x, y, cfg)
        np.testing.assert_array_equal(m1.V, m2.V)
        assert e1 == e2

    def test_first_term_exact_when_representable(self):
        rng = np.random.default_rng(8)
        d = np.linalg.qr(rng.standard_normal((6, 2)))[0]
        c = rng.standard_normal((2, 5))
        y = rng.standard_normal((5, 12))
        x = d @ c @ y
        cfg = MttConfig(k1=2, k2=2, q=4, seed=0)
        model, _ = mtt_init(x, y, cfg)
        first_resid = np.linalg.norm(x - model.first.D @ (model.first.C @ y))
        assert first_resid <= 1e-8 * np.linalg.norm(x)

    def test_dominates_random_pairs_at_same_injection(self):
        rng = np.random.default_rng(9)
        x, y = small_problem(9, m=6, n=5, q=4, s=12)
        cfg = MttConfig(k1=2, k2=2, q=4, seed=5)
        model, eps0 = mtt_init(x, y, cfg)
        z = model.Z
        for _ in range(1000):
            f1 = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
            f2 = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 4))
            err = np.linalg.norm(x - f1 @ y - f2 @ z) ** 2
            assert eps0 <= err + 1e-9 * max(1.0, err)

    def test_model_invariants(self):
        x, y = small_problem(10)
        cfg = MttConfig(k1=2, k2=2, q=4, seed=1)
        model, _ = mtt_init(x, y, cfg)
        assert np.linalg.norm(model.Z - model.V @ model.G) <= 1e-12
        assert (
            np.linalg.norm(model.Z @ y.T)
            <= 1e-8 * np.linalg.norm(model.Z) * np.linalg.norm(y)
        )

    def test_all_draws_degenerate_fails_loudly(self):
        # A square invertible Y leaves no null space: every draw of the
        # injection projects to zero and the retries must run out.
        rng = np.random.default_rng(11)
        y = rng.standard_normal((6, 6)) + 6 * np.eye(6)
        x = rng.standard_normal((6, 6))
        cfg = MttConfig(k1=2, k2=2, q=4, seed=3)
        with pytest.raises(DegenerateInjectionError, match="4 draw"):
            mtt_init(x, y, cfg)

    def test_explicit_injection_not_resampled(self):
        rng = np.random.default_rng(12)
        y = rng.standard_normal((4, 10))
        x = rng.standard_normal((6, 10))
        v0 = rng.standard_normal((3, 4)) @ y   # degenerate on purpose
        cfg = MttConfig(k1=2, k2=2, q=3, seed=3)
        with pytest.raises(DegenerateInjectionError, match="1 draw"):
            mtt_init(x, y, cfg, v0=v0)

    def test_explicit_injection_shape_checked(self):
        x, y = small_problem(13)
        cfg = MttConfig(k1=2, k2=2, q=4, seed=3)
        with pytest.raises(ValueError):
            mtt_init(x, y, cfg, v0=np.zeros((3, 12)))


class TestFit:
    def test_huge_delta_stops_after_one_iteration(self):
        x, y = small_problem(14)
        cfg = MttConfig(k1=2, k2=2, q=4, delta=1e9, seed=0)
        _, trace = mtt_fit(x, y, cfg)
        assert trace.iterations == 1
        assert trace.errors.size == 2
        assert trace.converged

    def test_representable_input_converges_immediately(self):
        rng = np.random.default_rng(15)
        y = rng.standard_normal((5, 12))
        d = np.linalg.qr(rng.standard_normal((6, 2)))[0]
        x = d @ rng.standard_normal((2, 5)) @ y
        cfg = MttConfig(k1=2, k2=2, q=4, delta=1e-9, seed=0)
        _, trace = mtt_fit(x, y, cfg)
        assert trace.errors[0] <= 1e-8
        assert trace.converged and trace.iterations == 1

    def test_trace_monotone_over_many_seeds(self):
        shapes = [(6, 5, 4, 12), (4, 4, 3, 9), (8, 6, 5, 16), (5, 7, 4, 14)]
        for seed in range(100):
            m, n, q, s = shapes[seed % len(shapes)]
            rng = np.random.default_rng(1000 + seed)
            x = rng.standard_normal((m, s))
            y = rng.standard_normal((n, s))
            cfg = MttConfig(k1=2, k2=2, q=q, delta=1e-7, max_iter=60, seed=seed)
            _, trace = mtt_fit(x, y, cfg)
            slack = 1e-9 * max(1.0, trace.errors[0])
            assert np.all(np.diff(trace.errors) <= slack)

    def test_bit_for_bit_determinism(self):
        x, y = small_problem(16)
        cfg = MttConfig(k1=2, k2=2, q=4, delta=1e-8, max_iter=40, seed=9)
        _, t1 = mtt_fit(x, y, cfg)
        _, t2 = mtt_fit(x, y, cfg)
        np.testing.assert_array_equal(t1.errors, t2.errors)
        assert t1.branches == t2.branches
        assert t1.converged == t2.converged

    def test_final_error_matches_model_objective(self):
        x, y = small_problem(17)
        cfg = MttConfig(k1=2, k2=2, q=4, delta=1e-8, max_iter=40, seed=2)
        model, trace = mtt_fit(x, y, cfg)
        assert objective(x, y, model) == pytest.approx(
            trace.errors[-1], rel=1e-9, abs=1e-12
        )

    def test_rank_budgets_respected(self):
        x, y = small_problem(18)
        cfg = MttConfig(k1=2, k2=2, q=4, delta=1e-8, max_iter=40, seed=4)
        model, _ = mtt_fit(x, y, cfg)
        assert matops.numerical_rank(model.first.D @ model.first.C) <= 2
        assert matops.numerical_rank(model.second.D @ model.second.C) <= 2

    def test_stationary_at_convergence(self):
        x, y = small_problem(19)
        cfg = MttConfig(k1=2, k2=2, q=4, delta=1e-10, max_iter=3000, seed=6)
        model, trace = mtt_fit(x, y, cfg)
        assert trace.converged
        final = trace.errors[-1]
        resid = x - model.first.D @ (model.first.C @ y)
        v_new = update_injection(x, model.second, model.G)
        eps_v = second_term_error(resid, model.second, v_new @ model.G)
        pair_new = update_second_factor(x, model.Z, cfg.k2)
        eps_dc = second_term_error(resid, pair_new, model.Z)
        tol = cfg.delta + 1e-9 * max(1.0, trace.errors[0])
        assert final - eps_v <= tol
        assert final - eps_dc <= tol

    def test_model_invariants_after_fit(self):
        x, y = small_problem(22)
        cfg = MttConfig(k1=2, k2=2, q=4, delta=1e-8, max_iter=40, seed=8)
        model, _ = mtt_fit(x, y, cfg)
        znorm = max(1.0, np.linalg.norm(model.Z))
        assert np.linalg.norm(model.Z - model.V @ model.G) <= 1e-12 * znorm
        assert (
            np.linalg.norm(model.Z @ y.T)
            <= 1e-8 * np.linalg.norm(model.Z) * np.linalg.norm(y)
        )

    def test_projector_is_its_own_pseudo_inverse(self):
        x, y = small_problem(20)
        cfg = MttConfig(k1=2, k2=2, q=4, seed=1)
        model, _ = mtt_init(x, y, cfg)
        assert np.linalg.norm(matops.pinv(model.G) - model.G) <= 1e-9


class TestCompressDecompress:
    def fitted(self, seed=21):
        x, y = small_problem(seed)
        cfg = MttConfig(k1=2, k2=2, q=4, delta=1e-8, max_iter=40, seed=7)
        model, trace = mtt_fit(x, y, cfg)
        return x, y, cfg, model, trace

    def test_shapes_and_ratio(self):
        x, y, cfg, model, _ = self.fitted()
        u1, u2 = compress(model, y, model.V)
        assert u1.shape == (2, 12) and u2.shape == (2, 12)
        assert compression_ratio(cfg, x.shape[0], y.shape[0]) == pytest.approx(0.8)

    def test_zero_injection_gives_zero_block(self):
        _, y, _, model, _ = self.fitted()
        _, u2 = compress(model, y, np.zeros_like(model.V))
        np.testing.assert_allclose(u2, 0.0, atol=1e-15)

    def test_round_trip_equals_apply(self):
        _, y, _, model, _ = self.fitted()
        u1, u2 = compress(model, y, model.V)
        out = decompress(model, u1, u2)
        expected = apply_transform(model.as_two_term(), y, model.V)
        np.testing.assert_array_equal(out, expected)

    def test_round_trip_error_equals_trace(self):
        x, y, _, model, trace = self.fitted()
        out = decompress(model, *compress(model, y, model.V))
        err = reconstruction_error(x, out).raw
        assert abs(err - trace.errors[-1]) <= 1e-9 * max(1.0, trace.errors[-1])

    def test_zero_blocks_decompress_to_zero(self):
        _, _, _, model, _ = self.fitted()
        out = decompress(model, np.zeros((2, 12)), np.zeros((2, 12)))
        np.testing.assert_allclose(out, 0.0, atol=1e-15)

    def test_shape_validation(self):
        _, y, _, model, _ = self.fitted()
        with pytest.raises(ValueError):
            compress(model, y[:3], model.V)
        with pytest.raises(ValueError):
            decompress(model, np.zeros((3, 12)), np.zeros((2, 12)))
        with pytest.raises(ValueError):
            decompress(model, np.zeros((2, 12)), np.zeros((2, 11)))
