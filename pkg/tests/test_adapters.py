import numpy as np
import pytest

from adapterlab.adapters import (
    AdapterKind, AdapterSpec, build_adapter, build_conv_adapter,
    build_linear_adapter, build_transformer_adapter, count_for_spec,
    count_parameters, heads_for_bottleneck, parameter_shapes,
    solve_bottleneck_for_budget,
)
from adapterlab.errors import BudgetError, ConfigError
from adapterlab.rng import RngState
from adapterlab.tensor import Tensor, mul, sub, tmean

from oracles import gradcheck

ALL_KINDS = list(AdapterKind)


def host_input(kind, d, rng, stereo=False):
    if kind in (AdapterKind.CONV_RESIDUAL_2D, AdapterKind.TRANSFORMER_2D):
        return Tensor(rng.normal((d, 4, 6)))
    if stereo:
        return Tensor(rng.normal((2, 6, d)))
    return Tensor(rng.normal((6, d)))


def make_spec(kind, d=16, b=4, **kw):
    return AdapterSpec(kind=kind, model_dim=d, bottleneck_dim=b, **kw)


def randomize(module, rng, std=0.5):
    """Overwrite every parameter (including the zero-init up projection)."""
    for name in sorted(module.parameters):
        t = module.parameters[name]
        t.data = rng.child(name).normal(t.data.shape, std=std)


class TestIdentityAtInit:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_fresh_adapter_is_exact_identity(self, kind):
        rng = RngState(100)
        module = build_adapter(make_spec(kind), rng.child("build"))
        for trial in range(5):
            x = host_input(kind, 16, rng.child(trial))
            out = module.forward(x)
            assert np.array_equal(out.data, x.data)

    def test_stereo_expand_identity_and_duplication(self):
        rng = RngState(101)
        spec = make_spec(AdapterKind.LINEAR_BOTTLENECK, stereo_expand=True)
        module = build_linear_adapter(spec, rng.child("build"))
        x = host_input(AdapterKind.LINEAR_BOTTLENECK, 16, rng, stereo=True)
        assert np.array_equal(module.forward(x).data, x.data)
        # perturbed up projection adds the same delta to both channels
        randomize(module, rng.child("rand"))
        out = module.forward(x)
        delta = out.data - x.data
        assert np.allclose(delta[0], delta[1])
        assert np.abs(delta).max() > 0

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_shape_preserved(self, kind):
        rng = RngState(102)
        module = build_adapter(make_spec(kind), rng.child("build"))
        randomize(module, rng.child("rand"))
        x = host_input(kind, 16, rng)
        assert module.forward(x).shape == x.shape


class TestParameterCounting:
    def test_linear_pinned_count(self):
        spec = make_spec(AdapterKind.LINEAR_BOTTLENECK, d=64, b=16)
        module = build_linear_adapter(spec, RngState(0))
        assert count_parameters(module) == 2128
        assert module.parameter_count == 2128

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_count_matches_independent_walker(self, kind):
        module = build_adapter(make_spec(kind, d=16, b=8), RngState(1))
        walked = 0
        for t in module.parameters.values():
            n = 1
            for dim in t.data.shape:
                n *= dim
            walked += n
        assert count_parameters(module) == walked == count_for_spec(module.spec)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_strictly_increasing_in_bottleneck(self, kind):
        counts = [count_for_spec(make_spec(kind, d=32, b=b, num_heads=1))
                  for b in range(1, 40)]
        assert all(b > a for a, b in zip(counts, counts[1:]))

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_all_parameters_trainable(self, kind):
        module = build_adapter(make_spec(kind), RngState(2))
        assert all(t.requires_grad for t in module.parameters.values())


class TestGradients:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_mse_gradcheck_all_kinds(self, kind):
        rng = RngState(200)
        module = build_adapter(make_spec(kind, d=16, b=4, dropout_p=0.0),
                               rng.child("build"))
        randomize(module, rng.child("rand"))
        x = host_input(kind, 16, rng.child("x"))
        target = Tensor(rng.child("t").normal(x.shape))

        def loss():
            diff = sub(module.forward(x), target)
            return tmean(mul(diff, diff))

        assert gradcheck(loss, module.parameters) < 1e-4


class TestConvAdapter:
    def test_se_gate_zero_input_gives_half(self):
        module = build_conv_adapter(make_spec(AdapterKind.CONV_RESIDUAL_SE),
                                    RngState(3))
        gate = module.se_gate(Tensor(np.zeros((4, 10))))
        assert np.allclose(gate.data, 0.5)

    def test_receptive_field_of_three_blocks(self):
        spec = make_spec(AdapterKind.CONV_RESIDUAL_SE, d=8, b=4,
                         num_residual_blocks=3)
        module = build_conv_adapter(spec, RngState(4))
        t_len = 41
        base = module.residual_stack(Tensor(np.zeros((4, t_len)))).data
        x = np.zeros((4, t_len))
        x[0, t_len // 2] = 1.0
        out = module.residual_stack(Tensor(x)).data
        moved = np.abs(out - base).max(axis=0) > 0
        span = np.flatnonzero(moved)
        assert span[-1] - span[0] + 1 == 1 + 2 * (1 + 2 + 4)

    def test_causal_stack_is_one_sided(self):
        spec = make_spec(AdapterKind.CONV_RESIDUAL_SE, d=8, b=4, causal=True)
        module = build_conv_adapter(spec, RngState(5))
        t_len = 41
        x = np.zeros((4, t_len))
        x[0, t_len // 2] = 1.0
        out = module.residual_stack(Tensor(x)).data
        span = np.flatnonzero(np.abs(out).max(axis=0) > 0)
        assert span[0] == t_len // 2
        assert span[-1] - span[0] + 1 == 15

    def test_wrong_kind_rejected(self):
        with pytest.raises(ConfigError):
            build_conv_adapter(make_spec(AdapterKind.LINEAR_BOTTLENECK), RngState(0))
        with pytest.raises(ConfigError):
            build_linear_adapter(make_spec(AdapterKind.TRANSFORMER), RngState(0))
        with pytest.raises(ConfigError):
            build_transformer_adapter(make_spec(AdapterKind.CONV_RESIDUAL_SE),
                                      RngState(0))


class TestTransformerAdapter:
    def test_single_token_attention_is_value_then_output_projection(self):
        rng = RngState(6)
        module = build_transformer_adapter(make_spec(AdapterKind.TRANSFORMER,
                                                     d=16, b=8), rng.child("b"))
        randomize(module, rng.child("r"))
        p = module.parameters
        h = rng.normal((1, 8))
        got = module.attention(Tensor(h)).data
        v = h @ p["attn.wv"].data + p["attn.bv"].data
        expect = v @ p["attn.wo"].data + p["attn.bo"].data
        assert np.allclose(got, expect, atol=1e-12)

    def test_permutation_equivariance_unmasked(self):
        rng = RngState(7)
        module = build_transformer_adapter(
            make_spec(AdapterKind.TRANSFORMER, d=16, b=8, dropout_p=0.0),
            rng.child("b"))
        randomize(module, rng.child("r"))
        x = rng.normal((8, 16))
        perm = RngState(8).shuffled(list(range(8)))
        delta = module.forward(Tensor(x)).data - x
        delta_perm = module.forward(Tensor(x[perm])).data - x[perm]
        assert np.abs(delta[perm] - delta_perm).max() < 1e-12

    def test_causal_breaks_future_dependence(self):
        rng = RngState(9)
        module = build_transformer_adapter(
            make_spec(AdapterKind.TRANSFORMER, d=16, b=8, dropout_p=0.0,
                      causal=True), rng.child("b"))
        randomize(module, rng.child("r"))
        x1 = rng.normal((8, 16))
        x2 = x1.copy()
        x2[5:] += 1.0
        a = module.forward(Tensor(x1)).data
        b = module.forward(Tensor(x2)).data
        assert np.allclose(a[:5], b[:5], atol=1e-12)

    def test_heads_must_divide_bottleneck(self):
        with pytest.raises(ConfigError):
            AdapterSpec(kind=AdapterKind.TRANSFORMER, model_dim=16,
                        bottleneck_dim=6, num_heads=4)


class TestBudgetSolver:
    def test_exact_hit_returns_that_bottleneck(self):
        spec = solve_bottleneck_for_budget(AdapterKind.LINEAR_BOTTLENECK, 64, 2128)
        assert spec.bottleneck_dim == 16
        assert not spec.budget_warning

    def test_below_minimum_is_infeasible(self):
        with pytest.raises(BudgetError):
            solve_bottleneck_for_budget(AdapterKind.TRANSFORMER, 64, 10)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_agrees_with_exhaustive_scan(self, kind):
        d = 64
        cap_count = count_for_spec(make_spec(kind, d=d, b=d, num_heads=1))
        for frac in (0.05, 0.21, 0.5, 0.83):
            target = max(int(cap_count * frac), count_for_spec(
                make_spec(kind, d=d, b=1, num_heads=1)))
            scan = min(range(1, d + 1),
                       key=lambda b: (abs(count_for_spec(
                           make_spec(kind, d=d, b=b, num_heads=1)) - target), b))
            got = solve_bottleneck_for_budget(kind, d, target)
            assert got.bottleneck_dim == scan

    def test_warning_flag_when_grid_cannot_reach(self):
        # very tight tolerance forces the flag on a mid-gap target
        spec = solve_bottleneck_for_budget(AdapterKind.TRANSFORMER, 64, 19000,
                                           tolerance_frac=1e-6)
        assert spec.budget_warning

    def test_derived_heads_divide(self):
        for b in (35, 36, 38, 123):
            assert b % heads_for_bottleneck(b) == 0


class TestParameterShapesTable:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_construction_matches_table(self, kind):
        spec = make_spec(kind, d=16, b=8)
        module = build_adapter(spec, RngState(10))
        assert {k: v.data.shape for k, v in module.parameters.items()} == \
               {k: tuple(v) for k, v in parameter_shapes(spec).items()}
