import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from matforge.errors import IncompatibleWidth, NonFiniteInput, ShapeMismatch
from matforge.nn import (
    AttentionParams,
    ChannelEmbedding,
    attention,
    inject_channel_embedding,
    rope_3d,
    softmax_rows,
)


def naive_attention(q, k, v, d):
    """Three-loop reference evaluation."""
    q, k, v = (x.double().numpy() for x in (q, k, v))
    out = np.zeros((q.shape[0], v.shape[1]))
    for i in range(q.shape[0]):
        scores = np.array([q[i] @ k[j] / math.sqrt(d) for j in range(k.shape[0])])
        scores -= scores.max()
        w = np.exp(scores)
        w /= w.sum()
        for j in range(k.shape[0]):
            out[i] += w[j] * v[j]
    return torch.tensor(out)


class TestSoftmax:
    def test_uniform(self):
        out = softmax_rows(torch.zeros(3, dtype=torch.float64))
        assert torch.allclose(out, torch.full((3,), 1 / 3, dtype=torch.float64))

    def test_large_values_no_overflow(self):
        out = softmax_rows(torch.tensor([1000.0, 1000.0], dtype=torch.float64))
        assert torch.allclose(out, torch.tensor([0.5, 0.5], dtype=torch.float64))

    def test_log_closed_form(self):
        x = torch.log(torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64))
        out = softmax_rows(x)
        expect = torch.tensor([1 / 6, 2 / 6, 3 / 6], dtype=torch.float64)
        assert torch.abs(out - expect).max() < 1e-9

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteInput):
            softmax_rows(torch.tensor([1.0, float("nan")]))
        with pytest.raises(NonFiniteInput):
            softmax_rows(torch.tensor([1.0, float("inf")]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6))
    def test_rows_sum_to_one_and_shift_invariant(self, seed):
        gen = torch.Generator().manual_seed(seed)
        x = torch.randn(5, 7, generator=gen, dtype=torch.float64) * 10
        out = softmax_rows(x)
        assert torch.abs(out.sum(dim=-1) - 1.0).max() < 1e-6
        c = torch.randn(5, 1, generator=gen, dtype=torch.float64) * 100
        shifted = softmax_rows(x + c)
        assert torch.abs(out - shifted).max() < 1e-9


class TestAttention:
    def test_single_key_degeneracy(self):
        gen = torch.Generator().manual_seed(0)
        q = torch.randn(5, 4, generator=gen, dtype=torch.float64)
        k = torch.randn(1, 4, generator=gen, dtype=torch.float64)
        v = torch.randn(1, 6, generator=gen, dtype=torch.float64)
        out = attention(q, k, v, 4)
        assert torch.allclose(out, v.expand(5, 6))

    def test_zero_scores_average_values(self):
        q = torch.zeros(2, 4, dtype=torch.float64)
        k = torch.randn(3, 4, dtype=torch.float64)
        v = torch.randn(3, 5, dtype=torch.float64)
        out = attention(torch.zeros_like(q), torch.zeros_like(k), v, 4)
        assert torch.allclose(out, v.mean(dim=0).expand(2, 5), atol=1e-12)

    def test_matches_naive_oracle(self):
        for seed in range(100):
            gen = torch.Generator().manual_seed(seed)
            q = torch.randn(4, 8, generator=gen, dtype=torch.float64)
            k = torch.randn(6, 8, generator=gen, dtype=torch.float64)
            v = torch.randn(6, 8, generator=gen, dtype=torch.float64)
            out = attention(q, k, v, 8)
            assert torch.abs(out - naive_attention(q, k, v, 8)).max() < 1e-6

    def test_identical_queries_identical_rows(self):
        gen = torch.Generator().manual_seed(3)
        q = torch.randn(1, 8, generator=gen, dtype=torch.float64).expand(5, 8)
        k = torch.randn(6, 8, generator=gen, dtype=torch.float64)
        v = torch.randn(6, 8, generator=gen, dtype=torch.float64)
        out = attention(q, k, v, 8)
        assert torch.equal(out, out[0].expand(5, 8))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            attention(torch.zeros(2, 4), torch.zeros(3, 5), torch.zeros(3, 4), 4)
        with pytest.raises(ShapeMismatch):
            attention(torch.zeros(2, 4), torch.zeros(3, 4), torch.zeros(2, 4), 4)

    def test_bit_identical_across_runs(self):
        gen = torch.Generator().manual_seed(9)
        q = torch.randn(7, 12, generator=gen)
        k = torch.randn(9, 12, generator=gen)
        v = torch.randn(9, 12, generator=gen)
        assert torch.equal(attention(q, k, v, 12), attention(q, k, v, 12))


class TestRope3D:
    def test_zero_coords_identity(self):
        gen = torch.Generator().manual_seed(0)
        x = torch.randn(5, 12, generator=gen, dtype=torch.float64)
        out = rope_3d(x, torch.zeros(5, 3, dtype=torch.float64))
        assert torch.allclose(out, x, atol=1e-15)

    def test_relative_position_property(self):
        gen = torch.Generator().manual_seed(1)
        x = torch.randn(60, generator=gen, dtype=torch.float64)
        y = torch.randn(60, generator=gen, dtype=torch.float64)
        p = torch.randn(3, generator=gen, dtype=torch.float64)
        q = torch.randn(3, generator=gen, dtype=torch.float64)
        t = torch.randn(3, generator=gen, dtype=torch.float64)
        d0 = rope_3d(x[None], p[None]) @ rope_3d(y[None], q[None]).T
        d1 = rope_3d(x[None], (p + t)[None]) @ rope_3d(y[None], (q + t)[None]).T
        assert torch.abs(d0 - d1).max() < 1e-5

    def test_incompatible_width(self):
        with pytest.raises(IncompatibleWidth):
            rope_3d(torch.zeros(2, 4), torch.zeros(2, 3))

    def test_coord_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            rope_3d(torch.zeros(2, 12), torch.zeros(3, 3))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_pairwise_norms_preserved(self, seed):
        gen = torch.Generator().manual_seed(seed)
        x = torch.randn(4, 18, generator=gen, dtype=torch.float64)
        coords = torch.randn(4, 3, generator=gen, dtype=torch.float64) * 5
        out = rope_3d(x, coords)
        assert torch.abs(out.norm(dim=-1) - x.norm(dim=-1)).max() < 1e-6


def random_params(width, gen, with_out=True):
    def m():
        return torch.randn(width, width, generator=gen, dtype=torch.float64) * 0.1

    return AttentionParams(
        w_q=m(),
        w_k=m(),
        w_v_albedo=m(),
        w_v_mr=m(),
        head_dim=width,
        w_out_albedo=m() if with_out else None,
        w_out_mr=m() if with_out else None,
    )


class TestInjectChannelEmbedding:
    def test_zero_embedding_zero_values_is_identity(self):
        gen = torch.Generator().manual_seed(0)
        params = random_params(8, gen)
        params = AttentionParams(
            w_q=params.w_q,
            w_k=params.w_k,
            w_v_albedo=torch.zeros(8, 8, dtype=torch.float64),
            w_v_mr=torch.zeros(8, 8, dtype=torch.float64),
            head_dim=8,
        )
        hidden = torch.randn(5, 8, generator=gen, dtype=torch.float64)
        emb = ChannelEmbedding("albedo", torch.zeros(16, 8, dtype=torch.float64))
        out = inject_channel_embedding(hidden, emb, params)
        assert torch.equal(out, hidden)

    def test_channel_separation(self):
        gen = torch.Generator().manual_seed(1)
        params = random_params(8, gen)
        hidden = torch.randn(5, 8, generator=gen, dtype=torch.float64)
        e_albedo = ChannelEmbedding("albedo", torch.randn(16, 8, generator=gen, dtype=torch.float64))
        e_mr = ChannelEmbedding("mr", e_albedo.table)
        a = inject_channel_embedding(hidden, e_albedo, params)
        b = inject_channel_embedding(hidden, e_mr, params)
        assert torch.norm(a - b) > 0

    def test_matches_direct_cross_attention(self):
        gen = torch.Generator().manual_seed(2)
        params = random_params(8, gen)
        hidden = torch.randn(2, 8, generator=gen, dtype=torch.float64)
        table = torch.randn(16, 8, generator=gen, dtype=torch.float64)
        out = inject_channel_embedding(hidden, ChannelEmbedding("albedo", table), params)
        oracle = hidden + naive_attention(
            hidden @ params.w_q, table @ params.w_k, table @ params.w_v_albedo, 8
        )
        assert torch.abs(out - oracle).max() < 1e-6
