import pytest
import torch

from errors import ArgumentError, DimensionError, EmbeddingLookupError
from neural.core import DTYPE, ParamStore
from neural.layers import (
    BiLstmParams,
    CharCnnParams,
    LstmParams,
    apply_dropout,
    bilstm,
    char_cnn,
    embedding_lookup,
    lstm,
    reverse_padded,
)


def _sigmoid(x):
    return 1.0 / (1.0 + torch.exp(-x))


class TestEmbeddingLookup:

    def test_rows_and_sparse_gradient(self):
        table = torch.arange(12, dtype=DTYPE).reshape(4, 3).requires_grad_()
        out = embedding_lookup(table, [2, 0, 2])
        assert out[0].tolist() == [6.0, 7.0, 8.0]
        out.sum().backward()
        assert table.grad[:, 0].tolist() == [1.0, 0.0, 2.0, 0.0]

    def test_out_of_range_id(self):
        with pytest.raises(EmbeddingLookupError):
            embedding_lookup(torch.zeros(3, 2, dtype=DTYPE), [3])
        with pytest.raises(IndexError):
            embedding_lookup(torch.zeros(3, 2, dtype=DTYPE), [-1])

    def test_frozen_table_gets_no_gradient(self):
        store = ParamStore()
        table = store.add("words", torch.ones(3, 2), frozen=True)
        assert not embedding_lookup(table, [1]).requires_grad


class TestCharCnn:

    @pytest.fixture
    def params(self):
        return CharCnnParams.create(ParamStore(seed=4), "char", n_chars=10, d_char=5, n_filters=6, width=3)

    def test_output_size_is_filter_count(self, params):
        assert char_cnn([2, 3, 4, 5], params).shape == (6,)

    def test_token_shorter_than_width(self, params):
        out = char_cnn([7], params)
        assert out.shape == (6,)
        assert torch.all(out.abs() <= 1.0)

    def test_padding_does_not_change_features(self, params):
        single = char_cnn([2, 3, 4], params)
        padded = torch.tensor([[2, 3, 4, 0, 0], [5, 6, 7, 8, 9]])
        rows = char_cnn(padded, params, lengths=[3, 5])
        assert torch.allclose(rows[0], single, atol=1e-12)
        assert torch.allclose(rows[1], char_cnn([5, 6, 7, 8, 9], params), atol=1e-12)

    def test_empty_token_rejected(self, params):
        with pytest.raises(ArgumentError):
            char_cnn([], params)

    def test_dropout_hook_sees_char_embeddings(self, params):
        seen = []

        def drop_all(x):
            seen.append(tuple(x.shape))
            return torch.zeros_like(x)

        out = char_cnn([2, 3, 4], params, dropout=drop_all)
        assert seen and seen[0][-1] == 5
        assert not torch.allclose(out, char_cnn([2, 3, 4], params))


class TestLstm:

    def test_single_step_matches_hand_recurrence(self):
        store = ParamStore(seed=2)
        p = LstmParams.create(store, "lstm", d_in=3, d_h=2)
        x = torch.randn(1, 1, 3, dtype=DTYPE, generator=torch.Generator().manual_seed(1))

        z = p.W @ x[0, 0] + p.b
        i, f, g, o = z[0:2], z[2:4], z[4:6], z[6:8]
        c = _sigmoid(i) * torch.tanh(g)
        h = _sigmoid(o) * torch.tanh(c)

        assert torch.allclose(lstm(x, p)[0, 0], h, atol=1e-12)

    def test_two_steps_match_hand_recurrence(self):
        store = ParamStore(seed=2)
        p = LstmParams.create(store, "lstm", d_in=3, d_h=2)
        xs = torch.randn(1, 2, 3, dtype=DTYPE, generator=torch.Generator().manual_seed(1))

        h = torch.zeros(2, dtype=DTYPE)
        c = torch.zeros(2, dtype=DTYPE)
        expected = []
        for t in range(2):
            z = p.W @ xs[0, t] + p.U @ h + p.b
            c = _sigmoid(z[2:4]) * c + _sigmoid(z[0:2]) * torch.tanh(z[4:6])
            h = _sigmoid(z[6:8]) * torch.tanh(c)
            expected.append(h)

        assert torch.allclose(lstm(xs, p)[0], torch.stack(expected), atol=1e-12)

    def test_forget_bias_initialised_to_one(self):
        p = LstmParams.create(ParamStore(), "lstm", d_in=3, d_h=2)
        assert p.b.tolist() == [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]


class TestBiLstm:

    @pytest.fixture
    def params(self):
        return BiLstmParams.create(ParamStore(seed=6), "enc", d_in=4, d_h=3)

    def test_output_concatenates_directions(self, params):
        xs = torch.randn(5, 4, dtype=DTYPE)
        assert bilstm(xs, params).shape == (5, 6)

    def test_backward_direction_reads_right_to_left(self, params):
        xs = torch.randn(4, 4, dtype=DTYPE, generator=torch.Generator().manual_seed(0))
        out = bilstm(xs, params)
        backward_only = lstm(xs.flip(0).unsqueeze(0), params.bwd)[0].flip(0)
        assert torch.allclose(out[:, 3:], backward_only, atol=1e-12)

    def test_padded_rows_match_unpadded(self, params):
        gen = torch.Generator().manual_seed(3)
        short = torch.randn(2, 4, dtype=DTYPE, generator=gen)
        long = torch.randn(4, 4, dtype=DTYPE, generator=gen)
        batch = torch.stack([torch.cat([short, torch.full((2, 4), 9.0, dtype=DTYPE)]), long])
        out = bilstm(batch, params, lengths=[2, 4])
        assert torch.allclose(out[0, :2], bilstm(short, params), atol=1e-12)
        assert torch.allclose(out[1], bilstm(long, params), atol=1e-12)

    def test_reverse_padded_keeps_padding(self):
        xs = torch.tensor([[1, 2, 3, 0], [1, 2, 3, 4]])
        assert reverse_padded(xs, [3, 4]).tolist() == [[3, 2, 1, 0], [4, 3, 2, 1]]

    def test_wrong_input_dim(self, params):
        with pytest.raises(DimensionError):
            bilstm(torch.zeros(3, 5, dtype=DTYPE), params)


class TestDropout:

    def test_eval_mode_is_identity(self):
        x = torch.ones(100, dtype=DTYPE)
        assert apply_dropout(x, 0.25, train=False) is x

    def test_train_mode_rescales_survivors(self):
        x = torch.ones(1000, dtype=DTYPE)
        out = apply_dropout(x, 0.25, train=True, generator=torch.Generator().manual_seed(0))
        survivors = out[out != 0]
        assert torch.allclose(survivors, torch.full_like(survivors, 1 / 0.75))
        assert 0.15 < float((out == 0).double().mean()) < 0.35

    def test_expected_output_equals_input(self):
        x = torch.full((100_000,), 2.0, dtype=DTYPE)
        out = apply_dropout(x, 0.25, train=True, generator=torch.Generator().manual_seed(11))
        assert abs(float(out.mean()) - 2.0) / 2.0 < 0.02

    def test_rate_validated(self):
        with pytest.raises(ArgumentError):
            apply_dropout(torch.ones(2, dtype=DTYPE), 1.0, train=True)
