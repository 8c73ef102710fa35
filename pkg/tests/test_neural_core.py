"""
Differentiable primitives, the parameter store and the gradient checker.
"""

import math

import pytest
import torch

from errors import ArgumentError, DimensionError
from neural.core import (
    DTYPE,
    ParamStore,
    active_faults,
    as_node,
    backward,
    inject_backward_fault,
    linear,
    logsumexp,
    matvec,
    sigmoid,
    tanh,
)
from neural.gradcheck import check_gradients


class TestPrimitives:

    def test_matvec_matches_matmul(self):
        W = torch.arange(6, dtype=DTYPE).reshape(2, 3)
        x = as_node([1.0, -1.0, 2.0])
        assert torch.equal(matvec(W, x), W @ x)

    def test_matvec_broadcasts_over_leading_dims(self):
        W = torch.randn(4, 3, dtype=DTYPE)
        xs = torch.randn(2, 5, 3, dtype=DTYPE)
        assert matvec(W, xs).shape == (2, 5, 4)
        assert torch.allclose(matvec(W, xs), xs @ W.T)

    def test_matvec_rejects_bad_shapes(self):
        with pytest.raises(DimensionError):
            matvec(torch.zeros(2, 3, dtype=DTYPE), torch.zeros(4, dtype=DTYPE))

    def test_linear_adds_bias(self):
        W = torch.eye(2, dtype=DTYPE)
        out = linear(W, as_node([1.0, 2.0]), as_node([0.5, 0.5]))
        assert out.tolist() == [1.5, 2.5]

    def test_sigmoid_of_zero_is_exactly_half(self):
        assert float(sigmoid(as_node(0.0))) == 0.5

    def test_tanh_matches_math(self):
        assert float(tanh(as_node(0.3))) == pytest.approx(math.tanh(0.3), abs=1e-15)

    def test_logsumexp_is_stable_for_large_values(self):
        v = as_node([1000.0, 1000.0])
        assert float(logsumexp(v)) == pytest.approx(1000.0 + math.log(2.0), abs=1e-12)

    def test_logsumexp_of_all_neg_inf(self):
        v = as_node([float("-inf"), float("-inf")])
        assert float(logsumexp(v)) == float("-inf")

    def test_logsumexp_rejects_empty(self):
        with pytest.raises(ArgumentError):
            logsumexp(torch.zeros(0, dtype=DTYPE))

    def test_custom_backward_rules_match_autograd(self):
        """Gradients of the primitive rules equal those of the built-in torch ops."""
        torch.manual_seed(0)
        W = torch.randn(3, 4, dtype=DTYPE, requires_grad=True)
        x = torch.randn(2, 4, dtype=DTYPE, requires_grad=True)

        ours = logsumexp(tanh(matvec(W, x)) * sigmoid(matvec(W, x)), dim=1).sum()
        g_W, g_x = torch.autograd.grad(ours, (W, x))

        ref = torch.logsumexp(torch.tanh(x @ W.T) * torch.sigmoid(x @ W.T), dim=1).sum()
        r_W, r_x = torch.autograd.grad(ref, (W, x))

        assert torch.allclose(g_W, r_W, atol=1e-12)
        assert torch.allclose(g_x, r_x, atol=1e-12)


class TestParamStore:

    def test_same_seed_same_values(self):
        a, b = ParamStore(seed=5), ParamStore(seed=5)
        for store in (a, b):
            store.glorot("W", (3, 4))
            store.uniform("E", (5, 2), 0.1)
        assert all(torch.equal(a[n], b[n]) for n in a.names())

    def test_different_seed_different_values(self):
        a, b = ParamStore(seed=1), ParamStore(seed=2)
        assert not torch.equal(a.glorot("W", (3, 4)), b.glorot("W", (3, 4)))

    def test_duplicate_name_rejected(self):
        store = ParamStore()
        store.zeros("b", (2,))
        with pytest.raises(ArgumentError):
            store.zeros("b", (2,))

    def test_frozen_parameters_excluded_from_trainable(self):
        store = ParamStore()
        store.add("table", torch.ones(3, 2), frozen=True)
        store.zeros("b", (2,))
        assert store.is_frozen("table")
        assert [n for n, _ in store.named_parameters(trainable_only=True)] == ["b"]
        assert store.count() == 2
        assert store.count(trainable_only=False) == 8

    def test_load_values_checks_shapes(self):
        store = ParamStore()
        store.zeros("b", (2,))
        with pytest.raises(DimensionError):
            store.load_values({"b": torch.zeros(3)})
        with pytest.raises(ArgumentError):
            store.load_values({"missing": torch.zeros(2)})

    def test_backward_returns_zeros_for_unused_parameters(self):
        store = ParamStore()
        used = store.add("used", torch.tensor([2.0]))
        store.add("unused", torch.tensor([1.0, 1.0]))
        grads = backward((used * used).sum(), store)
        assert grads["used"].tolist() == [4.0]
        assert grads["unused"].tolist() == [0.0, 0.0]

    def test_backward_needs_scalar(self):
        store = ParamStore()
        p = store.add("p", torch.ones(2))
        with pytest.raises(ArgumentError):
            backward(p * 2, store)


class TestGradientChecker:

    @staticmethod
    def _problem():
        store = ParamStore(seed=3)
        W = store.glorot("W", (3, 4))
        b = store.uniform("b", (3,), 0.5)
        x = torch.randn(4, dtype=DTYPE, generator=torch.Generator().manual_seed(9))
        return store, lambda: logsumexp(tanh(linear(W, x, b)))

    def test_correct_rules_pass(self):
        store, loss_fn = self._problem()
        report = check_gradients(loss_fn, store)
        assert report.passed
        assert report.max_rel_error < 1e-4
        assert set(report.per_param) == {"W", "b"}
        assert report.checked_entries == 15

    def test_injected_fault_is_caught_and_named(self):
        store, loss_fn = self._problem()
        with inject_backward_fault("matvec"):
            assert active_faults() == ["matvec"]
            report = check_gradients(loss_fn, store)
        assert not report.passed
        assert report.faults == ["matvec"]
        assert "W" in report.offending
        assert active_faults() == []
        assert "FAIL" in report.to_text()

    def test_unknown_fault_rejected(self):
        with pytest.raises(ArgumentError):
            with inject_backward_fault("conv"):
                pass

    def test_max_entries_caps_work_per_tensor(self):
        store, loss_fn = self._problem()
        report = check_gradients(loss_fn, store, max_entries=2)
        assert report.checked_entries == 4
        assert report.passed
