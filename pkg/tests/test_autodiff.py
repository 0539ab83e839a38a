import numpy as np
import pytest

from tessl import autodiff as ad
from tessl.autodiff import ShapeError, Tensor, apply, backward

from fd import max_rel_error, numeric_grad


def test_relu_values():
    assert ad.relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [[0.0, 0.0, 2.0]]


def test_l2_normalize_row():
    out = ad.l2_normalize_rows(Tensor([[3.0, 4.0]])).data
    np.testing.assert_allclose(out, [[0.6, 0.8]], atol=1e-12)


def test_log_sum_exp_zeros():
    assert ad.log_sum_exp_rows(Tensor([[0.0, 0.0]])).item() == pytest.approx(np.log(2.0), abs=1e-12)


def test_log_sum_exp_large_values_do_not_overflow():
    out = ad.log_sum_exp_rows(Tensor([[1000.0, 1000.0]])).item()
    assert out == pytest.approx(1000.0 + np.log(2.0))


def test_relu_sum_gradient():
    x = Tensor([[2.0, 5.0]], requires_grad=True)
    g = backward(ad.relu(x).sum(), wrt=[x])
    assert g[x].tolist() == [[1.0, 1.0]]


def test_lse_gradient_is_softmax():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(1, 5)), requires_grad=True)
    g = backward(ad.log_sum_exp_rows(x), wrt=[x])[x]
    np.testing.assert_allclose(g, ad.softmax_rows(x).data, atol=1e-15)


def test_softmax_rows_normalized():
    rng = np.random.default_rng(0)
    p = ad.softmax_rows(Tensor(rng.normal(scale=20, size=(50, 7)))).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_masked_lse_ignores_masked_entries():
    x = Tensor([[5.0, 0.0, 0.0]], requires_grad=True)
    mask = np.array([[False, True, True]])
    out = ad.log_sum_exp_rows(x, mask=mask)
    assert out.item() == pytest.approx(np.log(2.0))
    g = backward(out, wrt=[x])[x]
    np.testing.assert_allclose(g, [[0.0, 0.5, 0.5]])


def test_nonfinite_construction_rejected():
    with pytest.raises(ValueError):
        Tensor([[np.nan]])
    with pytest.raises(ValueError):
        Tensor([[np.inf, 1.0]])


def test_shape_error_names_primitive_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError, match=r"add.*\(2, 3\).*\(3, 2\)"):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_apply_dispatch():
    out = apply("relu", Tensor([[-1.0, 3.0]]))
    assert out.data.tolist() == [[0.0, 3.0]]
    with pytest.raises(ValueError, match="unknown primitive"):
        apply("conv", Tensor([[1.0]]))


def test_backward_requires_scalar_root():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(ad.relu(x))


def test_unused_parameter_gets_zero_gradient():
    x = Tensor([[1.0, 2.0]], requires_grad=True)
    unused = Tensor([[3.0]], requires_grad=True)
    g = backward(ad.sum_(x), wrt=[x, unused])
    assert g[unused].tolist() == [[0.0]]


def test_shared_node_accumulates():
    x = Tensor([[1.5, -2.0]], requires_grad=True)
    y = ad.mul(x, x)  # x used twice
    g = backward(ad.sum_(y), wrt=[x])[x]
    np.testing.assert_allclose(g, 2 * x.data)


def test_backward_twice_is_bit_identical():
    rng = np.random.default_rng(11)
    w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    x = Tensor(rng.normal(size=(5, 4)))
    root = ad.log_sum_exp_rows(ad.relu(x @ w)).sum()
    first = backward(root, wrt=[w])[w].copy()
    ad.zero_grad([w])
    second = backward(root, wrt=[w])[w]
    assert np.array_equal(first, second)


# -- finite-difference checks, one per primitive, 100 seeded points each --------

def _unary(fn, positive=False):
    def build(rng):
        x = rng.normal(size=(3, 4))
        if positive:
            x = np.abs(x) + 0.5
        # fixed projection so the root depends on every output entry
        out_shape = fn(Tensor(x)).shape
        proj = Tensor(np.cos(np.arange(np.prod(out_shape))).reshape(out_shape))
        return [x], lambda t: ad.sum_(ad.mul(fn(t[0]), proj))
    return build


def _binary(fn, shape_a, shape_b):
    def build(rng):
        a, b = rng.normal(size=shape_a), rng.normal(size=shape_b)
        out_shape = fn(Tensor(a), Tensor(b)).shape
        proj = Tensor(np.cos(np.arange(np.prod(out_shape))).reshape(out_shape))
        return [a, b], lambda t: ad.sum_(ad.mul(fn(t[0], t[1]), proj))
    return build


CASES = {
    "matmul": _binary(ad.matmul, (3, 4), (4, 2)),
    "add": _binary(ad.add, (3, 4), (3, 4)),
    "add_broadcast": _binary(ad.add, (3, 4), (1, 4)),
    "mul": _binary(ad.mul, (3, 4), (3, 4)),
    "mul_broadcast": _binary(ad.mul, (3, 4), (3, 1)),
    "relu": _unary(ad.relu),
    "exp": _unary(ad.exp),
    "log": _unary(ad.log, positive=True),
    "sum": _unary(lambda t: ad.sum_(t, axis=1)),
    "mean": _unary(lambda t: ad.mean(t, axis=0)),
    "l2_normalize_rows": _unary(ad.l2_normalize_rows),
    "log_sum_exp_rows": _unary(ad.log_sum_exp_rows),
    "softmax_rows": _unary(ad.softmax_rows),
    "transpose": _unary(ad.transpose),
    "slice": _unary(lambda t: ad.slice_(t, rows=np.array([0, 2, 2]), cols=slice(1, 3))),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_gradients_match_finite_differences(name):
    build = CASES[name]
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        arrays, f = build(rng)
        leaves = [Tensor(a, requires_grad=True) for a in arrays]
        grads = backward(f(leaves), wrt=leaves)
        for k, leaf in enumerate(leaves):
            def scalar(v, k=k):
                args = [Tensor(v if j == k else arrays[j]) for j in range(len(arrays))]
                return f(args).item()
            worst = max(worst, max_rel_error(grads[leaf], numeric_grad(scalar, arrays[k])))
    assert worst < 1e-5, f"{name}: max relative error {worst:.2e}"


def test_mlp_identity_network():
    x = Tensor([[1.0, 2.0, 3.0]])
    layer = (Tensor(np.eye(3)), Tensor(np.zeros((1, 3))))
    np.testing.assert_allclose(ad.mlp_forward([layer], x).data, x.data)
    np.testing.assert_allclose(ad.mlp_forward([layer], x, normalize_output=True).data,
                               x.data / np.linalg.norm(x.data), atol=1e-12)


def test_mlp_dot_product():
    layer = (Tensor([[1.0], [1.0]]), Tensor([[0.0]]))
    assert ad.mlp_forward([layer], Tensor([[2.0, 3.0]])).item() == 5.0


def test_mlp_normalized_rows_unit_norm():
    rng = np.random.default_rng(42)
    params = ad.init_mlp([6, 8, 4], rng)
    layers = [(Tensor(params["0.weight"]), Tensor(params["0.bias"])),
              (Tensor(params["1.weight"]), Tensor(params["1.bias"]))]
    out = ad.mlp_forward(layers, Tensor(rng.normal(size=(10, 6))), normalize_output=True)
    np.testing.assert_allclose(np.linalg.norm(out.data, axis=1), 1.0, atol=1e-9)


def test_mlp_dimension_chain_break():
    layers = [(Tensor(np.ones((3, 4))), Tensor(np.zeros((1, 4)))),
              (Tensor(np.ones((5, 2))), Tensor(np.zeros((1, 2))))]
    with pytest.raises(ShapeError, match="layer 1"):
        ad.mlp_forward(layers, Tensor(np.ones((1, 3))))


def test_init_mlp_bounds():
    params = ad.init_mlp([16, 4], np.random.default_rng(0))
    assert np.abs(params["0.weight"]).max() <= 0.25
    assert params["0.bias"].shape == (1, 4)
