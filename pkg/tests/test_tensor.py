import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import FD_TOL, away_from_zero, gradcheck
from pcfgrasp.errors import DimensionError, ValidationError
from pcfgrasp.tensor import (
    Tensor,
    add,
    bce,
    concat,
    cross3,
    div,
    elementwise,
    expand,
    linear,
    matmul,
    max_pool_groups,
    mean,
    minimum,
    mul,
    normalize_rows,
    relu,
    reshape,
    row_norm,
    sigmoid,
    sqrt,
    square,
    sub,
    take,
    tsum,
)


# -- forward values --------------------------------------------------------------
def test_matmul_examples():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), m).data, m)
    assert matmul([[1.0, 2.0]], [[3.0], [4.0]]).data.tolist() == [[11.0]]
    assert np.array_equal(matmul(np.zeros((2, 3)), np.ones((3, 2))).data, np.zeros((2, 2)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 2)))


def test_relu_and_sigmoid_values():
    assert relu([-1.0, 0.0, 2.0]).data.tolist() == [0.0, 0.0, 2.0]
    assert sigmoid(0.0).data == 0.5
    assert sigmoid(1.0).data == pytest.approx(0.73106, abs=1e-5)
    # no overflow at the extremes
    with np.errstate(over="raise"):
        s = sigmoid([-800.0, 800.0]).data
    assert s[0] == 0.0 and s[1] == 1.0


def test_elementwise_dispatch():
    a, b = np.array([1.0, -2.0]), np.array([3.0, 4.0])
    assert elementwise("add", a, b).data.tolist() == [4.0, 2.0]
    assert elementwise("mul", a, b).data.tolist() == [3.0, -8.0]
    assert elementwise("sub", a, b).data.tolist() == [-2.0, -6.0]
    assert elementwise("relu", a).data.tolist() == [1.0, 0.0]
    with pytest.raises(ValidationError):
        elementwise("tanh", a)


def test_broadcasting_is_scalar_or_equal_shape_only():
    x = Tensor(np.ones((2, 3)))
    assert add(x, 2.0).shape == (2, 3)
    assert mul(3.0, x).data.sum() == 18.0
    with pytest.raises(DimensionError):
        add(x, np.ones(3))
    with pytest.raises(DimensionError):
        mul(x, np.ones((3, 2)))
    assert expand(np.ones(3), (2, 3)).shape == (2, 3)


def test_max_pool_examples():
    out = max_pool_groups([[[1.0, 5.0], [3.0, 2.0]]])
    assert out.data.tolist() == [[3.0, 5.0]]
    single = np.array([[[7.0, -1.0]]])
    assert np.array_equal(max_pool_groups(single).data, single[:, 0])
    with pytest.raises(DimensionError):
        max_pool_groups(np.zeros((2, 0, 3)))


def test_max_pool_ties_route_to_first_index():
    x = Tensor(np.full((1, 4, 2), 3.0), requires_grad=True)
    tsum(max_pool_groups(x)).backward()
    assert x.grad[0, :, 0].tolist() == [1.0, 0.0, 0.0, 0.0]
    assert x.grad[0, :, 1].tolist() == [1.0, 0.0, 0.0, 0.0]


def test_max_pool_gradient_is_one_hot_and_conserves_upstream(rng):
    x = Tensor(rng.normal(size=(5, 7, 4)), requires_grad=True)
    g = rng.normal(size=(5, 4))
    max_pool_groups(x).backward(g)
    nonzero = (x.grad != 0).sum(axis=1)
    assert np.all(nonzero == 1)
    assert np.allclose(x.grad.sum(axis=1), g)


def test_bce_examples():
    assert bce([0.5], [1.0]).data == pytest.approx(0.69315, abs=1e-5)
    assert bce([1.0 - 1e-7], [1.0]).data == pytest.approx(0.0, abs=1e-6)
    assert bce(np.full(6, 0.5), [0, 1, 1, 0, 1, 0.0]).data == pytest.approx(np.log(2), abs=1e-12)
    per = bce([0.2, 0.9], [0.0, 1.0], reduction="none").data
    assert per == pytest.approx([-np.log(0.8), -np.log(0.9)])
    # clamping keeps exact 0/1 predictions finite
    assert np.isfinite(bce([0.0, 1.0], [1.0, 0.0]).data)


def test_bce_rejects_soft_targets():
    with pytest.raises(ValidationError):
        bce([0.5], [0.3])
    with pytest.raises(DimensionError):
        bce([0.5, 0.5], [1.0])


def test_relu_gradient_at_zero_is_zero():
    x = Tensor([0.0, 1.0, -1.0], requires_grad=True)
    tsum(relu(x)).backward()
    assert x.grad.tolist() == [0.0, 1.0, 0.0]


def test_row_norm_zero_row_has_zero_gradient():
    x = Tensor(np.zeros((2, 3)), requires_grad=True)
    tsum(row_norm(x)).backward()
    assert np.array_equal(x.grad, np.zeros((2, 3)))


def test_gradient_accumulates_over_reuse():
    x = Tensor([2.0], requires_grad=True)
    y = mul(x, x) + x  # dy/dx = 2x + 1
    tsum(y).backward()
    assert x.grad.tolist() == [5.0]


def test_take_accumulates_repeated_indices():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    tsum(take(x, np.array([0, 0, 2]))).backward()
    assert x.grad.tolist() == [2.0, 0.0, 1.0]


def test_backward_requires_scalar_or_seed():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(DimensionError):
        mul(x, 2.0).backward()
    mul(x, 2.0).backward(np.ones(3))
    assert x.grad.tolist() == [2.0, 2.0, 2.0]


def test_tape_id_tracks_graph_membership():
    const = Tensor([1.0])
    leaf = Tensor([1.0], requires_grad=True)
    assert const.tape_id is None
    assert leaf.tape_id is not None
    assert add(leaf, const).tape_id is not None


def test_tape_determinism(rng):
    data = {k: rng.normal(size=(6, 4)) for k in ("x", "w")}

    def run():
        x = Tensor(data["x"], requires_grad=True)
        w = Tensor(data["w"].T.copy(), requires_grad=True)
        loss = tsum(sigmoid(relu(matmul(x, w))))
        loss.backward()
        return x.grad.copy(), w.grad.copy()

    (a1, b1), (a2, b2) = run(), run()
    assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


def test_linear_skips_constant_operands(rng):
    x = Tensor(rng.normal(size=(3, 2)))
    W = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
    tsum(linear(x, W)).backward()
    assert x.grad is None and W.grad.shape == (2, 4)


# -- gradient checks, one per differentiable op ---------------------------------------
GRAD_CASES = {
    "matmul": (lambda t: tsum(matmul(t["a"], t["b"])), {"a": (3, 4), "b": (4, 2)}),
    "linear": (lambda t: tsum(square(linear(t["x"], t["W"], t["b"]))), {"x": (5, 3), "W": (3, 2), "b": (2,)}),
    "add": (lambda t: tsum(mul(add(t["a"], t["b"]), t["a"])), {"a": (4,), "b": (4,)}),
    "sub": (lambda t: tsum(mul(sub(t["a"], t["b"]), t["b"])), {"a": (4,), "b": (4,)}),
    "mul_scalar": (lambda t: tsum(mul(t["a"], t["s"])), {"a": (3, 2), "s": ()}),
    "div": (lambda t: tsum(div(t["a"], add(square(t["b"]), 1.0))), {"a": (4,), "b": (4,)}),
    "minimum": (lambda t: tsum(mul(minimum(t["a"], t["b"]), t["a"])), {"a": (6,), "b": (6,)}),
    "relu": (lambda t: tsum(mul(relu(t["a"]), t["a"])), {"a": (8,)}),
    "sigmoid": (lambda t: tsum(sigmoid(t["a"])), {"a": (5,)}),
    "sqrt": (lambda t: tsum(sqrt(add(square(t["a"]), 0.5))), {"a": (4,)}),
    "square": (lambda t: tsum(square(t["a"])), {"a": (4,)}),
    "reshape": (lambda t: tsum(mul(reshape(t["a"], (3, 2)), Tensor(np.arange(6.0).reshape(3, 2)))), {"a": (2, 3)}),
    "take": (lambda t: tsum(square(take(t["a"], np.array([0, 2, 2, 1])))), {"a": (3,)}),
    "concat": (lambda t: tsum(square(concat([t["a"], t["b"]], axis=1))), {"a": (2, 2), "b": (2, 3)}),
    "expand": (lambda t: tsum(mul(expand(t["a"], (4, 3)), Tensor(np.arange(12.0).reshape(4, 3)))), {"a": (1, 3)}),
    "tsum_axis": (lambda t: tsum(square(tsum(t["a"], axis=1))), {"a": (3, 4)}),
    "mean": (lambda t: tsum(square(mean(t["a"], axis=0))), {"a": (3, 4)}),
    "max_pool": (lambda t: tsum(square(max_pool_groups(t["a"]))), {"a": (3, 4, 2)}),
    "cross3": (lambda t: tsum(square(cross3(t["a"], t["b"]))), {"a": (4, 3), "b": (4, 3)}),
    "row_norm": (lambda t: tsum(row_norm(t["a"])), {"a": (4, 3)}),
    "normalize_rows": (lambda t: tsum(mul(normalize_rows(t["a"]), Tensor(np.arange(12.0).reshape(4, 3)))),
                       {"a": (4, 3)}),
}


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_gradcheck_op(name, rng):
    fn, shapes = GRAD_CASES[name]
    inputs = {k: away_from_zero(rng, s) for k, s in shapes.items()}
    errors = gradcheck(fn, inputs)
    assert max(errors.values()) < FD_TOL, errors


def test_gradcheck_bce(rng):
    y = (rng.random(6) > 0.5).astype(float)
    errors = gradcheck(lambda t: bce(sigmoid(t["z"]), y), {"z": away_from_zero(rng, (6,))})
    assert errors["z"] < FD_TOL


def test_gradcheck_composed_toy_network(rng):
    X = rng.uniform(-1, 1, size=(6, 3))
    y = np.array([0, 1, 1, 0, 1, 0.0])

    def net(t):
        h = relu(linear(Tensor(X), t["W1"], t["b1"]))
        return bce(sigmoid(reshape(linear(h, t["W2"], t["b2"]), (6,))), y)

    inputs = {"W1": rng.uniform(-1, 1, (3, 5)), "b1": rng.uniform(-1, 1, 5),
              "W2": rng.uniform(-1, 1, (5, 1)), "b2": rng.uniform(-1, 1, 1)}
    assert max(gradcheck(net, inputs).values()) < FD_TOL


# -- properties ----------------------------------------------------------------------
finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (3, 4), elements=finite))
def test_add_commutes_and_sub_inverts(a, b):
    assert np.array_equal(add(a, b).data, add(b, a).data)
    assert np.allclose(sub(add(a, b), b).data, a, atol=1e-9)


@settings(max_examples=50)
@given(arrays(np.float64, (2, 5, 3), elements=finite))
def test_max_pool_is_permutation_invariant(x):
    perm = np.random.default_rng(0).permutation(5)
    assert np.array_equal(max_pool_groups(x).data, max_pool_groups(x[:, perm]).data)


@given(arrays(np.float64, 7, elements=st.floats(-50, 50)))
def test_sigmoid_stays_in_closed_unit_interval(z):
    s = sigmoid(z).data
    assert np.all((s >= 0) & (s <= 1))
    assert np.allclose(s + sigmoid(-z).data, 1.0)
