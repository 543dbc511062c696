import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dysuse import numerics as nx
from dysuse.errors import CorruptFileError, ValidationError
from dysuse.numerics import Adam, Tensor
from gradcheck import check


def param(x):
    return Tensor(np.asarray(x, dtype=float), requires_grad=True)


def test_relu1_values_and_slopes():
    x = param([-0.3, 0.4, 1.7, 0.5, 1.5, -0.5])
    y = nx.relu1(x)
    assert y.data[:3].tolist() == [0.0, 0.4, 1.0]
    nx.tsum(y).backward()
    assert x.grad[3:].tolist() == [1.0, 0.0, 0.0]


def test_relu1_left_derivative_at_kinks():
    x = param([0.0, 1.0])
    nx.tsum(nx.relu1(x)).backward()
    assert x.grad.tolist() == [0.0, 1.0]


def test_leaky_relu_left_derivative():
    x = param([0.0, -2.0, 3.0])
    nx.tsum(nx.leaky_relu(x)).backward()
    assert x.grad.tolist() == [0.01, 0.01, 1.0]


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e6, 1e6)))
def test_relu1_range(x):
    y = nx.relu1(x).data
    assert ((y >= 0) & (y <= 1)).all()


def test_masked_softmax_single_entry():
    out = nx.masked_softmax([[3.0, 7.0]], [[0.0, -np.inf]]).data
    assert out.tolist() == [[1.0, 0.0]]


def test_masked_softmax_fully_masked_row():
    out = nx.masked_softmax([[1.0, 2.0], [0.5, 0.5]], [[-np.inf, -np.inf], [0.0, 0.0]]).data
    assert out[0].tolist() == [0.0, 0.0]
    assert out[1].tolist() == [0.5, 0.5]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10**6))
def test_masked_softmax_rows(T, seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(0, 5, (3, T, T))
    mask = np.where(rng.uniform(size=(T, T)) < 0.4, -np.inf, 0.0)
    out = nx.masked_softmax(e, mask).data
    assert (out[:, ~np.isfinite(mask)] == 0).all()
    sums = out.sum(-1)
    has = np.isfinite(mask).any(-1)
    assert np.allclose(sums[:, has], 1.0)
    assert (sums[:, ~has] == 0).all()


def test_mae_and_loss():
    assert nx.mae([0.2, 0.8], [0.2, 0.8]).item() == 0.0
    assert nx.sum_abs_error([0.5, 0.5], [1.0, 0.0]).item() == 1.0
    with pytest.raises(ValidationError):
        nx.mae([1.0], [1.0, 2.0])


def test_shape_mismatch():
    with pytest.raises(ValidationError):
        nx.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
    with pytest.raises(ValidationError):
        nx.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_backward_needs_scalar():
    x = param([1.0, 2.0])
    with pytest.raises(ValidationError):
        (x * 2.0).backward()


def test_linear_grad():
    w = param([1.0, -2.0, 0.5])
    x = np.array([3.0, 4.0, 5.0])
    nx.tsum(w * x).backward()
    assert w.grad.tolist() == x.tolist()


def test_shared_subexpression_accumulates():
    x = param(3.0)
    y = x * x + x
    y.backward()
    assert x.grad == 7.0


def test_no_grad_builds_no_tape():
    x = param([1.0])
    with nx.no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_composite_gradcheck():
    rng = np.random.default_rng(0)
    a = param(rng.normal(size=(3, 2)))
    b = param(rng.normal(size=(2, 2)))
    c = param(rng.normal(size=4))
    d = param(rng.normal(size=(2,)))
    e = param(rng.normal(size=4))
    idx = np.array([0, 2, 1, 1])
    mask = np.array([[0.0, -np.inf], [0.0, 0.0], [0.0, 0.0]])

    def build():
        h = nx.leaky_relu(a @ b) + d
        s = nx.masked_softmax(h, mask)
        g = nx.gather(nx.tsum(s * h, axis=-1), idx)
        z = nx.scatter_add(g * c + e, np.array([1, 0, 1, 2]), 3)
        z = nx.concat([z, nx.sigmoid(c[:2])], axis=0)
        return nx.sum_abs_error(nx.relu1(z * 0.3 + 0.2), np.linspace(0, 1, 5))

    params = [a, b, c, d, e]
    assert sum(p.size for p in params) == 20
    worst, kinked = check(build, params)
    assert not kinked
    assert worst <= 1e-4


def test_adam_zero_grad_no_move():
    p = param([1.0, 2.0])
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros(2)
    opt.step()
    assert p.data.tolist() == [1.0, 2.0]


def test_adam_first_step():
    p = param(0.0)
    opt = Adam([p], lr=0.1)
    p.grad = np.array(1.0)
    opt.step()
    assert p.data == pytest.approx(-0.1, abs=1e-6)
    p.grad = np.array(1.0)
    opt.step()
    assert p.data < -0.1


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    params = {"a/w": rng.normal(size=(3, 2)), "b": np.array(np.pi), "c": np.zeros(0)}
    nx.save_checkpoint(tmp_path / "c.txt", params, {"kind": "x", "dims": [3, 2]})
    meta, back = nx.load_checkpoint(tmp_path / "c.txt")
    assert meta == {"kind": "x", "dims": [3, 2]}
    for k in params:
        assert np.array_equal(params[k], back[k])


def test_checkpoint_corruption(tmp_path):
    nx.save_checkpoint(tmp_path / "c.txt", {"w": np.arange(6.0)}, {})
    text = (tmp_path / "c.txt").read_text()
    (tmp_path / "t.txt").write_text(text[: len(text) // 2])
    with pytest.raises(CorruptFileError):
        nx.load_checkpoint(tmp_path / "t.txt")
    (tmp_path / "v.txt").write_text(text.replace("v1", "v9", 1))
    with pytest.raises(CorruptFileError):
        nx.load_checkpoint(tmp_path / "v.txt")
