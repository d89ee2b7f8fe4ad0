"""Dense-core checks: init layout, activations, tape gradients vs finite
differences, Adam against a reference loop."""
import numpy as np
import pytest

from fedsynth.nn import (
    AdamState,
    LayerSpec,
    ModelParams,
    NetSpec,
    SegmentSpec,
    adam_step,
    backward,
    forward,
    gumbel_softmax,
    init_params,
    softmax,
)


def small_spec(**kwargs):
    defaults = dict(
        input_width=3,
        hidden=(LayerSpec(4, "tanh"),),
        outputs=(SegmentSpec(2, "tanh"), SegmentSpec(3, "gumbel")),
        gumbel_tau=0.7,
    )
    defaults.update(kwargs)
    return NetSpec(**defaults)


class TestSpecs:
    def test_validation(self):
        with pytest.raises(ValueError):
            LayerSpec(0, "relu")
        with pytest.raises(ValueError):
            LayerSpec(4, "softmax")
        with pytest.raises(ValueError):
            SegmentSpec(2, "relu")
        with pytest.raises(ValueError):
            small_spec(input_width=0)
        with pytest.raises(ValueError):
            small_spec(outputs=())
        with pytest.raises(ValueError):
            small_spec(gumbel_tau=0.0)

    def test_dims(self):
        spec = small_spec()
        assert spec.output_width == 5
        assert spec.layer_dims() == [(3, 4), (4, 5)]
        assert len(spec.gumbel_segments()) == 1


class TestInit:
    def test_deterministic_and_seed_sensitive(self):
        spec = small_spec()
        a, b = init_params(spec, 9), init_params(spec, 9)
        np.testing.assert_array_equal(a.flat, b.flat)
        c = init_params(spec, 10)
        assert not np.array_equal(a.flat, c.flat)

    def test_zero_biases_and_xavier_bound(self):
        spec = small_spec()
        params = init_params(spec, 3)
        for i, (fan_in, fan_out) in enumerate(spec.layer_dims()):
            assert (params.view(f"b{i}") == 0.0).all()
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            assert (np.abs(params.view(f"w{i}")) <= limit).all()

    def test_manifest_offsets_partition_flat(self):
        params = init_params(small_spec(), 0)
        expected = 0
        for name, shape, offset in params.manifest:
            assert offset == expected
            expected += int(np.prod(shape))
        assert expected == params.size

    def test_view_aliases_flat(self):
        params = init_params(small_spec(), 0)
        params.view("b0")[...] = 5.0
        _, _, offset = next(e for e in params.manifest if e[0] == "b0")
        assert (params.flat[offset : offset + 4] == 5.0).all()
        with pytest.raises(KeyError):
            params.view("w9")

    def test_copy_is_detached(self):
        params = init_params(small_spec(), 0)
        dup = params.copy()
        dup.flat[0] += 1.0
        assert params.flat[0] != dup.flat[0]


class TestActivations:
    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        y = softmax(rng.normal(size=(6, 4)))
        np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)
        assert (y > 0).all()

    def test_softmax_stable_for_huge_logits(self):
        y = softmax(np.array([[1e4, 1e4 + 1.0]]))
        assert np.isfinite(y).all()
        np.testing.assert_allclose(y.sum(), 1.0, atol=1e-12)

    def test_gumbel_without_noise_is_tempered_softmax(self):
        z = np.array([[0.5, -1.0, 2.0]])
        np.testing.assert_allclose(
            gumbel_softmax(z, 0.5), softmax(z / 0.5), atol=1e-15
        )

    def test_gumbel_noise_reuse_is_deterministic(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=(5, 3))
        noise = rng.gumbel(size=(5, 3))
        np.testing.assert_array_equal(
            gumbel_softmax(z, 0.3, noise=noise), gumbel_softmax(z, 0.3, noise=noise)
        )

    def test_gumbel_rejects_bad_args(self):
        z = np.zeros((2, 3))
        with pytest.raises(ValueError):
            gumbel_softmax(z, 0.0)
        with pytest.raises(ValueError):
            gumbel_softmax(z, 1.0, noise=np.zeros((2, 2)))


class TestForward:
    def test_shapes_and_segment_ranges(self):
        spec = small_spec()
        params = init_params(spec, 1)
        batch = np.random.default_rng(2).normal(size=(8, 3))
        out, tape = forward(params, spec, batch)
        assert out.shape == (8, 5)
        assert (np.abs(out[:, :2]) <= 1.0).all()
        np.testing.assert_allclose(out[:, 2:].sum(axis=-1), 1.0, atol=1e-12)
        assert tape.batch_size == 8

    def test_straight_through_emits_one_hot_with_soft_tape(self):
        spec = small_spec()
        params = init_params(spec, 1)
        rng = np.random.default_rng(3)
        batch = rng.normal(size=(16, 3))
        noise = [rng.gumbel(size=(16, 3))]
        out, tape = forward(params, spec, batch, gumbel_noise=noise)
        hard = out[:, 2:]
        assert set(np.unique(hard)) <= {0.0, 1.0}
        np.testing.assert_array_equal(hard.sum(axis=-1), np.ones(16))
        soft = tape.segment_outputs[1]
        assert not np.array_equal(hard, soft)
        np.testing.assert_array_equal(hard.argmax(axis=-1), soft.argmax(axis=-1))

    def test_soft_mode_emits_the_sample_itself(self):
        spec = small_spec(straight_through=False)
        params = init_params(spec, 1)
        rng = np.random.default_rng(3)
        batch = rng.normal(size=(4, 3))
        noise = [rng.gumbel(size=(4, 3))]
        out, tape = forward(params, spec, batch, gumbel_noise=noise)
        np.testing.assert_array_equal(out[:, 2:], tape.segment_outputs[1])

    def test_straight_through_mode_shares_the_backward_path(self):
        # gradients come from the soft sample either way
        rng = np.random.default_rng(5)
        batch = rng.normal(size=(6, 3))
        noise = [rng.gumbel(size=(6, 3))]
        upstream = rng.normal(size=(6, 5))
        grads = {}
        for st in (True, False):
            spec = small_spec(straight_through=st)
            params = init_params(spec, 7)
            _, tape = forward(params, spec, batch, gumbel_noise=noise)
            grads[st], _ = backward(tape, upstream)
        np.testing.assert_array_equal(grads[True], grads[False])

    def test_rejects_bad_batch_and_noise(self):
        spec = small_spec()
        params = init_params(spec, 1)
        with pytest.raises(ValueError):
            forward(params, spec, np.zeros((4, 2)))
        with pytest.raises(ValueError):
            forward(params, spec, np.zeros((4, 3)), gumbel_noise=[])


def numeric_param_grad(params, spec, batch, noise, upstream, eps=1e-6):
    grad = np.zeros_like(params.flat)
    for i in range(params.size):
        for sign, slot in ((1.0, 0), (-1.0, 1)):
            shifted = params.copy()
            shifted.flat[i] += sign * eps
            out, _ = forward(shifted, spec, batch, gumbel_noise=noise)
            if slot == 0:
                hi = float((out * upstream).sum())
            else:
                lo = float((out * upstream).sum())
        grad[i] = (hi - lo) / (2.0 * eps)
    return grad


FD_SPECS = [
    NetSpec(2, (LayerSpec(3, "tanh"),), (SegmentSpec(2, "identity"),)),
    NetSpec(3, (LayerSpec(4, "leaky_relu"),), (SegmentSpec(2, "tanh"),)),
    NetSpec(2, (LayerSpec(3, "relu"), LayerSpec(3, "tanh")), (SegmentSpec(3, "softmax"),)),
    NetSpec(
        3,
        (LayerSpec(4, "tanh"),),
        (SegmentSpec(1, "tanh"), SegmentSpec(3, "gumbel")),
        gumbel_tau=0.7,
        straight_through=False,
    ),
    NetSpec(2, (), (SegmentSpec(2, "identity"), SegmentSpec(2, "softmax"))),
]


class TestBackward:
    @pytest.mark.parametrize("case", range(len(FD_SPECS)))
    def test_matches_finite_differences(self, case):
        spec = FD_SPECS[case]
        rng = np.random.default_rng(100 + case)
        params = init_params(spec, 200 + case)
        batch = rng.normal(size=(5, spec.input_width))
        noise = None
        if spec.gumbel_segments():
            noise = [rng.gumbel(size=(5, s.width)) for s in spec.gumbel_segments()]
        upstream = rng.normal(size=(5, spec.output_width))
        _, tape = forward(params, spec, batch, gumbel_noise=noise)
        analytic, _ = backward(tape, upstream)
        numeric = numeric_param_grad(params, spec, batch, noise, upstream)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)

    def test_input_gradient_matches_finite_differences(self):
        spec = FD_SPECS[1]
        rng = np.random.default_rng(9)
        params = init_params(spec, 9)
        batch = rng.normal(size=(3, spec.input_width))
        upstream = rng.normal(size=(3, spec.output_width))
        _, tape = forward(params, spec, batch)
        _, dx = backward(tape, upstream)
        eps = 1e-6
        numeric = np.zeros_like(batch)
        for r in range(batch.shape[0]):
            for c in range(batch.shape[1]):
                hi, lo = batch.copy(), batch.copy()
                hi[r, c] += eps
                lo[r, c] -= eps
                f_hi = float((forward(params, spec, hi)[0] * upstream).sum())
                f_lo = float((forward(params, spec, lo)[0] * upstream).sum())
                numeric[r, c] = (f_hi - f_lo) / (2.0 * eps)
        np.testing.assert_allclose(dx, numeric, rtol=1e-6, atol=1e-8)

    def test_rejects_upstream_shape_mismatch(self):
        spec = small_spec()
        params = init_params(spec, 0)
        _, tape = forward(params, spec, np.zeros((2, 3)))
        with pytest.raises(ValueError):
            backward(tape, np.zeros((2, 4)))


def adam_oracle(theta0, grad_seq, lr, b1, b2, eps):
    m = np.zeros_like(theta0)
    v = np.zeros_like(theta0)
    theta = theta0.copy()
    for t, g in enumerate(grad_seq, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


class TestAdam:
    def test_matches_reference_loop(self):
        rng = np.random.default_rng(55)
        theta0 = rng.normal(size=20)
        grad_seq = [rng.normal(size=20) for _ in range(7)]
        params = ModelParams(theta0.copy(), (("w0", (20,), 0),))
        state = AdamState.zeros(20)
        for g in grad_seq:
            params, state = adam_step(
                params, g, state, lr=2e-4, beta1=0.5, beta2=0.9, eps=1e-8
            )
        expected = adam_oracle(theta0, grad_seq, 2e-4, 0.5, 0.9, 1e-8)
        np.testing.assert_allclose(params.flat, expected, atol=1e-15)
        assert state.t == 7

    def test_updates_in_place(self):
        params = ModelParams(np.ones(4), (("w0", (4,), 0),))
        flat_ref = params.flat
        state = AdamState.zeros(4)
        adam_step(params, np.full(4, 0.5), state, lr=0.1)
        assert params.flat is flat_ref
        assert not (params.flat == 1.0).all()

    def test_rejects_shape_mismatch(self):
        params = ModelParams(np.ones(4), (("w0", (4,), 0),))
        with pytest.raises(ValueError):
            adam_step(params, np.ones(3), AdamState.zeros(4), lr=0.1)
