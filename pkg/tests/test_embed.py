"""Encoders and temporal aggregators."""

import numpy as np
import pytest
from scipy import signal

from fewshot_video import diffcore as dc
from fewshot_video import embed as em
from fewshot_video.dataio import write_fsvf


def rng_for(seed):
    return np.random.default_rng(seed)


def features(data, form=em.FLAT, stream="rgb"):
    return em.StreamFeatures(form=form, data=dc.Tensor(data), stream=stream)


# ---------------------------------------------------------------------------
# encoders

class TestToyEncoder:
    def _encoder(self, form=em.FLAT, flat_dim=16, channels=8, seed=0):
        cfg = em.EncoderConfig(mode="toy", form=form, flat_dim=flat_dim,
                               spatial_channels=channels)
        return em.ToyEncoder(cfg, rng_for(seed))

    def test_flat_output_shape(self):
        enc = self._encoder()
        out = enc(dc.Tensor(rng_for(1).random((4, 3, 32, 32))))
        assert out.shape == (4, 16)

    def test_spatial_output_shape(self):
        enc = self._encoder(form=em.SPATIAL)
        out = enc(dc.Tensor(rng_for(2).random((2, 3, 32, 32))))
        assert out.shape == (2, 8, 6, 6)

    def test_single_frame_round_trip(self):
        enc = self._encoder()
        frame = dc.Tensor(rng_for(3).random((3, 32, 32)))
        single = enc(frame)
        assert single.shape == (16,)

    def test_determinism(self):
        enc = self._encoder()
        frame = dc.Tensor(rng_for(4).random((3, 32, 32)))
        a = enc(frame).data
        b = enc(frame).data
        assert np.array_equal(a, b)

    def test_wrong_input_dims(self):
        enc = self._encoder()
        with pytest.raises(dc.ShapeError):
            enc(dc.Tensor(np.zeros((3, 16, 16))))

    def test_gradient_check(self):
        cfg = em.EncoderConfig(mode="toy", form=em.FLAT, flat_dim=3, spatial_channels=4)
        enc = em.ToyEncoder(cfg, rng_for(5))
        params = dc.Parameters()
        for name, t in enc.params().items():
            params.add(name, t)
        frame = dc.Tensor(rng_for(6).random((3, 32, 32)).astype(np.float32))
        probe = dc.Tensor(rng_for(7).normal(size=(3,)))
        report = dc.grad_check(lambda: dc.sum_(enc(frame) * probe), params)
        assert report.passed, str(report)


class TestSpatialAdapter:
    def test_paper_dims(self):
        adapter = em.SpatialAdapter(rng_for(8), in_channels=512, out_channels=256)
        out = adapter(dc.Tensor(rng_for(9).random((512, 14, 14)).astype(np.float32)))
        assert out.shape == (256, 6, 6)

    def test_zero_input_gives_pooled_bias(self):
        adapter = em.SpatialAdapter(rng_for(10), in_channels=2, out_channels=3)
        adapter.conv.bias.data[:] = np.array([1.0, -2.0, 0.5], dtype=np.float32)
        out = adapter(dc.Tensor(np.zeros((2, 14, 14), dtype=np.float32)))
        for c, b in enumerate([1.0, -2.0, 0.5]):
            np.testing.assert_allclose(out.data[c], b, atol=1e-6)

    def test_wrong_input_dims(self):
        adapter = em.SpatialAdapter(rng_for(11), in_channels=2, out_channels=2)
        with pytest.raises(dc.ShapeError):
            adapter(dc.Tensor(np.zeros((2, 12, 12))))

    def test_gradient_check(self):
        adapter = em.SpatialAdapter(rng_for(12), in_channels=2, out_channels=2)
        params = dc.Parameters()
        for name, t in adapter.params().items():
            params.add(name, t)
        maps = dc.Tensor(rng_for(13).random((2, 14, 14)).astype(np.float32))
        probe = dc.Tensor(rng_for(14).normal(size=(2, 6, 6)))
        report = dc.grad_check(lambda: dc.sum_(adapter(maps) * probe), params)
        assert report.passed, str(report)


class TestFlattenProject:
    def test_flatten_length_is_9216(self):
        proj = em.FlattenProject(rng_for(15))
        assert proj.linear.weight.shape == (9216, 512)
        out = proj(dc.Tensor(rng_for(16).random((256, 6, 6)).astype(np.float32)))
        assert out.shape == (512,)

    def test_zero_maps_give_bias(self):
        proj = em.FlattenProject(rng_for(17), in_channels=3, side=6, out_dim=4)
        proj.linear.bias.data[:] = np.array([0.1, 0.2, 0.3, 0.4], dtype=np.float32)
        out = proj(dc.Tensor(np.zeros((3, 6, 6), dtype=np.float32)))
        np.testing.assert_allclose(out.data, [0.1, 0.2, 0.3, 0.4], atol=1e-7)

    def test_matches_explicit_matmul(self):
        proj = em.FlattenProject(rng_for(18), in_channels=2, side=6, out_dim=5)
        maps = rng_for(19).random((2, 6, 6)).astype(np.float32)
        out = proj(dc.Tensor(maps))
        expected = maps.reshape(-1) @ proj.linear.weight.data + proj.linear.bias.data
        np.testing.assert_allclose(out.data, expected, atol=1e-5)


# ---------------------------------------------------------------------------
# aggregators

class TestMeanAggregator:
    def test_single_frame_is_identity(self):
        frame = rng_for(20).random((1, 6)).astype(np.float32)
        out = em.MeanAggregator().aggregate(features(frame))
        np.testing.assert_allclose(out.data.data, frame[0], atol=1e-7)

    def test_two_frame_mean(self):
        out = em.MeanAggregator().aggregate(
            features(np.array([[1.0, 3.0], [3.0, 5.0]], dtype=np.float32)))
        np.testing.assert_allclose(out.data.data, [2.0, 4.0], atol=1e-7)

    def test_default_dims_concat_to_1024(self):
        agg = em.MeanAggregator()
        rgb = agg.aggregate(features(np.zeros((3, 512), dtype=np.float32), stream="rgb"))
        flw = agg.aggregate(features(np.zeros((5, 512), dtype=np.float32), stream="flow"))
        merged = em.concat_streams(rgb, flw)
        assert merged.data.shape == (1024,)

    def test_permutation_invariance(self):
        data = rng_for(21).random((6, 8)).astype(np.float32)
        out1 = em.MeanAggregator().aggregate(features(data)).data.data
        out2 = em.MeanAggregator().aggregate(features(data[::-1].copy())).data.data
        np.testing.assert_allclose(out1, out2, atol=1e-6)

    def test_spatial_form_preserved(self):
        data = rng_for(22).random((4, 3, 6, 6)).astype(np.float32)
        out = em.MeanAggregator().aggregate(features(data, form=em.SPATIAL))
        assert out.form == em.SPATIAL
        np.testing.assert_allclose(out.data.data, data.mean(axis=0), atol=1e-6)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_oracle(x_seq, wx, wh, b):
    """Plain numpy evaluation of the LSTM recurrence, hidden states averaged."""
    hidden = wh.shape[0]
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    collected = []
    for x in x_seq:
        gates = x @ wx + h @ wh + b
        i = sigmoid(gates[:hidden])
        f = sigmoid(gates[hidden:2 * hidden])
        g = np.tanh(gates[2 * hidden:3 * hidden])
        o = sigmoid(gates[3 * hidden:])
        c = f * c + i * g
        h = o * np.tanh(c)
        collected.append(h)
    return np.mean(collected, axis=0)


class TestLstmAggregator:
    def test_default_hidden_size_is_512(self):
        agg = em.LstmAggregator(rng_for(23), input_dim=8)
        assert agg.hidden_dim == 512
        assert agg.wh.shape == (512, 2048)

    def test_single_step_equals_h1(self):
        agg = em.LstmAggregator(rng_for(24), input_dim=4, hidden_dim=6)
        x = rng_for(25).random((1, 4)).astype(np.float32)
        out = agg.aggregate(features(x)).data.data
        oracle = lstm_oracle(x.astype(np.float64), agg.wx.data.astype(np.float64),
                             agg.wh.data.astype(np.float64), agg.bias.data.astype(np.float64))
        np.testing.assert_allclose(out, oracle, atol=1e-5)

    def test_zero_weights_zero_output(self):
        agg = em.LstmAggregator(rng_for(26), input_dim=4, hidden_dim=6)
        for t in (agg.wx, agg.wh, agg.bias):
            t.data[:] = 0.0
        x = rng_for(27).random((5, 4)).astype(np.float32)
        out = agg.aggregate(features(x)).data.data
        np.testing.assert_allclose(out, 0.0, atol=1e-7)

    def test_matches_recurrence_oracle(self):
        agg = em.LstmAggregator(rng_for(28), input_dim=5, hidden_dim=7)
        x = rng_for(29).normal(size=(6, 5)).astype(np.float32)
        out = agg.aggregate(features(x)).data.data
        oracle = lstm_oracle(x.astype(np.float64), agg.wx.data.astype(np.float64),
                             agg.wh.data.astype(np.float64), agg.bias.data.astype(np.float64))
        np.testing.assert_allclose(out, oracle, atol=1e-5)

    def test_order_sensitivity_witness(self):
        # Forward vs reversed frame order must differ for generic weights.
        agg = em.LstmAggregator(rng_for(30), input_dim=5, hidden_dim=7)
        x = rng_for(31).normal(size=(6, 5)).astype(np.float32)
        fwd = agg.aggregate(features(x)).data.data
        rev = agg.aggregate(features(x[::-1].copy())).data.data
        assert not np.allclose(fwd, rev, atol=1e-5)

    def test_rejects_spatial(self):
        agg = em.LstmAggregator(rng_for(32), input_dim=5, hidden_dim=4)
        with pytest.raises(em.FormError):
            agg.aggregate(features(np.zeros((2, 1, 6, 6), dtype=np.float32), form=em.SPATIAL))

    def test_gradient_check(self):
        agg = em.LstmAggregator(rng_for(33), input_dim=3, hidden_dim=3)
        params = dc.Parameters()
        for name, t in agg.params().items():
            params.add(name, t)
        x = rng_for(34).normal(size=(3, 3)).astype(np.float32)
        probe = dc.Tensor(rng_for(35).normal(size=(3,)))
        report = dc.grad_check(
            lambda: dc.sum_(agg.aggregate(features(x)).data * probe), params)
        assert report.passed, str(report)


def convlstm_oracle(x_seq, wx, wh, b):
    """Numpy/scipy evaluation of the convolutional LSTM recurrence."""
    channels = x_seq.shape[1]

    def gate_conv(inp, kernels):
        out = np.zeros((kernels.shape[0],) + inp.shape[1:])
        for o in range(kernels.shape[0]):
            for c in range(inp.shape[0]):
                out[o] += signal.correlate2d(inp[c], kernels[o, c], mode="same")
        return out

    h = np.zeros_like(x_seq[0])
    c = np.zeros_like(x_seq[0])
    collected = []
    for x in x_seq:
        gates = gate_conv(x, wx) + gate_conv(h, wh) + b[:, None, None]
        i = sigmoid(gates[:channels])
        f = sigmoid(gates[channels:2 * channels])
        g = np.tanh(gates[2 * channels:3 * channels])
        o = sigmoid(gates[3 * channels:])
        c = f * c + i * g
        h = o * np.tanh(c)
        collected.append(h)
    return np.mean(collected, axis=0)


class TestConvLstmAggregator:
    def test_spatial_dims_preserved(self):
        agg = em.ConvLstmAggregator(rng_for(36), channels=3)
        x = rng_for(37).random((4, 3, 6, 6)).astype(np.float32)
        out = agg.aggregate(features(x, form=em.SPATIAL))
        assert out.form == em.SPATIAL
        assert out.data.shape == (3, 6, 6)

    def test_zero_gates_zero_output(self):
        agg = em.ConvLstmAggregator(rng_for(38), channels=2)
        for t in (agg.wx, agg.wh, agg.bias):
            t.data[:] = 0.0
        x = rng_for(39).random((3, 2, 6, 6)).astype(np.float32)
        out = agg.aggregate(features(x, form=em.SPATIAL)).data.data
        np.testing.assert_allclose(out, 0.0, atol=1e-7)

    def test_matches_recurrence_oracle(self):
        agg = em.ConvLstmAggregator(rng_for(40), channels=2)
        x = rng_for(41).normal(size=(3, 2, 5, 5)).astype(np.float32)
        out = agg.aggregate(features(x, form=em.SPATIAL)).data.data
        oracle = convlstm_oracle(x.astype(np.float64), agg.wx.data.astype(np.float64),
                                 agg.wh.data.astype(np.float64),
                                 agg.bias.data.astype(np.float64))
        np.testing.assert_allclose(out, oracle, atol=1e-4)

    def test_single_step_equals_h1(self):
        agg = em.ConvLstmAggregator(rng_for(42), channels=2)
        x = rng_for(43).random((1, 2, 6, 6)).astype(np.float32)
        out = agg.aggregate(features(x, form=em.SPATIAL)).data.data
        oracle = convlstm_oracle(x.astype(np.float64), agg.wx.data.astype(np.float64),
                                 agg.wh.data.astype(np.float64),
                                 agg.bias.data.astype(np.float64))
        np.testing.assert_allclose(out, oracle, atol=1e-4)


class TestConv3dAggregator:
    def test_paper_dims_flat_target(self):
        agg = em.Conv3dAggregator(rng_for(44), in_channels=4, out_channels=512,
                                  target_form=em.FLAT)
        x = rng_for(45).random((2, 4, 6, 6)).astype(np.float32)
        out = agg.aggregate(features(x, form=em.SPATIAL))
        assert out.form == em.FLAT
        assert out.data.shape == (512,)

    def test_paper_dims_spatial_target(self):
        agg = em.Conv3dAggregator(rng_for(46), in_channels=4, out_channels=512,
                                  target_form=em.SPATIAL)
        x = rng_for(47).random((2, 4, 8, 8)).astype(np.float32)
        out = agg.aggregate(features(x, form=em.SPATIAL))
        assert out.form == em.SPATIAL
        assert out.data.shape == (512, 6, 6)

    def test_center_tap_identity_single_frame(self):
        agg = em.Conv3dAggregator(rng_for(48), in_channels=2, out_channels=2,
                                  target_form=em.SPATIAL)
        for w in (agg.w1, agg.w2):
            w.data[:] = 0.0
            for c in range(2):
                w.data[c, c, 1, 1, 1] = 1.0
        for b in (agg.b1, agg.b2):
            b.data[:] = 0.0
        x = rng_for(49).random((1, 2, 6, 6)).astype(np.float32)  # non-negative
        out = agg.aggregate(features(x, form=em.SPATIAL)).data.data
        np.testing.assert_allclose(out, x[0], atol=1e-6)

    def test_rejects_flat(self):
        agg = em.Conv3dAggregator(rng_for(50), in_channels=2, out_channels=4)
        with pytest.raises(em.FormError):
            agg.aggregate(features(np.zeros((2, 8), dtype=np.float32)))


class TestConcatStreams:
    def test_flat_concat(self):
        a = em.VideoEmbedding(em.FLAT, dc.Tensor([1.0, 2.0]))
        b = em.VideoEmbedding(em.FLAT, dc.Tensor([3.0]))
        out = em.concat_streams(a, b)
        np.testing.assert_allclose(out.data.data, [1.0, 2.0, 3.0])

    def test_channel_concat(self):
        a = em.VideoEmbedding(em.SPATIAL, dc.Tensor(np.zeros((2, 6, 6))))
        b = em.VideoEmbedding(em.SPATIAL, dc.Tensor(np.ones((3, 6, 6))))
        out = em.concat_streams(a, b)
        assert out.data.shape == (5, 6, 6)

    def test_rgb_block_precedes_flow(self):
        rgb = em.VideoEmbedding(em.FLAT, dc.Tensor([1.0, 1.0]))
        flow = em.VideoEmbedding(em.FLAT, dc.Tensor([2.0, 2.0]))
        out = em.concat_streams(rgb, flow)
        np.testing.assert_allclose(out.data.data, [1.0, 1.0, 2.0, 2.0])

    def test_form_mismatch(self):
        a = em.VideoEmbedding(em.FLAT, dc.Tensor([1.0]))
        b = em.VideoEmbedding(em.SPATIAL, dc.Tensor(np.zeros((1, 6, 6))))
        with pytest.raises(em.FormError):
            em.concat_streams(a, b)


class TestLoadPrecomputed:
    def test_form_from_header_rank(self, tmp_path):
        flat = tmp_path / "flat.fsvf"
        spatial = tmp_path / "spatial.fsvf"
        write_fsvf(flat, np.zeros((4, 16), dtype=np.float32))
        write_fsvf(spatial, np.zeros((4, 2, 6, 6), dtype=np.float32))
        assert em.load_precomputed(flat).form == em.FLAT
        assert em.load_precomputed(spatial, stream="flow").form == em.SPATIAL

    def test_round_trip_bitwise(self, tmp_path):
        arr = rng_for(51).normal(size=(3, 8)).astype(np.float32)
        path = tmp_path / "x.fsvf"
        write_fsvf(path, arr)
        feats = em.load_precomputed(path)
        assert np.array_equal(feats.data.data, arr)

    def test_dim_mismatch(self, tmp_path):
        path = tmp_path / "y.fsvf"
        write_fsvf(path, np.zeros((3, 8), dtype=np.float32))
        with pytest.raises(ValueError):
            em.load_precomputed(path, expected_dim=16)
