import numpy as np
import pytest

from splitformer.factory import random_block
from splitformer.reference import (
    std_attention,
    std_conv,
    std_encoder_block,
    std_ffn,
    std_layer_norm,
    to_std_params,
)


class TestStdPieces:
    def test_layer_norm_hand(self):
        out = std_layer_norm([[1.0, 3.0]], 0.0, 1.0)
        assert np.array_equal(out, [[-1.0, 1.0]])

    def test_layer_norm_degenerate_row(self):
        assert np.array_equal(std_layer_norm([[2.0, 2.0]], 0.5, 1.0), [[0.5, 0.5]])

    def test_attention_uniform(self):
        z = np.zeros((2, 2))
        out = std_attention([[1.0, 0.0], [3.0, 2.0]], z, z, np.eye(2), 2)
        assert np.array_equal(out, [[2.0, 1.0], [2.0, 1.0]])

    def test_ffn_relu_and_bias(self):
        out = std_ffn([[1.0, -1.0], [0.0, 0.0]], [(np.eye(2), np.array([0.0, 2.0]))])
        assert np.array_equal(out, [[1.0, 0.0], [2.0, 2.0]])

    def test_conv_delta(self):
        k = [[0, 0, 0], [0, 1, 0], [0, 0, 0]]
        img = [[1.0, 2.0], [3.0, 4.0]]
        assert std_conv(img, k) == img

    def test_conv_ones(self):
        k = [[1.0] * 3 for _ in range(3)]
        out = std_conv([[1.0, 1.0], [1.0, 1.0]], k)
        assert out == [[4.0, 4.0], [4.0, 4.0]]


class TestMapping:
    def test_identity_offset(self, rng):
        blk = random_block(rng, 3, 4, J=2)
        p = to_std_params(blk)
        np.testing.assert_array_equal(p.ffn_weights[0][0], np.eye(4) + blk.ffn[0].w)
        assert p.ln1 == (blk.norm1.sigma1, blk.norm1.sigma2)

    def test_mapping_does_not_alias(self, rng):
        blk = random_block(rng, 3, 4, J=1)
        p = to_std_params(blk)
        p.w_q[0, 0] += 1.0
        assert p.w_q[0, 0] != blk.attn.w_q[0, 0]

    def test_unknown_skip_mode(self, rng):
        blk = random_block(rng, 2, 3, J=1)
        with pytest.raises(ValueError):
            std_encoder_block(rng.standard_normal((2, 3)), to_std_params(blk), skip_mode="concat")
