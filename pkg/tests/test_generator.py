import numpy as np
import pytest
import torch

from blindsr.generator import (GeneratorConfig, LiteGenerator, StarDenseBlock,
                               StarGenerator, StarRRDB, apply_dropout_mode,
                               build_generator, count_parameters, pixel_shuffle)

from conftest import small_lite_cfg, small_star_cfg


def dense_block_params(features, growth):
    def conv(cin, cout, k):
        return cin * cout * k * k + cout
    return (conv(features, growth, 3) + conv(features + growth, growth, 3)
            + conv(features + 2 * growth, growth, 3) + conv(features + 3 * growth, growth, 3)
            + conv(features + 4 * growth, features, 3) + conv(features, growth, 1))


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            GeneratorConfig(variant="mega")
        with pytest.raises(ValueError):
            GeneratorConfig(upscale=2)
        with pytest.raises(ValueError):
            GeneratorConfig(residual_scale=0.0)
        with pytest.raises(ValueError):
            GeneratorConfig(dropout_prob=1.0)

    def test_variant_class_guard(self):
        with pytest.raises(ValueError):
            StarGenerator(GeneratorConfig(variant="lite"))
        with pytest.raises(ValueError):
            LiteGenerator(GeneratorConfig(variant="star"))


class TestParameterCounts:
    def test_star_matches_analytic_count(self):
        cfg = GeneratorConfig(variant="star", base_features=64, num_blocks=23,
                              growth_channels=32)
        gen = build_generator(cfg)

        def conv(cin, cout, k):
            return cin * cout * k * k + cout

        nf, gc = 64, 32
        expected = (conv(3, nf, 3)                      # shallow feature conv
                    + 23 * 3 * dense_block_params(nf, gc)
                    + conv(nf, nf, 3) * 5               # trunk + 2 upsample + 2 tail
                    + conv(nf, 3, 3))                   # output conv
        assert count_parameters(gen) == expected

        # comparable plain RRDB generator at the same widths: no 1x1 skip
        # projections, single tail conv
        rrdb_block = (dense_block_params(nf, gc) - conv(nf, gc, 1))
        rrdb_total = (conv(3, nf, 3) + 23 * 3 * rrdb_block + conv(nf, nf, 3) * 4
                      + conv(nf, 3, 3))
        assert abs(count_parameters(gen) - rrdb_total) / rrdb_total < 0.05

    def test_lite_is_under_ten_percent_of_star(self):
        star = build_generator(GeneratorConfig(variant="star"))
        lite = build_generator(GeneratorConfig(variant="lite"))
        assert count_parameters(lite) < 0.10 * count_parameters(star)

    def test_same_seed_bit_identical(self):
        a = build_generator(small_star_cfg(), seed=9)
        b = build_generator(small_star_cfg(), seed=9)
        for (na, pa), (nb, pb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert na == nb and torch.equal(pa, pb)
        c = build_generator(small_star_cfg(), seed=10)
        assert any(not torch.equal(pa, pc) for pa, pc in
                   zip(a.state_dict().values(), c.state_dict().values()))


class TestForwardShapes:
    @pytest.mark.parametrize("make_cfg", [small_star_cfg, small_lite_cfg])
    def test_known_shapes(self, make_cfg):
        gen = build_generator(make_cfg())
        assert gen(torch.rand(1, 3, 64, 64)).shape == (1, 3, 256, 256)
        assert gen(torch.rand(2, 3, 17, 23)).shape == (2, 3, 68, 92)

    @pytest.mark.parametrize("make_cfg", [small_star_cfg, small_lite_cfg])
    def test_random_shape_contract(self, make_cfg):
        gen = build_generator(make_cfg())
        rng = np.random.default_rng(2)
        for _ in range(10):
            h, w = int(rng.integers(16, 49)), int(rng.integers(16, 49))
            out = gen(torch.rand(1, 3, h, w))
            assert out.shape == (1, 3, 4 * h, 4 * w)
            assert torch.isfinite(out).all()

    def test_rejects_wrong_channels(self):
        gen = build_generator(small_lite_cfg())
        with pytest.raises(ValueError):
            gen(torch.rand(1, 4, 16, 16))

    @pytest.mark.parametrize("make_cfg", [small_star_cfg, small_lite_cfg])
    def test_gradients_reach_every_parameter(self, make_cfg):
        gen = build_generator(make_cfg())
        out = gen(torch.rand(1, 3, 16, 16))
        loss = (out - torch.rand_like(out)).abs().mean()
        loss.backward()
        for name, p in gen.named_parameters():
            assert p.grad is not None, name
            assert torch.isfinite(p.grad).all(), name


class TestZeroWeightIdentity:
    def test_dense_block_identity_exact(self):
        block = StarDenseBlock(12, 7)
        for p in block.parameters():
            torch.nn.init.zeros_(p)
        x = torch.randn(2, 12, 11, 13)
        assert torch.equal(block(x), x)

    def test_stacked_blocks_identity(self):
        rrdb = StarRRDB(8, 4)
        for p in rrdb.parameters():
            torch.nn.init.zeros_(p)
        x = torch.randn(1, 8, 8, 8)
        for block in (rrdb.block1, rrdb.block2, rrdb.block3):
            assert torch.equal(block(x), x)


class TestPixelShuffle:
    def test_shape(self):
        assert pixel_shuffle(torch.rand(1, 48, 8, 8), 4).shape == (1, 3, 32, 32)

    def test_r1_identity(self):
        x = torch.rand(2, 5, 4, 4)
        assert torch.equal(pixel_shuffle(x, 1), x)

    def test_rejects_indivisible(self):
        with pytest.raises(ValueError):
            pixel_shuffle(torch.rand(1, 6, 4, 4), 2)

    def test_matches_index_oracle(self):
        r = 2
        x = torch.rand(1, 4, 2, 2)
        out = pixel_shuffle(x, r)
        oracle = torch.empty(1, 1, 4, 4)
        for i in range(4):
            for j in range(4):
                oracle[0, 0, i, j] = x[0, (i % r) * r + (j % r), i // r, j // r]
        assert torch.equal(out, oracle)
        # losslessness: multiset of values is preserved
        assert torch.equal(out.flatten().sort().values, x.flatten().sort().values)


class TestDropout:
    def test_prob_zero_train_eval_identical(self):
        gen = build_generator(small_lite_cfg(), seed=0)
        apply_dropout_mode(gen, enabled=True, prob=0.0)
        x = torch.rand(1, 3, 16, 16)
        gen.train()
        with torch.no_grad():
            out_train = gen(x)
        gen.eval()
        with torch.no_grad():
            out_eval = gen(x)
        assert torch.equal(out_train, out_eval)

    def test_eval_mode_deterministic(self):
        gen = build_generator(small_lite_cfg(dropout_prob=0.5), seed=0)
        gen.eval()
        x = torch.rand(1, 3, 16, 16)
        with torch.no_grad():
            assert torch.equal(gen(x), gen(x))

    def test_rejects_prob_one(self):
        gen = build_generator(small_lite_cfg(), seed=0)
        with pytest.raises(ValueError):
            apply_dropout_mode(gen, enabled=True, prob=1.0)

    def test_training_channel_drop_rate(self):
        torch.manual_seed(0)
        gen = build_generator(small_lite_cfg(), seed=0)
        apply_dropout_mode(gen, enabled=True, prob=0.5)
        gen.train()
        x = torch.rand(1, 3, 8, 8)
        dropped = total = 0
        captured = {}
        gen.dropout.register_forward_hook(
            lambda m, inp, out: captured.update(out=out.detach()))
        with torch.no_grad():
            for _ in range(1000):
                gen(x)
                out = captured["out"]
                zeroed = (out.abs().amax(dim=(0, 2, 3)) == 0)
                dropped += int(zeroed.sum())
                total += out.shape[1]
        assert abs(dropped / total - 0.5) <= 0.05


class TestDropoutModeSwitch:
    def test_disable_removes_dropout(self):
        gen = build_generator(small_star_cfg(dropout_prob=0.5), seed=0)
        apply_dropout_mode(gen, enabled=False, prob=0.5)
        gen.train()
        x = torch.rand(1, 3, 16, 16)
        with torch.no_grad():
            assert torch.equal(gen(x), gen(x))
