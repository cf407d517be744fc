"""
Channel groups, causal masks and the nested model's forward paths
"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnnet_cli.commands.verify_commands import fresh_model
from dnnet_cli.core.config import ArchDescriptor
from dnnet_cli.core.errors import ConfigError, FrozenModelError, ShapeError
from dnnet_cli.model.groups import GroupSpec, build_mask, masked_position_count, nearest_valid_widths
from dnnet_cli.model.nested import build_model
from dnnet_cli.model.plan import NetworkPlan
from dnnet_cli.numerics import ops
from dnnet_cli.numerics.counter import OpCounter
from dnnet_cli.numerics.rng import Rng


def reference_logits(model, x):
    """Plain residual network over the effective (masked) weights, eval mode, float64"""

    def conv(h, layer):
        w = layer.kernel.effective().astype(np.float64)
        k, stride = w.shape[2], layer.kernel.stride
        pad = k // 2
        hp = np.pad(h, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        ho = (h.shape[2] + 2 * pad - k) // stride + 1
        wo = (h.shape[3] + 2 * pad - k) // stride + 1
        out = np.zeros((h.shape[0], w.shape[0], ho, wo))
        for kh in range(k):
            for kw in range(k):
                window = hp[:, :, kh:kh + stride * (ho - 1) + 1:stride, kw:kw + stride * (wo - 1) + 1:stride]
                out += np.einsum("oi,bihw->bohw", w[:, :, kh, kw], window)
        return out

    def bn(h, norm):
        scale = norm.gamma.data / np.sqrt(norm.running_var.astype(np.float64) + norm.eps)
        return (h - norm.running_mean[None, :, None, None]) * scale[None, :, None, None] \
            + norm.beta.data[None, :, None, None]

    def relu(a):
        return np.maximum(a, 0)

    h = relu(bn(conv(x.astype(np.float64), model.stem), model.stem_bn))
    for block in model.blocks:
        a = relu(bn(conv(h, block.conv1), block.bn1))
        a = bn(conv(a, block.conv2), block.bn2)
        s = h if block.shortcut is None else bn(conv(h, block.shortcut), block.bn_shortcut)
        h = relu(a + s)
    head = model.heads[-1]
    return h.mean(axis=(2, 3)) @ head.weight.data.T.astype(np.float64) + head.bias.data


# ---------------------------------------------------------------------------
# Groups and masks
# ---------------------------------------------------------------------------

class TestMasks:
    def test_single_group_is_dense(self):
        assert build_mask((4,), (6,), 3).all()

    def test_one_channel_per_group_is_lower_triangular(self):
        mask = build_mask((1, 2, 3, 4), (1, 2, 3, 4), 1)[:, :, 0, 0]
        assert np.array_equal(mask, np.tril(np.ones((4, 4))))
        assert mask.sum() == 10

    def test_uneven_stage_widths(self):
        # 4 inputs in groups of 2, 6 outputs in groups of 3
        mask = build_mask((2, 4), (3, 6), 1)
        assert mask.sum() == 3 * 2 + 3 * 4
        assert mask.size == 24

    def test_group_count_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            build_mask((2, 4), (2, 4, 6), 3)

    @given(
        in_sizes=st.lists(st.integers(1, 3), min_size=1, max_size=4),
        out_sizes=st.lists(st.integers(1, 3), min_size=4, max_size=4),
        k=st.sampled_from([1, 3]),
    )
    def test_closed_form_count_matches_enumeration(self, in_sizes, out_sizes, k):
        in_bounds = tuple(np.cumsum(in_sizes))
        out_bounds = tuple(np.cumsum(out_sizes[:len(in_sizes)]))
        mask = build_mask(in_bounds, out_bounds, k)
        for g in range(1, len(in_bounds) + 1):
            enumerated = int(mask[:out_bounds[g - 1], :in_bounds[g - 1]].sum())
            assert masked_position_count(in_bounds, out_bounds, k, g) == enumerated


class TestGroupSpec:
    def test_proportional_boundaries(self):
        spec = GroupSpec.proportional([8, 16], 4)
        assert spec.boundaries == ((2, 4, 6, 8), (4, 8, 12, 16))
        assert spec.retained(1, 3) == 12
        assert spec.group_of(0, 0) == 1
        assert spec.group_of(2, 0) == 2

    def test_indivisible_width_suggests_nearest(self):
        assert nearest_valid_widths(10, 4) == [8, 12]
        with pytest.raises(ConfigError, match=r"10 -> \[8, 12\]"):
            GroupSpec.proportional([10], 4)

    def test_every_stage_needs_the_same_group_count(self):
        with pytest.raises(ConfigError):
            GroupSpec(2, ((4, 8), (4, 8, 12)))

    def test_boundaries_strictly_increasing(self):
        with pytest.raises(ConfigError):
            GroupSpec(2, ((4, 4),))


# ---------------------------------------------------------------------------
# Descriptor and construction
# ---------------------------------------------------------------------------

class TestArchDescriptor:
    def test_short_keys(self):
        arch = ArchDescriptor.from_dict({"stages": [8], "blocks": [2], "C": 4, "N": 5})
        assert arch.groups == 4
        assert arch.classes == 5

    @pytest.mark.parametrize("overrides", [
        {"classes": 1},
        {"kernel_size": 2},
        {"stages": [8, 16]},
        {"head_sites": [1]},
        {"input_grouping": "causal", "in_channels": 3},
        {"precision": "float16"},
        {"unknown": 1},
    ])
    def test_invalid_descriptors_rejected(self, overrides):
        data = {"stages": [8], "blocks": [2], "groups": 2, "classes": 3}
        data.update(overrides)
        with pytest.raises(ConfigError):
            ArchDescriptor.from_dict(data)

    def test_yaml_round_trip(self, tmp_path, toy4_arch):
        path = tmp_path / "arch.yaml"
        toy4_arch.save(path)
        assert ArchDescriptor.load(path) == toy4_arch
        assert ArchDescriptor.resolve(str(path)) == toy4_arch

    def test_unknown_preset_lists_available(self):
        with pytest.raises(ConfigError, match="toy4"):
            ArchDescriptor.preset("nope")

    def test_resnet32_preset_has_the_full_grid(self):
        plan = NetworkPlan.build(ArchDescriptor.preset("resnet32"))
        assert len(plan.blocks) == 15
        assert (plan.L, plan.C) == (16, 16)
        assert plan.sites[0] == 0


class TestBuildModel:
    def test_toy_construction_arithmetic(self, toy_arch):
        model = build_model(toy_arch)
        assert len(model.blocks) == 2
        assert (model.L, model.C) == (2, 2)
        assert len(list(model.iter_heads())) == 4

    def test_projection_only_at_stage_transition(self, toy4_arch):
        model = build_model(toy4_arch)
        assert [b.shortcut is not None for b in model.blocks] == [False, False, True, False]
        assert model.blocks[2].conv1.kernel.stride == 2

    def test_init_is_finite_and_mask_consistent(self, toy4_arch):
        model = build_model(toy4_arch)
        for p in model.parameters():
            assert np.isfinite(p.data).all()
        for layer in model.causal_layers():
            assert not layer.weight.data[~layer.kernel.mask].any()

    def test_shared_input_stem_is_dense(self, toy_arch):
        assert build_model(toy_arch).stem.kernel.mask.all()

    def test_indivisible_widths_rejected(self):
        with pytest.raises(ConfigError, match="nearest valid widths"):
            build_model(ArchDescriptor(stages=[10], blocks=[1], groups=4))

    def test_same_seed_same_parameters(self, toy_arch):
        a, b = build_model(toy_arch), build_model(toy_arch)
        for name, value in a.state_dict().items():
            assert np.array_equal(value, b.state_dict()[name])

    def test_stem_head_site(self):
        arch = ArchDescriptor(stages=[8], blocks=[2], groups=2, head_sites="stem+blocks")
        model = fresh_model(arch)
        x = Rng(1).uniform((3, 1, 8, 8), dtype=np.float32)
        grid = model.forward_grid(x)
        assert grid.values.shape == (3, 2, 3, 3)
        assert np.array_equal(model.forward_head(x, 1, 2), grid.head(1, 2))

    def test_explicit_site_list(self):
        model = build_model(ArchDescriptor(stages=[8], blocks=[3], groups=2, head_sites=[1, 3]))
        assert model.L == 2
        assert [model.layer_group_of_block(b) for b in range(4)] == [1, 1, 2, 2]


# ---------------------------------------------------------------------------
# Forward paths
# ---------------------------------------------------------------------------

class TestForward:
    def test_head_matches_grid_everywhere(self, toy4_model, images):
        x = images(toy4_model, 6)
        grid = toy4_model.forward_grid(x)
        for l, c in toy4_model.iter_heads():
            assert np.array_equal(toy4_model.forward_head(x, l, c), grid.head(l, c)), (l, c)

    def test_smallest_head_reads_only_its_channels(self, toy4_model, images):
        counter = OpCounter()
        toy4_model.forward_head(images(toy4_model, 1), 1, 1, counter)
        assert counter.channels_read == {"stem.conv": 1, "blocks.0.conv1": 2, "blocks.0.conv2": 2}

    def test_head_sharing_is_a_partial_sum(self, toy4_model):
        head = toy4_model.heads[0]
        features = Rng(2).normal((5, head.bounds[-1]), dtype=np.float32)
        out = ops.cumulative_logits_raw(features, head.weight.data, head.bias.data, head.bounds)
        for g in range(1, len(head.bounds)):
            part = np.zeros_like(out[0])
            for ch in range(head.bounds[g - 1], head.bounds[g]):
                part += features[:, ch, None] * head.weight.data[None, :, ch]
            assert np.array_equal(out[g], out[g - 1] + part)

    def test_full_head_matches_plain_reference(self, toy_model, images):
        x = images(toy_model, 4)
        expected = reference_logits(toy_model, x)
        np.testing.assert_allclose(toy_model.forward_grid(x).head(2, 2), expected, atol=1e-4)

    def test_single_group_model_is_an_ordinary_resnet(self):
        arch = ArchDescriptor(stages=[4], blocks=[1], groups=1, classes=3, head_sites=[1], precision="float64")
        model = fresh_model(arch)
        x = Rng(5).uniform((4, 1, 8, 8))
        grid = model.forward_grid(x)
        assert grid.values.shape == (1, 1, 4, 3)
        np.testing.assert_allclose(grid.head(1, 1), reference_logits(model, x), atol=1e-6)

    def test_input_shape_checked(self, toy_model):
        with pytest.raises(ShapeError):
            toy_model.forward_grid(np.zeros((1, 3, 8, 8), dtype=np.float32))

    def test_head_range_checked(self, toy_model, images):
        with pytest.raises(ConfigError):
            toy_model.forward_head(images(toy_model, 1), 3, 1)

    def test_frozen_model_refuses_training_pass(self, toy_model, images):
        with pytest.raises(FrozenModelError):
            toy_model.forward_grid(images(toy_model, 2), training=True)


class TestCausality:
    def test_later_input_groups_do_not_reach_earlier_heads(self):
        arch = ArchDescriptor(stages=[8], blocks=[2], groups=2, in_channels=2, input_grouping="causal")
        model = fresh_model(arch)
        assert not model.stem.kernel.mask.all()
        x = Rng(3).uniform((4, 2, 8, 8), dtype=np.float32)
        noisy = x.copy()
        noisy[:, 1] = Rng(4).uniform((4, 8, 8), dtype=np.float32)
        assert np.array_equal(model.forward_grid(x).values[:, 0], model.forward_grid(noisy).values[:, 0])
        assert not np.array_equal(model.forward_grid(x).values[:, 1], model.forward_grid(noisy).values[:, 1])

    def test_later_channel_groups_do_not_reach_earlier_heads(self, toy_model, images):
        x = images(toy_model, 4)
        before = toy_model.forward_grid(x).values
        twin = toy_model.clone()
        weight = twin.blocks[0].conv1.weight.data
        weight[4:] += Rng(6).normal(weight[4:].shape, dtype=np.float32)
        twin.blocks[0].bn1.running_mean[4:] += 1.0
        after = twin.forward_grid(x).values
        assert np.array_equal(after[:, 0], before[:, 0])
        assert not np.array_equal(after[:, 1], before[:, 1])

    def test_later_layer_groups_do_not_reach_earlier_heads(self, toy_model, images):
        x = images(toy_model, 4)
        before = toy_model.forward_grid(x).values
        twin = toy_model.clone()
        twin.blocks[1].conv2.weight.data *= 3
        after = twin.forward_grid(x).values
        assert np.array_equal(after[0], before[0])
        assert not np.array_equal(after[1], before[1])

    def test_cone_masks(self, toy_model):
        cone = toy_model.cone_masks(1, 1)
        assert cone["stem.conv.weight"][:4].all() and not cone["stem.conv.weight"][4:].any()
        assert cone["heads.0.weight"][:, :4].all() and not cone["heads.0.weight"][:, 4:].any()
        assert not cone["heads.1.weight"].any()
        assert not cone["heads.1.bias"].any()
        assert not cone["blocks.1.conv1.weight"].any()
        assert cone["blocks.0.bn1.running_var"].tolist() == [True] * 4 + [False] * 4

    def test_cone_covers_every_parameter_and_buffer(self, toy4_model):
        cone = toy4_model.cone_masks(2, 3)
        names = set(toy4_model.named_parameters()) | set(toy4_model.named_buffers())
        assert set(cone) == names
        full = toy4_model.cone_masks(4, 4)
        assert all(full[name].all() for name in toy4_model.named_buffers())


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

class TestState:
    def test_load_state_dict_copies_values(self, toy_model, toy_arch, images):
        toy_arch.seed = 11
        other = build_model(toy_arch).freeze()
        other.load_state_dict(toy_model.state_dict())
        x = images(toy_model, 3)
        assert np.array_equal(other.forward_grid(x).values, toy_model.forward_grid(x).values)

    def test_missing_tensor_rejected(self, toy_model, toy_arch):
        state = toy_model.state_dict()
        state.pop("heads.0.bias")
        with pytest.raises(ShapeError, match="heads.0.bias"):
            build_model(toy_arch).load_state_dict(state)

    def test_astype_casts_parameters_and_buffers(self, toy_model):
        model64 = toy_model.astype("float64")
        assert all(p.dtype == np.float64 for p in model64.parameters())
        assert all(b.dtype == np.float64 for b in model64.named_buffers().values())
        assert toy_model.dtype == np.float32
