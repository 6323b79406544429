import itertools

import numpy as np
import pytest

from densesr.archmodel import ModelConfig, build_model, load_checkpoint
from densesr.imagecore import ColorSpace, PlanarImage, sigmoidal_decode, sigmoidal_encode
from densesr.netcore import AdamConfig
from densesr.resample import degrade, gs_upsample_array
from densesr.trainer import (AUGMENTATIONS, AugmentOp, TrainConfig, TrainingDiverged, apply_plan,
                             augment, augment_array, cascade_plan, fixed_patch_set, identity_stages,
                             make_pairs, patch_training_plan, sample_pairs, super_resolve, train,
                             train_patch_stage)

TINY = ModelConfig.from_widths([(4, 1), (4, 1)])


def grid(h=3, w=2):
    return np.arange(h * w).reshape(h, w)


def dihedral():
    """All 8 symmetries of the square as explicit coordinate maps on an n x n grid."""
    def make(f):
        def apply(a):
            n = a.shape[0]
            out = np.empty_like(a)
            for i in range(n):
                for j in range(n):
                    out[i, j] = a[f(i, j, n - 1)]
            return out
        return apply
    maps = [lambda i, j, m: (i, j), lambda i, j, m: (j, m - i), lambda i, j, m: (m - i, m - j),
            lambda i, j, m: (m - j, i), lambda i, j, m: (j, i), lambda i, j, m: (m - j, m - i),
            lambda i, j, m: (m - i, j), lambda i, j, m: (i, m - j)]
    return [make(f) for f in maps]


class TestAugment:
    def test_involution_and_order_four(self):
        a = grid()
        tm = lambda x: augment_array(x, AugmentOp.TRANSPOSE_MAIN)  # noqa: E731
        r90 = lambda x: augment_array(x, AugmentOp.ROT90)  # noqa: E731
        assert np.array_equal(tm(tm(a)), a)
        assert np.array_equal(r90(r90(r90(r90(a)))), a)

    def test_rot180_is_composition_of_transposes(self):
        a = grid()
        comp = augment_array(augment_array(a, AugmentOp.TRANSPOSE_ANTI), AugmentOp.TRANSPOSE_MAIN)
        assert np.array_equal(augment_array(a, AugmentOp.ROT180), comp)
        assert np.array_equal(augment_array(a, AugmentOp.ROT180), a[::-1, ::-1])

    def test_anti_transpose_by_coordinates(self):
        a = grid(3, 2)
        out = augment_array(a, AugmentOp.TRANSPOSE_ANTI)
        h, w = a.shape
        assert out.shape == (w, h)
        for i in range(w):
            for j in range(h):
                assert out[i, j] == a[h - 1 - j, w - 1 - i]

    def test_bijective_distinct_and_in_dihedral_group(self):
        a = grid(4, 4)
        group = [g(a) for g in dihedral()]
        outs = [augment_array(a, op) for op in AUGMENTATIONS]
        for o in outs:
            assert sorted(o.ravel()) == sorted(a.ravel())
            assert any(np.array_equal(o, g) for g in group)
        assert len({o.tobytes() for o in outs}) == 6
        for x, y in itertools.product(AUGMENTATIONS, repeat=2):
            c = augment_array(augment_array(a, x), y)
            assert any(np.array_equal(c, g) for g in group)

    def test_image_wrapper(self):
        im = PlanarImage(grid(3, 2).astype(np.float32)[None])
        assert augment(im, AugmentOp.ROT90).samples.shape == (1, 2, 3)


class TestSampling:
    def test_constant_image(self):
        hr = [np.full((40, 40), 0.6)]
        cfg = TrainConfig(patch_size=16, seed=1)
        lr, t = next(sample_pairs(hr, 2, cfg, mean=0.25))
        assert np.abs(lr - 0.35).max() < 1e-6 and np.abs(t - 0.35).max() < 1e-6

    def test_seeded_determinism(self, rng):
        hr = [rng.random((48, 40)), rng.random((36, 52))]
        cfg = TrainConfig(patch_size=20, seed=7)
        a = list(itertools.islice(sample_pairs(hr, 2, cfg), 10))
        b = list(itertools.islice(sample_pairs(hr, 2, cfg), 10))
        assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(a, b))

    def test_default_patch_size(self, rng):
        lr, hr = next(sample_pairs([rng.random((170, 166))], 2, TrainConfig()))
        assert lr.shape == hr.shape == (159, 159)

    def test_lr_is_upsampled_degradation(self, rng):
        hr = rng.random((32, 32))
        up, target = make_pairs([hr], 2)[0]
        ref = gs_upsample_array(degrade(PlanarImage(hr), 2).samples[0], 2)
        assert np.abs(up - ref).max() < 1e-6 and np.abs(target - hr).max() < 1e-7

    def test_small_images_skipped_with_warning(self, rng):
        hr = [rng.random((10, 10)), rng.random((40, 40))]
        with pytest.warns(UserWarning, match="smaller than patch size"):
            next(sample_pairs(hr, 2, TrainConfig(patch_size=20)))
        with pytest.raises(ValueError), pytest.warns(UserWarning):
            next(sample_pairs(hr[:1], 2, TrainConfig(patch_size=20)))

    def test_fixed_patch_set_expands_augments(self, rng):
        pairs = make_pairs([rng.random((32, 32))], 2)
        s = fixed_patch_set(pairs, 8, 4)
        assert len(s) == 24 and s[0][0].shape == (8, 8)


def pair_stream(pairs):
    return itertools.cycle(pairs)


class TestTrain:
    def test_zero_init_identity_pairs_stay_at_zero(self, rng):
        model = build_model(TINY, init="zeros")
        a = rng.random((12, 12)) - 0.5
        res = train(model, pair_stream([(a, a)]), TrainConfig(patch_size=12, steps=5))
        assert [r.loss for r in res.trace] == [0.0] * 5
        assert not any(p.any() for p in model.arrays().values())

    def test_loss_decreases_default_hyperparameters(self, rng):
        # default ADAM settings and batch 6; a narrow model keeps this affordable
        hr = [rng.random((48, 48)) for _ in range(2)]
        cfg = TrainConfig(patch_size=24, steps=100, log_every=0)
        pairs = make_pairs(hr, 2)
        samples = fixed_patch_set(pairs, 24, 2, seed=0)
        mean = float(np.mean([t for _, t in samples]))
        ratios = []
        for seed in range(5):
            model = build_model(ModelConfig.from_widths([(8, 2), (8, 2)]), seed=seed)
            tr = train(model, pair_stream([(i - mean, t - mean) for i, t in samples]), cfg).trace
            first = np.mean([r.loss for r in tr[:10]])
            last = np.mean([r.loss for r in tr[-10:]])
            ratios.append(last / first)
        assert np.median(ratios) < 1.0

    def test_non_finite_input_raises(self):
        model = build_model(TINY, seed=0)
        bad = np.full((8, 8), np.nan)
        with pytest.raises(TrainingDiverged) as e:
            train(model, pair_stream([(bad, bad)]), TrainConfig(patch_size=8, steps=2))
        assert e.value.step == 0 and e.value.lr == AdamConfig().lr

    def test_checkpoint_and_resume(self, tmp_path, rng):
        a, b = rng.random((10, 10)), rng.random((10, 10))
        cfg = TrainConfig(patch_size=10, steps=3, batch=2)
        res = train(build_model(TINY, seed=1), pair_stream([(a, b)]), cfg,
                    global_mean=0.5, out=tmp_path / "m.ckpt", role="F2")
        ck = load_checkpoint(tmp_path / "m.ckpt")
        assert (ck.step, ck.role, ck.global_mean) == (3, "F2", 0.5)
        res2 = train(ck.model, pair_stream([(a, b)]), cfg, adam=ck.adam)
        assert res2.trace[0].step == 3 and res2.steps == 6
        assert res.trace[-1].step == 2


class TestCascadePlan:
    def test_plans(self):
        assert cascade_plan(2) == ["F2"]
        assert cascade_plan(4) == ["F2", "F2", "P4"]
        assert cascade_plan(8) == ["F2", "F2", "P4", "F2", "P4"]
        assert cascade_plan(8, ("F2", "P4", "P8")) == ["F2", "F2", "P4", "F2", "P4", "P8"]

    def test_patch_training_plans(self):
        assert patch_training_plan("P4") == ["F2", "F2"]
        assert patch_training_plan("P8") == ["F2", "F2", "P4", "F2", "P4"]
        assert patch_training_plan("P16") == ["F2", "F2", "P4", "F2", "P4", "P8", "F2", "P4", "P8"]

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            cascade_plan(3)
        with pytest.raises(ValueError):
            cascade_plan(4, ("P4",))
        with pytest.raises(ValueError, match="P4"):
            cascade_plan(8, ("F2",))
        assert cascade_plan(2, ("F2",)) == ["F2"]
        with pytest.raises(ValueError):
            patch_training_plan("F2")


class Recorder:
    def __init__(self, role, log):
        self.role, self.log = role, log

    def apply(self, luma):
        self.log.append((self.role, luma.shape))
        return luma


def recorders(roles):
    log = []
    return {r: Recorder(r, log) for r in roles}, log


class TestStageOrder:
    @pytest.mark.parametrize("role,expected", [
        ("P4", ["F2", "F2"]),
        ("P8", ["F2", "F2", "P4", "F2", "P4"]),
    ])
    def test_patch_training_invokes_lower_stages_in_order(self, rng, role, expected):
        stages, log = recorders(["F2", "P4"])
        hr = [np.full((32, 32), 0.5)]
        train_patch_stage(role, stages, hr, TrainConfig(patch_size=8, steps=0), build_model(TINY))
        assert [r for r, _ in log] == expected

    def test_only_f2_upsamples(self):
        stages, log = recorders(["F2", "P4"])
        apply_plan(np.zeros((4, 4)), cascade_plan(8), stages)
        assert log == [("F2", (8, 8)), ("F2", (16, 16)), ("P4", (16, 16)),
                       ("F2", (32, 32)), ("P4", (32, 32))]

    def test_perfect_lower_stages_give_zero_loss(self):
        res = train_patch_stage("P4", identity_stages(), [np.full((32, 32), 0.3)],
                                TrainConfig(patch_size=16, steps=3), build_model(TINY, init="zeros"))
        assert max(r.loss for r in res.trace) < 1e-12

    def test_missing_stage(self):
        with pytest.raises(ValueError, match="P4"):
            train_patch_stage("P8", identity_stages(["F2"]), [np.zeros((32, 32))],
                              TrainConfig(patch_size=8, steps=0), build_model(TINY))


def zero_stages(roles=("F2", "P4")):
    from densesr.trainer import Stage
    return {r: Stage(r, build_model(TINY, init="zeros"), 0.4, tile=16) for r in roles}


class TestSuperResolve:
    def test_zero_init_gray_equals_gs_upscale(self, rng):
        lr = PlanarImage(rng.random((1, 10, 12)), ColorSpace.LINEAR)
        out = super_resolve(lr, 4, zero_stages())
        s = sigmoidal_encode(lr.samples[0])
        ref = sigmoidal_decode(gs_upsample_array(gs_upsample_array(s, 2), 2))
        assert out.samples.shape == (1, 40, 48) and out.space is ColorSpace.LINEAR
        assert np.abs(out.samples[0] - np.clip(ref, 0, 1)).max() < 1e-6

    def test_zero_init_color_equals_per_channel_gs(self, rng):
        lr = PlanarImage(rng.random((3, 8, 8)), ColorSpace.SRGB)
        out = super_resolve(lr, 2, zero_stages())
        base = super_resolve(lr, 2, identity_stages())
        assert out.channels == 3 and out.space is ColorSpace.SRGB
        assert np.abs(out.samples - base.samples).max() < 1e-6

    def test_constant(self):
        lr = PlanarImage(np.full((1, 6, 6), 0.7), ColorSpace.SRGB)
        assert np.abs(super_resolve(lr, 8, identity_stages()).samples - 0.7).max() < 1e-6

    def test_missing_stage_checkpoint(self):
        with pytest.raises(ValueError):
            super_resolve(PlanarImage(np.zeros((1, 4, 4))), 4, {"P4": None})
