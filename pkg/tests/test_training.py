import math

import numpy as np
import pytest
import torch

from colposr.dataset import HiddenRegionPolicy, build_sample, synth_corpus
from colposr.dataset import generate_hidden_mask
from colposr.network import ModelSpec, build_model
from colposr.training import (
    AdadeltaState,
    NonFiniteGradientError,
    TrainingError,
    TrainRun,
    adadelta_step,
    mse_loss,
    rank_runs,
    significant_difference,
    test_error_ci as error_ci,
    train,
    train_ensemble,
)


class ScalarAdadelta:
    """Independent reference: one weight, plain Python floats."""

    def __init__(self, rho=0.95, eps=1e-6):
        self.rho, self.eps = rho, eps
        self.eg = 0.0
        self.eu = 0.0

    def step(self, w, g):
        self.eg = self.rho * self.eg + (1 - self.rho) * g * g
        delta = -math.sqrt(self.eu + self.eps) / math.sqrt(self.eg + self.eps) * g
        self.eu = self.rho * self.eu + (1 - self.rho) * delta * delta
        return w + delta


def make_tiny_samples(count=6, size=8, seed=0):
    corpus = synth_corpus(count, size=(size, size), seed=seed, images_per_patient=2)
    policy = HiddenRegionPolicy(rng_seed=seed)
    return [build_sample(ci, generate_hidden_mask(ci, policy)) for ci in corpus]


class TestMseLoss:
    def test_identical_images(self, rng):
        img = rng.random((4, 4, 3))
        assert mse_loss(img, img) == 0.0

    def test_constant_offset(self, rng):
        img = rng.random((4, 4, 3)) * 0.5
        assert mse_loss(img + 0.1, img) == pytest.approx(0.01, abs=1e-12)

    def test_matches_triple_loop_oracle(self, rng):
        a, b = rng.random((4, 4, 3)), rng.random((4, 4, 3))
        acc = 0.0
        for i in range(4):
            for j in range(4):
                for k in range(3):
                    acc += (a[i, j, k] - b[i, j, k]) ** 2
        assert mse_loss(a, b) == pytest.approx(acc / 48, abs=1e-12)

    def test_symmetry_and_nonnegativity(self, rng):
        a, b = rng.random((3, 3, 3)), rng.random((3, 3, 3))
        assert mse_loss(a, b) == mse_loss(b, a) >= 0.0

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            mse_loss(rng.random((2, 2, 3)), rng.random((2, 3, 3)))


class TestAdadeltaStep:
    def test_zero_gradient_decays_accumulators_by_rho(self):
        state, params = adadelta_step(
            AdadeltaState(), {"w": np.array(1.0)}, {"w": np.array(2.0)}
        )
        eg0, eu0 = float(state.accum_grad_sq["w"]), float(state.accum_update_sq["w"])
        frozen = float(params["w"])
        for k in range(1, 4):
            state, params = adadelta_step(state, params, {"w": np.array(0.0)})
            assert float(params["w"]) == frozen
            assert float(state.accum_grad_sq["w"]) == pytest.approx(eg0 * 0.95**k, rel=1e-15)
            assert float(state.accum_update_sq["w"]) == pytest.approx(eu0 * 0.95**k, rel=1e-15)

    def test_zero_gradient_exact_param_freeze(self):
        state, params = AdadeltaState(), {"w": np.array(3.5)}
        for _ in range(5):
            state, params = adadelta_step(state, params, {"w": np.array(0.0)})
        assert float(params["w"]) == 3.5

    def test_first_step_closed_form(self):
        state, params = AdadeltaState(), {"w": np.array(0.0)}
        _, new = adadelta_step(state, params, {"w": np.array(1.0)})
        expected = -math.sqrt(1e-6) / math.sqrt(0.05 + 1e-6)
        assert float(new["w"]) == pytest.approx(expected, abs=1e-12)
        assert float(new["w"]) == pytest.approx(-4.4721e-3, abs=1e-7)

    def test_ten_step_quadratic_matches_scalar_reference(self):
        ref = ScalarAdadelta()
        w_ref = 1.0
        state, params = AdadeltaState(), {"w": np.array(1.0)}
        for _ in range(10):
            g = 2.0 * w_ref
            w_ref = ref.step(w_ref, g)
            state, params = adadelta_step(
                state, params, {"w": 2.0 * params["w"]}
            )
            assert float(params["w"]) == pytest.approx(w_ref, abs=1e-10)

    def test_quadratic_monotone_decrease_first_100_steps(self):
        state, params = AdadeltaState(), {"w": np.array(1.0)}
        prev = float(params["w"]) ** 2
        for _ in range(100):
            state, params = adadelta_step(state, params, {"w": 2.0 * params["w"]})
            cur = float(params["w"]) ** 2
            assert cur < prev
            prev = cur

    def test_torch_tensors_supported(self):
        state = AdadeltaState()
        params = {"w": torch.tensor([1.0, -2.0], dtype=torch.float64)}
        grads = {"w": torch.tensor([0.5, 0.5], dtype=torch.float64)}
        state, new = adadelta_step(state, params, grads)
        assert isinstance(new["w"], torch.Tensor)
        ref = ScalarAdadelta()
        assert float(new["w"][0]) == pytest.approx(ref.step(1.0, 0.5), abs=1e-12)

    def test_nonfinite_gradient_names_parameter(self):
        with pytest.raises(NonFiniteGradientError, match="convs.3.bias"):
            adadelta_step(
                AdadeltaState(),
                {"convs.3.bias": np.array(1.0)},
                {"convs.3.bias": np.array(float("nan"))},
            )

    def test_inputs_not_mutated(self):
        params = {"w": np.array(1.0)}
        state = AdadeltaState()
        adadelta_step(state, params, {"w": np.array(1.0)})
        assert float(params["w"]) == 1.0
        assert state.accum_grad_sq == {}


class TestTrainLoop:
    def test_zero_epochs_is_identity(self):
        samples = make_tiny_samples()
        model = build_model(ModelSpec(width_multiplier=0.125), init_seed=0)
        before = {n: p.detach().clone() for n, p in model.named_parameters()}
        run = train(model, samples[:4], samples[4:], epochs=0)
        assert run.train_curve == [] and run.val_curve == []
        assert run.final_val_error is None
        for n, p in model.named_parameters():
            assert torch.equal(p, before[n])

    def test_reproducible_given_seeds(self):
        samples = make_tiny_samples()
        curves = []
        for _ in range(2):
            model = build_model(ModelSpec(width_multiplier=0.125), init_seed=1)
            run = train(model, samples[:4], samples[4:], epochs=3, batch_size=2, seed=9)
            curves.append((run.train_curve, run.val_curve))
        assert curves[0] == curves[1]

    def test_curves_have_epoch_length_and_final_matches(self):
        samples = make_tiny_samples()
        model = build_model(ModelSpec(width_multiplier=0.125), init_seed=2)
        run = train(model, samples[:4], samples[4:], epochs=4, batch_size=2, seed=0)
        assert len(run.train_curve) == len(run.val_curve) == 4
        assert run.final_val_error == run.val_curve[-1]

    def test_checkpoint_and_run_json(self, tmp_path):
        samples = make_tiny_samples()
        model = build_model(ModelSpec(width_multiplier=0.125), init_seed=2)
        run = train(model, samples[:4], samples[4:], epochs=1, batch_size=2,
                    run_id="R7", checkpoint_dir=tmp_path)
        assert (tmp_path / "R7" / "spec.json").exists()
        assert (tmp_path / "R7" / "run.json").exists()
        assert run.checkpoint_path == str(tmp_path / "R7")

    def test_empty_sets_rejected(self):
        model = build_model(ModelSpec(width_multiplier=0.125), init_seed=0)
        with pytest.raises(ValueError):
            train(model, [], [], epochs=1)


class TestEnsemble:
    def test_single_seed_selected(self, tmp_path):
        samples = make_tiny_samples()
        result = train_ensemble(
            ModelSpec(width_multiplier=0.125), samples[:4], samples[4:],
            seeds=[3], epochs=1, batch_size=2, out_dir=tmp_path,
        )
        assert result.selected == "R0"
        assert (tmp_path / "ensemble.json").exists()

    def test_identical_seeds_tie_breaks_to_first(self):
        samples = make_tiny_samples()
        result = train_ensemble(
            ModelSpec(width_multiplier=0.125), samples[:4], samples[4:],
            seeds=[5, 5], epochs=1, batch_size=2,
        )
        ves = [r.final_val_error for r in result.runs]
        assert ves[0] == ves[1]
        assert result.selected == "R0"

    def test_selection_is_argmin(self):
        samples = make_tiny_samples()
        result = train_ensemble(
            ModelSpec(width_multiplier=0.125), samples[:4], samples[4:],
            seeds=[0, 1, 2], epochs=2, batch_size=2,
        )
        best = min(result.runs, key=lambda r: r.final_val_error)
        assert result.selected == best.run_id
        assert [r.final_val_error for r in result.runs] == sorted(
            r.final_val_error for r in result.runs
        )

    def test_failed_run_reported_and_others_continue(self, monkeypatch):
        import colposr.training as training_mod

        samples = make_tiny_samples()
        real_build = training_mod.build_model

        def flaky_build(spec, init_seed):
            if init_seed == 1:
                raise RuntimeError("injected failure")
            return real_build(spec, init_seed)

        monkeypatch.setattr(training_mod, "build_model", flaky_build)
        result = train_ensemble(
            ModelSpec(width_multiplier=0.125), samples[:4], samples[4:],
            seeds=[0, 1], epochs=1, batch_size=2,
        )
        assert [rid for rid, _ in result.failures] == ["R1"]
        assert result.selected == "R0"

    def test_no_seeds_rejected(self):
        with pytest.raises(ValueError):
            train_ensemble(ModelSpec(width_multiplier=0.125), [], [], seeds=[], epochs=1)


class TestErrorCi:
    def test_constant_list_zero_width(self):
        mean, half = error_ci([0.4, 0.4, 0.4, 0.4])
        assert mean == pytest.approx(0.4)
        assert half == pytest.approx(0.0, abs=1e-12)

    def test_two_point_t_table_value(self):
        mean, half = error_ci([0.0, 1.0])
        assert mean == pytest.approx(0.5)
        # t_{0.975, 1} * s / sqrt(2) = 12.7062 * 0.7071 / 1.4142
        assert half == pytest.approx(12.7062 * math.sqrt(0.5) / math.sqrt(2), abs=1e-3)
        assert half == pytest.approx(6.3531, abs=1e-3)

    def test_single_point_rejected(self):
        with pytest.raises(ValueError):
            error_ci([1.0])

    def test_disjoint_intervals_flag_significance(self):
        assert significant_difference((0.0030, 0.0044), (0.0049, 0.0067))

    def test_overlapping_intervals_not_significant(self):
        assert not significant_difference((0.0030, 0.0050), (0.0049, 0.0067))

    def test_invalid_interval_rejected(self):
        with pytest.raises(ValueError):
            significant_difference((0.5, 0.1), (0.2, 0.3))


class TestKeepBest:
    def test_best_epoch_weights_and_error_kept(self):
        samples = make_tiny_samples()
        model = build_model(ModelSpec(width_multiplier=0.125), init_seed=3)
        run = train(model, samples[:4], samples[4:], epochs=5, batch_size=2,
                    seed=1, keep_best=True)
        assert run.final_val_error == min(run.val_curve)

    def test_default_reports_last_epoch(self):
        samples = make_tiny_samples()
        model = build_model(ModelSpec(width_multiplier=0.125), init_seed=3)
        run = train(model, samples[:4], samples[4:], epochs=5, batch_size=2, seed=1)
        assert run.final_val_error == run.val_curve[-1]


class TestRankRuns:
    def _runs(self, ves):
        return [
            TrainRun(run_id=f"R{i}", init_seed=i, epochs=1,
                     train_curve=[ve], val_curve=[ve], final_val_error=ve)
            for i, ve in enumerate(ves)
        ]

    def test_sorts_ascending(self):
        ranked = rank_runs(self._runs([0.5, 0.2, 0.9, 0.4]))
        assert [r.run_id for r in ranked] == ["R1", "R3", "R0", "R2"]

    def test_argmin_invariant_under_positive_rescaling(self, rng):
        ves = rng.random(8).tolist()
        base = [r.run_id for r in rank_runs(self._runs(ves))]
        for scale in (0.001, 3.0, 1e6):
            scaled = [r.run_id for r in rank_runs(self._runs([v * scale for v in ves]))]
            assert scaled == base

    def test_ties_keep_run_id_order(self):
        ranked = rank_runs(self._runs([0.3, 0.1, 0.1, 0.3]))
        assert [r.run_id for r in ranked] == ["R1", "R2", "R0", "R3"]
