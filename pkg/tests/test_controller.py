"""Gate schedule and two-pass orchestration on the toy backend."""

import numpy as np

from adapedit.backend import ToyBackend
from adapedit.backend.base import BRANCH_ORIGINAL
from adapedit.config import EditConfig
from adapedit.controller import (
    BLEND,
    PRESERVE,
    build_gate_schedule,
    collect_pass,
    run_edit,
)
from adapedit.prompts import tokenize

PROMPT = "a dog standing on the grass"
EDIT = "a dog sitting on the grass"


def toy_config(**kw):
    base = dict(prompt=PROMPT, edit=EDIT, steps=10, seed=42, backend="toy")
    base.update(kw)
    return EditConfig(**base).validate()


class TestGateSchedule:
    def test_threshold_rule(self):
        # tau = 0.3 over 50 steps: blend down to t = 16, preserve 15..1
        sched = build_gate_schedule(np.array([0.3]), 50)
        assert sched.thresholds == (15,)
        assert sched.branch(0, 50) == BLEND
        assert sched.branch(0, 16) == BLEND
        assert sched.branch(0, 15) == PRESERVE
        assert sched.branch(0, 1) == PRESERVE

    def test_zero_tau_blends_everywhere(self):
        sched = build_gate_schedule(np.array([0.0]), 50)
        assert all(sched.branch(0, t) == BLEND for t in range(50, 0, -1))

    def test_key_word_blends_everywhere(self):
        # key words arrive with tau already forced to zero
        sched = build_gate_schedule(np.array([0.0, 0.4]), 20)
        assert sched.preserve_steps(0) == 0
        assert sched.preserve_steps(1) == 8

    def test_single_switch_along_trajectory(self):
        sched = build_gate_schedule(np.array([0.37]), 50)
        states = [sched.branch(0, t) for t in range(50, 0, -1)]
        switches = sum(1 for x, y in zip(states, states[1:]) if x != y)
        assert switches <= 1

    def test_preserve_count_monotone_in_lambda(self):
        a = np.array([0.1, 0.4, 0.9])
        totals = []
        for lt in (0.25, 0.5, 1.0, 1.5):
            tau = lt * (1.0 - np.exp(a - 1.0))
            totals.append(build_gate_schedule(tau, 50).total_preserve_steps())
        assert totals == sorted(totals)

    def test_threshold_clamped_to_step_range(self):
        sched = build_gate_schedule(np.array([5.0]), 10)
        assert sched.thresholds == (10,)


class TestCollectPass:
    def test_record_counts(self):
        backend = ToyBackend()
        c = tokenize(PROMPT, backend.vocab)
        e = tokenize(EDIT, backend.vocab)
        config = toy_config(steps=2)
        _, record = collect_pass(backend, c, e, config)
        # 2 steps x 2 layers per branch
        assert record.recorded_steps() == (2, 1)
        for t in (2, 1):
            for branch in (0, 1):
                for lid in (0, 1):
                    assert record.raw_map(t, lid, branch).shape[0] == 1

    def test_deterministic(self):
        backend = ToyBackend()
        c = tokenize(PROMPT, backend.vocab)
        e = tokenize(EDIT, backend.vocab)
        config = toy_config(steps=3)
        x1, rec1 = collect_pass(backend, c, e, config)
        x2, rec2 = collect_pass(backend, c, e, config)
        assert np.array_equal(x1, x2)
        for t in (3, 2, 1):
            for lid in (0, 1):
                assert np.array_equal(rec1.raw_map(t, lid, 1), rec2.raw_map(t, lid, 1))


class TestRunEdit:
    def test_noop_identity(self):
        result = run_edit(ToyBackend(), PROMPT, PROMPT, toy_config(edit=PROMPT))
        assert result.noop
        assert np.array_equal(result.image, result.edited_image)
        assert result.warnings

    def test_lambda_s_zero_injects_recorded_original_maps(self):
        config = toy_config(lambda_s=0.0)
        result = run_edit(ToyBackend(), PROMPT, EDIT, config, keep_injected=True)
        assert result.injected
        for (t, lid), injected in result.injected.items():
            recorded = result.record.token_map(t, lid, BRANCH_ORIGINAL)
            assert np.array_equal(injected, recorded), (t, lid)
        assert result.map_divergence == 0.0

    def test_original_image_unchanged_by_injection(self):
        backend = ToyBackend()
        config = toy_config()
        c = tokenize(PROMPT, backend.vocab)
        e = tokenize(EDIT, backend.vocab)
        x_collect, _ = collect_pass(backend, c, e, config)
        result = run_edit(backend, PROMPT, EDIT, config)
        assert np.array_equal(result.image, x_collect)

    def test_full_run_deterministic(self):
        r1 = run_edit(ToyBackend(), PROMPT, EDIT, toy_config())
        r2 = run_edit(ToyBackend(), PROMPT, EDIT, toy_config())
        assert np.array_equal(r1.edited_image, r2.edited_image)
        assert r1.map_divergence == r2.map_divergence

    def test_divergence_linear_in_lambda_s(self):
        divs = []
        for ls in (0.0, 0.5, 1.0):
            result = run_edit(ToyBackend(), PROMPT, EDIT, toy_config(lambda_s=ls))
            divs.append(result.map_divergence)
        assert divs[0] == 0.0
        assert divs[2] > 0.0
        assert divs[1] == 0.5 * divs[2]

    def test_insertion_edit_runs(self):
        config = toy_config(prompt="a photo of a cake", edit="a photo of a chocolate cake")
        result = run_edit(
            ToyBackend(), config.prompt, config.edit, config, keep_injected=True
        )
        assert not result.noop
        # inserted word rows carry the edited branch's own recorded map
        inserted_span = result.record.edited.word_spans[4]
        t, lid = config.steps, 0
        injected = result.injected[(t, lid)]
        own = result.record.token_map(t, lid, 1)
        assert np.array_equal(
            injected[inserted_span[0] : inserted_span[1]],
            own[inserted_span[0] : inserted_span[1]],
        )

    def test_unequal_span_substitution_replicates_source_mean(self):
        # "cake" is one toy token, "chocolate" is two: the source word's
        # map row broadcasts across the wider target span
        config = toy_config(
            prompt="a slice of cake", edit="a slice of chocolate", lambda_s=0.0
        )
        result = run_edit(
            ToyBackend(), config.prompt, config.edit, config, keep_injected=True
        )
        assert result.alignment.pairs[3] == 3
        assert result.alignment.key_set == frozenset({3})
        start, end = result.record.edited.word_spans[3]
        assert end - start == 2
        src_start, src_end = result.record.original.word_spans[3]
        t, lid = config.steps, 0
        source_rows = result.record.token_map(t, lid, BRANCH_ORIGINAL)[src_start:src_end]
        mean_row = source_rows.mean(axis=0, dtype=np.float64).astype(np.float32)
        injected = result.injected[(t, lid)]
        for row in injected[start:end]:
            assert np.array_equal(row, mean_row)

    def test_per_step_spatial_scales_mode(self):
        fixed = run_edit(ToyBackend(), PROMPT, EDIT, toy_config())
        per_step = run_edit(ToyBackend(), PROMPT, EDIT, toy_config(dps_per_step=True))
        assert fixed.edited_image.shape == per_step.edited_image.shape
        # both modes share the pass-1 statistics
        np.testing.assert_array_equal(fixed.guidance.tau, per_step.guidance.tau)
