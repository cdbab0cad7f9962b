import numpy as np
import pytest

from eas import fixtures
from eas.dataset import TaskExample
from eas.errors import MeasurementError
from eas.evaluate import transcribe_example
from eas.metrics import normalize_text
from eas.profiler import (
    harness_overhead_seconds,
    timed_dataset_pass,
    timed_transcribe,
    token_growth_curve,
)
from eas.sparsify import EasConfig


def as_task(example, i=0):
    feats, dur, text = example
    return TaskExample(example_id=f"ex{i}", features=feats, duration_seconds=dur,
                       reference_text=text, reference_words=normalize_text(text))


@pytest.fixture(scope="module")
def tiny_tasks(tiny, tiny_examples):
    return [as_task(e, i) for i, e in enumerate(tiny_examples[:6])]


class TestTimedTranscribe:
    def test_repeats_and_identical_tokens(self, tiny, tiny_tasks):
        cfg, weights, vocab = tiny
        ids, timing, cap = timed_transcribe(tiny_tasks[0], cfg, weights, vocab,
                                            None, n_repeats=3)
        assert timing.n_repeats == 3
        assert len(timing.samples) == 3
        assert all(len(s) == 3 and all(x >= 0 for x in s) for s in timing.samples)
        assert cap is False
        untimed = transcribe_example(tiny_tasks[0], cfg, weights, vocab)
        assert ids == untimed.token_ids

    def test_rejects_bad_repeats(self, tiny, tiny_tasks):
        cfg, weights, vocab = tiny
        with pytest.raises(MeasurementError):
            timed_transcribe(tiny_tasks[0], cfg, weights, vocab, None, n_repeats=0)

    def test_additivity_within_overhead(self, tiny, tiny_tasks):
        cfg, weights, vocab = tiny
        import time
        t0 = time.perf_counter()
        res = transcribe_example(tiny_tasks[1], cfg, weights, vocab)
        total = time.perf_counter() - t0
        bound = 8 * harness_overhead_seconds() + 2e-3  # scheduler slack
        assert abs(total - res.inference_seconds) <= bound + 0.2 * total


@pytest.mark.slow
class TestEncoderScalesWithSparsity:
    def test_encoder_median_decreases(self):
        # needs a long enough sequence that compute dominates timer noise
        cfg = fixtures.make_config("small")
        weights = fixtures.echo_weights(cfg)
        vocab = fixtures.echo_vocab()
        task = as_task(fixtures.make_echo_example(cfg, 0, 0))
        wins = 0
        for trial in range(5):
            _, base, _ = timed_transcribe(task, cfg, weights, vocab, None, 3)
            _, eased, _ = timed_transcribe(task, cfg, weights, vocab,
                                           EasConfig(1, 0.7), 3)
            wins += eased.encoder_seconds < base.encoder_seconds
        assert wins >= 4

    def test_stem_time_roughly_flat(self):
        cfg = fixtures.make_config("small")
        weights = fixtures.echo_weights(cfg)
        vocab = fixtures.echo_vocab()
        task = as_task(fixtures.make_echo_example(cfg, 0, 1))

        def stem_samples(eas):
            _, t, _ = timed_transcribe(task, cfg, weights, vocab, eas, 5)
            return sorted(s[0] for s in t.samples)

        base = stem_samples(None)
        eased = stem_samples(EasConfig(1, 0.8))
        # interquartile ranges overlap: the stem never sees the gather
        assert base[1] <= eased[3] and eased[1] <= base[3]


class TestTokenGrowth:
    def test_zero_sparsity_equals_baseline(self, tiny, tiny_tasks):
        cfg, weights, vocab = tiny
        baseline_avg, points = token_growth_curve(
            tiny_tasks, cfg, weights, vocab, stage=1, sparsities=[0.0, 0.5])
        assert points[0].sparsity == 0.0
        assert points[0].avg_tokens == baseline_avg
        assert all(0.0 <= p.cap_hit_fraction <= 1.0 for p in points)

    def test_never_stopping_weights_hit_cap_everywhere(self, tiny_tasks):
        cfg = fixtures.make_config("tiny")
        weights = fixtures.never_stop_weights(cfg)
        vocab = fixtures.echo_vocab()
        cap = 12
        baseline_avg, points = token_growth_curve(
            tiny_tasks[:3], cfg, weights, vocab, stage=1,
            sparsities=[0.0, 0.3, 0.6, 0.9], max_new_tokens=cap)
        assert baseline_avg == cap
        for p in points:
            assert p.avg_tokens == cap
            assert p.cap_hit_fraction == 1.0

    def test_growth_at_extreme_sparsity(self, tiny, tiny_tasks):
        # dropping the terminator frame induces runaway repetition, so the
        # average generation length grows past the baseline
        cfg, weights, vocab = tiny
        baseline_avg, points = token_growth_curve(
            tiny_tasks, cfg, weights, vocab, stage=1, sparsities=[0.9])
        assert points[0].avg_tokens > baseline_avg


class TestTimedDatasetPass:
    def test_totals_and_determinism(self, tiny, tiny_tasks):
        cfg, weights, vocab = tiny
        timing, tokens, caps = timed_dataset_pass(tiny_tasks, cfg, weights, vocab,
                                                  None, n_repeats=2)
        assert timing.n_repeats == 2
        assert tokens == sum(
            len(transcribe_example(t, cfg, weights, vocab).token_ids)
            for t in tiny_tasks)
        assert caps == 0
