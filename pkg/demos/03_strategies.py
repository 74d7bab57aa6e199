"""A short head-to-head between flat sampling and the length curriculum.

Runs on a reduced corpus so it finishes in a few minutes; the
full-size comparison lives in the acceptance suite.
"""
from ctc_curriculum.dataset import CorpusSpec, generate_corpus, split_into_words
from ctc_curriculum.harness import ExperimentConfig, compare_strategies, run_experiment

spec = CorpusSpec(n_train=2000, n_valid=200, seed=0)
splits = generate_corpus(spec)
words = split_into_words(splits.train)
print(f"== corpus: {len(splits.train)} lines, {splits.train.total_target_chars} target chars ==")

EVERY = 5000
reports = {}
for strategy in ("baseline", "curriculum", "by_hand"):
    cfg = ExperimentConfig(strategy=strategy, total_epochs=3.0, eval_every_targets=EVERY, seed=0)
    reports[strategy] = run_experiment(cfg, splits.train, splits.valid, words)
    last = reports[strategy][-1]
    print(f"   {strategy:<10} final valid normNLL={last.valid_norm_nll:.3f} CER={last.valid_cer:.3f}")

print("\n== validation curves (normNLL) ==")
for name, pts in reports.items():
    print(f"   {name:<10}", " ".join(f"{p.valid_norm_nll:.2f}" for p in pts[::3]))

print()
print(compare_strategies(reports, EVERY, threshold=2.0).render())
