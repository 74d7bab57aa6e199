"""How the length curriculum reshapes the draw distribution as training runs."""
import numpy as np

from ctc_curriculum.sampler import (
    CurriculumSchedule,
    SamplingWeights,
    draw_curriculum_many,
    draw_probabilities,
)

print("== 1. a toy corpus of target lengths ==")
lengths = np.array([0, 2, 5, 8, 12, 20, 40, 60])
weights = SamplingWeights.from_lengths(lengths, m_min=5)
print("   lengths:  ", lengths)
print("   shortness:", np.round(weights.shortness, 4))
print("   (everything at or below m=5 shares the top weight)")

print("\n== 2. draw probabilities for a few exponents ==")
for lam in (0.0, 1.0, 3.0):
    p = draw_probabilities(weights, lam)
    print(f"   lam={lam:.0f}:", np.round(p, 3))

print("\n== 3. rejection sampling matches the closed form ==")
rng = np.random.default_rng(0)
idx = draw_curriculum_many(weights, 3.0, rng, 200_000)
freq = np.bincount(idx, minlength=len(lengths)) / idx.size
print("   empirical:", np.round(freq, 3))
print("   exact:    ", np.round(draw_probabilities(weights, 3.0), 3))
print(f"   worst-case proposals per draw at lam=3: {1 / weights.acceptance_bound(3.0):.0f}")

print("\n== 4. the exponent decays with browsed characters ==")
total = int(lengths.sum())
sched = CurriculumSchedule.from_epochs(total, decay_epochs=5, lambda_start=3.0)
for frac in (0, 1, 2.5, 4, 5, 7):
    browsed = int(frac * total)
    print(f"   after {frac:>3} epochs ({browsed:>4} chars): lam = {sched.lambda_at(browsed):.3f}")
