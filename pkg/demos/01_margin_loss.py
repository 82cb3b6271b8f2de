"""The loss family, from plain softmax to the dual-branch morph loss.

Walks through the three layers of the loss stack on tiny hand-sized
inputs: stable softmax cross-entropy, the additive angular margin on
the target cosine, and the dual-branch batch loss where a morph sample
is scored against one parent identity per head.
"""

import numpy as np

from morphguard import (
    LabelPair,
    MarginConfig,
    SampleKind,
    margin_adjust,
    margin_softmax_ce,
    morphguard_loss,
    softmax_ce,
)

# --- plain softmax cross-entropy -------------------------------------------
loss, grad = softmax_ce([2.1, -0.4, 0.7], target=1)
print("softmax loss for logits [2.1, -0.4, 0.7], target 1:", round(loss, 6))
print("gradient (softmax - onehot):", np.round(grad, 6), "sums to", round(grad.sum(), 15))

# extreme logits stay finite: the loss is computed as ln(1 + rest)
loss, _ = softmax_ce([30.0, -30.0], target=0)
print("saturated case ln(1 + e^-60):", loss)

# --- the angular margin ------------------------------------------------------
# shifting the target angle by m radians lowers its cosine; the shifted
# angle is clamped to [0, pi] so the value never wraps around
print("\ncos(theta) = 0.6 shifted by m = 0.5:", round(margin_adjust(0.6, 0.5), 6))
print("clamped at the far end (cos(theta) = -1):", margin_adjust(-1.0, 0.5))

cosines = np.array([0.8, 0.1, -0.3])
for m in (0.0, 0.25, 0.5):
    loss, _ = margin_softmax_ce(cosines, target=0, scale=10.0, margin=m)
    print(f"margin {m:4.2f} -> loss {loss:.6f}")

# --- the dual-branch loss ----------------------------------------------------
# a morph carries two labels: head 1 is scored against the first parent,
# head 2 against the second; both terms use the morph margin
rng = np.random.default_rng(0)
config = MarginConfig(scale=10.0, bona_fide_margin=0.5, morph_offset=-0.1)
print("\nmargins: bona fide", config.bona_fide_margin, "morph", round(config.morph_margin, 3))

head1_cosines = rng.uniform(-0.8, 0.8, size=4)
head2_cosines = rng.uniform(-0.8, 0.8, size=4)
batch = [
    (head1_cosines, head2_cosines, LabelPair(0, 2, SampleKind.MORPH)),
    (head1_cosines, head2_cosines, LabelPair(1, 1, SampleKind.BONA_FIDE)),
]
result = morphguard_loss(batch, config)
print("batch loss:", round(result.loss, 6))
print("per-sample losses (morph, bona fide):", np.round(result.sample_losses, 6))

# with a zero offset the morph would receive exactly the bona fide margin
baseline = MarginConfig(scale=10.0, bona_fide_margin=0.5, morph_offset=0.0)
same = morphguard_loss(batch, baseline)
by_hand = (
    margin_softmax_ce(head1_cosines, 0, 10.0, 0.5)[0]
    + margin_softmax_ce(head2_cosines, 2, 10.0, 0.5)[0]
)
print("zero-offset morph term equals two bona-fide-margin terms:", same.sample_losses[0] == by_hand)
