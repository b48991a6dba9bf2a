"""Brute-force reference implementations used as oracles.

These recompute results without batching, masking shortcuts, or fused
operations, so the fast paths can be checked against them.  They are
intentionally simple and slow; the eval command exposes them behind
``--verify``.
"""

import numpy as np

from .errors import DegenerateLabelsError, TooShortError


def reference_forward_unpadded(model, features: np.ndarray) -> np.ndarray:
    """Eval-mode logits for a single exact-length sample.

    Works frame by frame on the unpadded input, so no mask is ever needed;
    agreement with the batched masked forward pass is the masking
    correctness check.
    """
    cfg = model.config
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise TooShortError(f"expected a 2-D frames x bins matrix, got shape {feats.shape}")
    if feats.shape[0] < model.min_input_frames:
        raise TooShortError(
            f"reference forward needs >= {model.min_input_frames} frames, got {feats.shape[0]}"
        )

    def bn_eval(x, bn):
        out = np.empty_like(x)
        for c in range(x.shape[0]):
            inv = 1.0 / np.sqrt(float(bn.running_var[c]) + bn.epsilon)
            out[c] = (x[c] - float(bn.running_mean[c])) * inv * float(bn.gamma.data[c]) \
                + float(bn.beta.data[c])
        return out

    # filterbank: one dot product per (channel, frame)
    w_fb = model.filterbank.weight.data.astype(np.float64)
    h = np.empty((cfg.channels, feats.shape[0]))
    for c in range(cfg.channels):
        for t in range(feats.shape[0]):
            h[c, t] = float(np.dot(w_fb[c], feats[t]))
    h = np.maximum(bn_eval(h, model.bns[0]), 0.0)

    for i, conv in enumerate(model.temporal):
        w = conv.weight.data.astype(np.float64)
        k, s = conv.kernel, conv.stride
        t_out = (h.shape[1] - k) // s + 1
        nxt = np.empty((cfg.channels, t_out))
        for d in range(cfg.channels):
            for t in range(t_out):
                nxt[d, t] = float(np.sum(w[d] * h[:, s * t:s * t + k]))
        h = np.maximum(bn_eval(nxt, model.bns[i + 1]), 0.0)

    pooled = h.mean(axis=1)
    w_d = model.dense.weight.data.astype(np.float64)
    b_d = model.dense.bias.data.astype(np.float64)
    return pooled @ w_d + b_d


def reference_eer_bruteforce(scores, targets) -> float:
    """EER by exhaustive threshold scan.

    Evaluates the false-positive and false-negative rates at every midpoint
    between consecutive sorted scores plus the two infinities, then
    interpolates the crossing.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    positives = int(targets.sum())
    negatives = targets.size - positives
    if positives == 0 or negatives == 0:
        raise DegenerateLabelsError("EER needs at least one positive and one negative")
    uniq = np.unique(scores)  # ascending
    thresholds = [np.inf]
    thresholds += [(hi + lo) / 2.0 for lo, hi in zip(uniq[:-1], uniq[1:])][::-1]
    thresholds += list(uniq[::-1])  # hit each score exactly as well
    thresholds += [-np.inf]
    points = []
    for theta in sorted(set(thresholds), reverse=True):  # sweep high to low
        predicted = scores >= theta
        fp = int(np.sum(predicted & (targets == 0)))
        fn = int(np.sum(~predicted & (targets == 1)))
        point = (fp / negatives, fn / positives)
        if not points or points[-1] != point:
            points.append(point)
    # walk the sweep for the segment where FNR crosses below FPR
    for (fpr0, fnr0), (fpr1, fnr1) in zip(points[:-1], points[1:]):
        if fnr0 - fpr0 == 0:
            return fpr0
        if fnr1 - fpr1 <= 0:
            d0 = fnr0 - fpr0
            d1 = fnr1 - fpr1
            if d1 == 0:
                return fpr1
            alpha = d0 / (d0 - d1)
            return fpr0 + alpha * (fpr1 - fpr0)
    return float(points[-1][0])
