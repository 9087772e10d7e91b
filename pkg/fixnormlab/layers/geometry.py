import numpy as np

from fixnormlab.autodiff.ops import check_labels, DegenerateWeightsError, softmax


def mcbr(features, labels, W):
    """Mean cross-boundary risk of each sample and of the batch.

    For a sample x with label k the risk is the average over j != k of
    cos(x, W_j - W_k). A term whose cosine is undefined (x = 0 or W_j = W_k)
    contributes 0 and the divisor stays C - 1.

    Returns (per-sample risks [B], batch mean).
    """
    x = np.asarray(features.data if hasattr(features, 'data') else features,
                   dtype=np.float64)
    w = np.asarray(W.data if hasattr(W, 'data') else W, dtype=np.float64)
    classes = w.shape[1]
    if classes < 2:
        raise ValueError('cross-boundary risk needs at least two classes')
    labels = check_labels(labels, classes)

    # pairwise[k, j] = ||W_j - W_k||
    pairwise = np.sqrt(((w[:, None, :] - w[:, :, None])**2).sum(axis=0))
    x_norms = np.sqrt((x*x).sum(axis=1))
    scores = x @ w
    dots = scores - scores[np.arange(len(labels)), labels][:, None]
    denom = x_norms[:, None]*pairwise[labels]
    valid = denom > 0.0
    cosines = np.zeros_like(dots)
    cosines[valid] = dots[valid]/denom[valid]
    risks = np.clip(cosines.sum(axis=1)/(classes - 1), -1.0, 1.0)
    return risks, (float(risks.mean()) if len(risks) > 0 else 0.0)


def closed_form_input_grad(x, k, p):
    """Negative input gradient of -log p_k through a WN-FC head.

    Evaluates (g/||W||) * sum_{j != k} p_j (W_k - W_j): the direction that
    drives x away from every other class, weighted by how probable that
    class still is.

    p -- holder of W [D, C] and gain g (a WnFc head)
    """
    x = np.asarray(x, dtype=np.float64)
    w = p.W.data
    g = float(p.g.data)
    norm = np.sqrt(np.sum(w*w))
    if norm == 0.0:
        raise DegenerateWeightsError('class weights have zero norm')
    probs = softmax((x @ w)/norm*g)
    diffs = w[:, [k]] - w
    weights = probs.copy()
    weights[k] = 0.0
    return (g/norm)*(diffs @ weights)
