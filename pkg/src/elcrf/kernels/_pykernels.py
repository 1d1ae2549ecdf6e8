"""Pure numpy lattice kernels. Reference implementation and fallback for
the compiled module; both must agree to rounding."""
import numpy as np

NEG_INF = -1e30


def _lse_cols(x):
    # logsumexp over axis 0 of a 2-D array
    m = x.max(axis=0)
    return m + np.log(np.exp(x - m).sum(axis=0))


def _lse_rows(x):
    m = x.max(axis=1)
    return m + np.log(np.exp(x - m[:, None]).sum(axis=1))


def forward(psi, trans):
    T, M = psi.shape
    alpha = np.empty((T, M))
    alpha[0] = np.maximum(psi[0], NEG_INF)
    for t in range(1, T):
        alpha[t] = np.maximum(psi[t] + _lse_cols(alpha[t - 1][:, None] + trans), NEG_INF)
    return alpha


def backward(psi, trans):
    T, M = psi.shape
    beta = np.empty((T, M))
    beta[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        beta[t] = np.maximum(_lse_rows(trans + (psi[t + 1] + beta[t + 1])[None, :]), NEG_INF)
    return beta


def edge_expectations(psi, trans, alpha, beta, log_z):
    """Sum over positions of the pairwise posteriors, shape ``(M, M)``."""
    T, M = psi.shape
    if T < 2:
        return np.zeros((M, M))
    right = psi[1:] + beta[1:]
    scores = alpha[:-1, :, None] + trans[None, :, :] + right[:, None, :] - log_z
    return np.exp(scores).sum(axis=0)


def viterbi(psi, trans):
    T, M = psi.shape
    delta = np.maximum(psi[0], NEG_INF)
    back = np.zeros((T, M), dtype=np.intp)
    for t in range(1, T):
        cand = delta[:, None] + trans
        # argmax returns the first maximum: lowest predecessor index wins ties
        back[t] = cand.argmax(axis=0)
        delta = np.maximum(psi[t] + cand[back[t], np.arange(M)], NEG_INF)
    path = np.empty(T, dtype=np.intp)
    path[T - 1] = delta.argmax()
    score = float(delta[path[T - 1]])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, score
