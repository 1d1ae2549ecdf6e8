"""Brute-force references computed by enumerating every latent path.

Kept deliberately naive: plain loops over itertools.product, no shared code
with the library's recursions.
"""
import itertools
import math

import numpy as np


def path_energy(psi, trans, z):
    e = sum(psi[t][z[t]] for t in range(len(z)))
    e += sum(trans[z[t]][z[t + 1]] for t in range(len(z) - 1))
    return e


def all_paths(T, M):
    return itertools.product(range(M), repeat=T)


def log_partition(psi, trans, keep=None):
    """log sum_z exp(E(z)); ``keep(z)`` restricts the sum."""
    T, M = len(psi), len(psi[0])
    energies = [path_energy(psi, trans, z) for z in all_paths(T, M) if keep is None or keep(z)]
    if not energies:
        return -math.inf
    m = max(energies)
    return m + math.log(sum(math.exp(e - m) for e in energies))


def marginals(psi, trans):
    T, M = len(psi), len(psi[0])
    log_z = log_partition(psi, trans)
    node = np.zeros((T, M))
    edge = np.zeros((max(T - 1, 0), M, M))
    for z in all_paths(T, M):
        p = math.exp(path_energy(psi, trans, z) - log_z)
        for t in range(T):
            node[t, z[t]] += p
        for t in range(T - 1):
            edge[t, z[t], z[t + 1]] += p
    return log_z, node, edge


def argmax_path(psi, trans):
    """Best path under the decoder's tie rule.

    Taking the lowest-index predecessor at every backpointer and the lowest
    final state selects, among all optimal paths, the one whose state tuple
    read from the end is smallest.
    """
    T, M = len(psi), len(psi[0])
    best, best_key, best_z = -math.inf, None, None
    for z in all_paths(T, M):
        e = path_energy(psi, trans, z)
        key = tuple(reversed(z))
        if e > best or (e == best and key < best_key):
            best, best_key, best_z = e, key, z
    return list(best_z), best


def clamped_log_score(psi, trans, gold_ids, state_to_label):
    return log_partition(psi, trans,
                         keep=lambda z: all(state_to_label[s] == g for s, g in zip(z, gold_ids)))


def label_posteriors(psi, trans, state_to_label, n_labels):
    """p(y|x) for every label sequence y, as a dict."""
    T = len(psi)
    log_z = log_partition(psi, trans)
    out = {}
    for y in itertools.product(range(n_labels), repeat=T):
        ls = clamped_log_score(psi, trans, y, state_to_label)
        out[y] = math.exp(ls - log_z) if ls > -math.inf else 0.0
    return out


def random_lattice(rng, T, M, low=-2.0, high=2.0):
    return rng.uniform(low, high, size=(T, M)), rng.uniform(low, high, size=(M, M))
