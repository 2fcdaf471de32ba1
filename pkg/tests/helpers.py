"""Shared construction and oracle helpers for the test suite.

Finite differences here are the independent check on every hand-derived
Jacobian: plain central differences, no reuse of package derivative code.
"""

import numpy as np

from lowrank_rep import Phi, ThetaRect, ThetaSym, vech
from lowrank_rep.rngs import generator


def rng(seed):
    return generator(seed)


def random_phi(gen, p, r, max_norm=0.9, min_norm=0.05):
    """Chart point with ||A||_2 drawn uniformly in [min_norm, max_norm]."""
    if p == r:
        return Phi(p, r, np.zeros(0))
    A = gen.normal(size=(p - r, r))
    target = gen.uniform(min_norm, max_norm)
    A *= target / np.linalg.norm(A, 2)
    return Phi(p, r, A.reshape(-1, order="F"))


def random_core_sym(gen, r, pd=False, min_mag=0.4, max_mag=3.0):
    """Symmetric r x r core with eigenvalue magnitudes in [min_mag, max_mag]."""
    Q, _ = np.linalg.qr(gen.normal(size=(r, r)))
    mags = gen.uniform(min_mag, max_mag, size=r)
    signs = np.ones(r) if pd else gen.choice([-1.0, 1.0], size=r)
    return (Q * (signs * mags)) @ Q.T


def random_theta_sym(gen, p, r, pd=False, **kw):
    return ThetaSym(random_phi(gen, p, r), vech(random_core_sym(gen, r, pd=pd, **kw)))


def random_theta_rect(gen, p1, p2, r, min_sv=0.4, max_sv=2.5):
    """Rectangular chart point with full-column-rank M."""
    M = gen.normal(size=(p1, r))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    M = (U * gen.uniform(min_sv, max_sv, size=r)) @ Vt
    return ThetaRect(p1, random_phi(gen, p2, r), M.reshape(-1, order="F"))


def fd_jacobian(f, x, h=None):
    """Central-difference Jacobian of a vector-valued f at x."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-5 * (1.0 + np.max(np.abs(x), initial=0.0))
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((f(x + e) - f(x - e)) / (2.0 * h))
    return np.column_stack(cols) if cols else np.zeros((np.size(f(x)), 0))


def rel_err(approx, exact):
    denom = max(np.linalg.norm(exact), 1e-12)
    return np.linalg.norm(approx - exact) / denom
