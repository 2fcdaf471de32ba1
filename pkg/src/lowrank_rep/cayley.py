"""Cayley chart on tall orthonormal frames with a positive definite top block.

The chart covers O_plus(p, r), the set of p x r orthonormal frames U whose
leading r x r block is symmetric positive definite.  A frame is encoded by
the free matrix A of shape (p - r) x r through

    U(phi) = (I + X) (I - X)^{-1} I_{p x r},      phi = vec(A),

where X is the skew-symmetric embedding of A (block [[0, -A^T], [A, 0]]).
The chart is a bijection onto O_plus as long as ||A||_2 < 1, and I - X is
nonsingular for every A, with condition number at most sqrt(2).

All certificate constants here and downstream are explicit and hold
non-asymptotically; a Certificate records the observed quantity next to its
bound so callers can audit slack.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainViolation,
    NotOrthonormal,
    TopBlockNotPD,
)
from .matkit import commutation_matrix, kron, spectral_norm, unvec, vec

__all__ = [
    "Phi",
    "StiefelPlus",
    "Certificate",
    "GateNotMet",
    "skew_embed",
    "cayley_map",
    "cayley_inverse",
    "gamma_matrix",
    "cayley_jacobian",
    "taylor_certificate_U",
    "lipschitz_certificate_A",
]

# Open-domain guard: reject ||A||_2 >= 1 - DOMAIN_MARGIN.
DOMAIN_MARGIN = 1e-12
# Top block counts as positive definite when lambda_min(sym part) > this.
TOP_BLOCK_TOL = 1e-14
# Relative residual accepted from the (I - X) linear solves.
SOLVE_RTOL = 1e-10
ORTHONORMAL_TOL = 1e-8

# Certificates pass with a hair of headroom for roundoff in the bound itself.
CERT_RTOL = 1e-9


@dataclass(frozen=True)
class Certificate:
    """An observed quantity paired with its proven bound."""

    label: str
    observed: float
    bound: float

    @property
    def slack(self):
        return self.bound - self.observed

    @property
    def passed(self):
        return self.observed <= self.bound * (1.0 + CERT_RTOL)


@dataclass(frozen=True)
class GateNotMet:
    """Marker returned when a gated bound's precondition fails.

    The bound is then vacuous, not violated; batteries report these as
    not-applicable rather than as failures.
    """

    label: str
    observed_gate: float
    gate_bound: float


@dataclass(frozen=True)
class Phi:
    """Chart coordinates: p, r, and values = vec(A) of length (p - r) r.

    Construction validates ||A||_2 < 1 - 1e-12 (DomainViolation otherwise).
    """

    p: int
    r: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (1 <= self.r <= self.p):
            raise DimensionMismatch(f"need 1 <= r <= p, got p={self.p}, r={self.r}")
        v = np.atleast_1d(np.asarray(self.values, dtype=float)).ravel()
        if v.size != (self.p - self.r) * self.r:
            raise DimensionMismatch(
                f"phi length {v.size} != (p - r) r = {(self.p - self.r) * self.r}"
            )
        object.__setattr__(self, "values", v)
        norm = spectral_norm(self.A)
        if norm >= 1.0 - DOMAIN_MARGIN:
            raise DomainViolation(
                f"||A||_2 = {norm:.17g} outside the open chart domain"
            )

    @property
    def A(self):
        return unvec(self.values, (self.p - self.r, self.r))

    def copy_with(self, values):
        return Phi(self.p, self.r, values)


@dataclass(frozen=True)
class StiefelPlus:
    """Orthonormal p x r frame whose top r x r block is symmetric PD."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        U = np.asarray(self.matrix, dtype=float)
        if U.ndim != 2 or U.shape[0] < U.shape[1] or U.shape[1] < 1:
            raise DimensionMismatch(f"frame must be tall p x r, got {U.shape}")
        object.__setattr__(self, "matrix", U)
        dev = np.max(np.abs(U.T @ U - np.eye(U.shape[1])))
        if dev > ORTHONORMAL_TOL:
            raise NotOrthonormal(f"||U^T U - I||_max = {dev:.3e}")
        _check_top_block(U)

    @property
    def p(self):
        return self.matrix.shape[0]

    @property
    def r(self):
        return self.matrix.shape[1]


def _check_top_block(U):
    r = U.shape[1]
    Q1 = U[:r, :]
    sym = 0.5 * (Q1 + Q1.T)
    asym = np.max(np.abs(Q1 - Q1.T), initial=0.0)
    if asym > 1e-8:
        raise TopBlockNotPD(f"top block asymmetry {asym:.3e}")
    lam_min = float(np.linalg.eigvalsh(sym)[0])
    if lam_min <= TOP_BLOCK_TOL:
        raise TopBlockNotPD(f"lambda_min(top block) = {lam_min:.3e}")
    return Q1


def _as_frame_matrix(U):
    if isinstance(U, StiefelPlus):
        return U.matrix
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] < U.shape[1]:
        raise DimensionMismatch(f"frame must be tall p x r, got {U.shape}")
    dev = np.max(np.abs(U.T @ U - np.eye(U.shape[1])))
    if dev > ORTHONORMAL_TOL:
        raise NotOrthonormal(f"||U^T U - I||_max = {dev:.3e}")
    return U


def skew_embed(phi):
    """Skew-symmetric p x p matrix [[0, -A^T], [A, 0]] from chart coordinates."""
    p, r = phi.p, phi.r
    A = phi.A
    X = np.zeros((p, p))
    X[r:, :r] = A
    X[:r, r:] = -A.T
    return X


def _solve_against(X, B):
    # (I - X) Z = B with an explicit residual check; I - X is I plus skew,
    # hence nonsingular, but the check documents the accuracy contract.
    M = np.eye(X.shape[0]) - X
    Z = np.linalg.solve(M, B)
    resid = np.linalg.norm(M @ Z - B)
    if resid > SOLVE_RTOL * max(np.linalg.norm(B), 1e-300):
        raise ArithmeticError(f"linear solve residual {resid:.3e} too large")
    return Z


def cayley_map(phi):
    """Frame U(phi) = (I + X)(I - X)^{-1} I_{p x r}."""
    p, r = phi.p, phi.r
    X = skew_embed(phi)
    Ipr = np.eye(p)[:, :r]
    Z = _solve_against(X, Ipr)
    return StiefelPlus(Z + X @ Z)


def cayley_inverse(U):
    """Chart coordinates of a frame in O_plus.

    Accepts a StiefelPlus or a raw orthonormal array; raises TopBlockNotPD
    when the leading block is not symmetric positive definite.
    """
    M = _as_frame_matrix(U)
    p, r = M.shape
    Q1 = _check_top_block(M)
    Q2 = M[r:, :]
    # A = Q2 (I + Q1)^{-1}; I + Q1 is symmetric PD so the solve is stable.
    A = np.linalg.solve(np.eye(r) + Q1.T, Q2.T).T
    return Phi(p, r, vec(A))


def gamma_matrix(p, r):
    """Constant p^2 x (p - r) r matrix with Gamma vec(A) = vec(X).

    Gamma = (I - K_pp)(E1 kron E2), where E1 selects the first r coordinates
    and E2 the trailing p - r.  It does not depend on the chart point, and
    its spectral norm equals sqrt(2) whenever r < p.
    """
    if not (1 <= r <= p):
        raise DimensionMismatch(f"need 1 <= r <= p, got p={p}, r={r}")
    E1 = np.eye(p)[:, :r]        # Theta_1^T, p x r
    E2 = np.eye(p)[:, r:]        # Theta_2^T, p x (p - r)
    G = kron(E1, E2)
    return G - commutation_matrix(p, p) @ G


def cayley_jacobian(phi):
    """Jacobian DU(phi) of vec(U(phi)), shape (p r) x ((p - r) r).

    DU = 2 [I_{p x r}^T (I - X)^{-T} kron (I - X)^{-1}] Gamma, and
    ||DU||_2 <= 2 sqrt(2) uniformly over the chart domain.
    """
    p, r = phi.p, phi.r
    X = skew_embed(phi)
    S = _solve_against(X, np.eye(p))
    # I_{p x r}^T (I - X)^{-T} = (S I_{p x r})^T = S[:, :r]^T
    left = kron(S[:, :r].T, S)
    return 2.0 * left @ gamma_matrix(p, r)


def taylor_certificate_U(phi, phi0):
    """Lipschitz and first-order remainder certificates for the chart map.

    Returns (lipschitz, remainder):
      ||U - U0||_F <= 2 sqrt(2) ||phi - phi0||_2
      ||U - U0 - mat(DU(phi0)(phi - phi0))||_F <= 8 ||phi - phi0||_2^2
    """
    if (phi.p, phi.r) != (phi0.p, phi0.r):
        raise DimensionMismatch("chart points live on different (p, r)")
    U = cayley_map(phi).matrix
    U0 = cayley_map(phi0).matrix
    delta = phi.values - phi0.values
    dnorm = float(np.linalg.norm(delta))
    diff = U - U0
    lip = Certificate(
        label="cayley_lipschitz_U",
        observed=float(np.linalg.norm(diff)),
        bound=2.0 * np.sqrt(2.0) * dnorm,
    )
    lin = unvec(cayley_jacobian(phi0) @ delta, (phi.p, phi.r))
    rem = Certificate(
        label="cayley_taylor_remainder_U",
        observed=float(np.linalg.norm(diff - lin)),
        bound=8.0 * dnorm * dnorm,
    )
    return lip, rem


def lipschitz_certificate_A(U, U0):
    """Certificate for the inverse chart: ||A(U) - A(U0)||_F <= 2 ||U - U0||_F."""
    M = _as_frame_matrix(U)
    M0 = _as_frame_matrix(U0)
    if M.shape != M0.shape:
        raise DimensionMismatch(f"shape mismatch {M.shape} vs {M0.shape}")
    A = cayley_inverse(M).A
    A0 = cayley_inverse(M0).A
    return Certificate(
        label="cayley_inverse_lipschitz_A",
        observed=float(np.linalg.norm(A - A0)),
        bound=2.0 * float(np.linalg.norm(M - M0)),
    )
