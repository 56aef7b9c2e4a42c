"""Closed-form geometry of unimodular 2x2 real matrices.

Conventions fixed here and relied on by every other module:

* Lie algebra basis H = [[1,0],[0,-1]], E = [[0,1],[0,0]], F = [[0,0],[1,0]].
  A LieVector stores coefficients (h, e, f) in this basis; its norm is the
  plain Euclidean norm of the coefficient vector.
* adjoint(g) is the 3x3 matrix of the conjugation action X -> g X g^-1 in
  that basis.  group_norm(g) is the largest absolute entry over adjoint(g)
  and adjoint(g^-1); it satisfies group_norm(g) = group_norm(g^-1) and
  group_norm(g1 g2) <= 3 group_norm(g1) group_norm(g2).
* cartan(g) = (k1, t, k2) with g = R(k1) diag(e^{t/2}, e^{-t/2}) R(k2),
  t >= 0, R(phi) the counterclockwise rotation by phi.
* dist(g, h) = rho(g h^-1).  rho(u) is the Euclidean norm of the principal
  log when ||u - I||_F < 0.5, and sqrt(t^2 + theta^2) otherwise, where t is
  the Cartan radial part and theta the total rotation angle of u folded to
  [-pi, pi].  rho is exactly symmetric (rho(u) = rho(u^-1)) and dist is
  exactly right-invariant.  It agrees with the Lie-algebra norm to first
  order at the identity but is a quasi-metric: the triangle inequality
  carries a bounded defect near the branch seam (quantified in the tests).

Scalar operations work on GroupElement; the *_many functions operate on
(N, 2, 2) or (N, 3) float arrays and are the hot path for the experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "LogDomainError",
    "GroupElement",
    "LieVector",
    "CartanTriple",
    "mul",
    "adjoint",
    "group_norm",
    "log_map",
    "exp_map",
    "cartan",
    "dist",
    "fold_angle",
    "fix_det_many",
    "mul_many",
    "inv_many",
    "exp_many",
    "principal_log_many",
    "cartan_t_theta_many",
    "rho_many",
    "dist_many",
    "group_norm_many",
    "op_norm_many",
]

# Branch threshold for the principal log, in Frobenius distance from I.
LOG_BRANCH_FROBENIUS = 0.5
# Determinant invariant: |det - 1| <= DET_TOL after every operation; drift is
# corrected lazily by g -> g / sqrt(det g) once it exceeds DET_FIX.
DET_TOL = 1e-10
DET_FIX = 1e-12

_I2 = np.eye(2)


class LogDomainError(ValueError):
    """log_map was evaluated outside the guaranteed principal-log domain."""


def fold_angle(a):
    """Fold an angle (array ok) into [-pi, pi]."""
    return a - 2.0 * np.pi * np.round(a / (2.0 * np.pi))


# ---------------------------------------------------------------------------
# array kernels


def det_many(m: np.ndarray) -> np.ndarray:
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def fix_det_many(m: np.ndarray) -> np.ndarray:
    """Renormalize determinant drift in place-free fashion.

    Only matrices with |det - 1| > DET_FIX are rescaled; determinants must be
    positive (a negative determinant indicates corrupt input, not drift).
    """
    d = det_many(m)
    if np.any(d <= 0):
        raise ValueError("matrix with non-positive determinant")
    bad = np.abs(d - 1.0) > DET_FIX
    if not np.any(bad):
        return m
    out = np.array(m, copy=True)
    out[bad] /= np.sqrt(d[bad])[..., None, None]
    return out


def mul_many(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return fix_det_many(a @ b)


def inv_many(m: np.ndarray) -> np.ndarray:
    """Adjugate inverse; exact for det = 1 up to the det invariant."""
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out


def exp_many(v: np.ndarray) -> np.ndarray:
    """Exponential of (N, 3) Lie coefficients (h, e, f), closed form.

    For X = h H + e E + f F the square is (h^2 + e f) I, so exp splits into
    hyperbolic / elliptic / parabolic branches on the sign of h^2 + e f.
    """
    v = np.asarray(v, dtype=float)
    h, e, f = v[..., 0], v[..., 1], v[..., 2]
    disc = h * h + e * f
    s = np.sqrt(np.abs(disc))
    # cosh(s) resp. cos(s), and sinh(s)/s resp. sin(s)/s, merged smoothly.
    small = s < 1e-6
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(disc >= 0, np.cosh(s), np.cos(s))
        sc = np.where(disc >= 0, np.sinh(s), np.sin(s)) / s
    sc = np.where(small, 1.0 + disc / 6.0, sc)
    c = np.where(small, 1.0 + disc / 2.0, c)
    out = np.empty(v.shape[:-1] + (2, 2))
    out[..., 0, 0] = c + sc * h
    out[..., 0, 1] = sc * e
    out[..., 1, 0] = sc * f
    out[..., 1, 1] = c - sc * h
    return out


def _log_factor(c: np.ndarray) -> np.ndarray:
    # factor F(c) with  X = F(c) (u - c I),  c = tr(u)/2; analytic at c = 1.
    c = np.asarray(c, dtype=float)
    out = np.empty_like(c)
    hi = c > 1.0 + 1e-5
    lo = c < 1.0 - 1e-5
    mid = ~(hi | lo)
    out[hi] = np.arccosh(c[hi]) / np.sqrt(c[hi] * c[hi] - 1.0)
    out[lo] = np.arccos(np.clip(c[lo], -1.0, 1.0)) / np.sqrt(1.0 - c[lo] * c[lo])
    dm = c[mid] - 1.0
    out[mid] = 1.0 - dm / 3.0 + 7.0 * dm * dm / 90.0
    return out


def principal_log_many(u: np.ndarray) -> np.ndarray:
    """Principal-log coefficients (N, 3); caller guarantees tr(u) > -2."""
    c = 0.5 * (u[..., 0, 0] + u[..., 1, 1])
    f = _log_factor(c)
    return np.stack(
        [
            f * (u[..., 0, 0] - c),
            f * u[..., 0, 1],
            f * u[..., 1, 0],
        ],
        axis=-1,
    )


def frobenius_from_identity_many(u: np.ndarray) -> np.ndarray:
    d = u - _I2
    return np.sqrt((d * d).sum(axis=(-2, -1)))


def cartan_t_theta_many(u: np.ndarray):
    """Radial part t and total rotation angle theta, SVD-free.

    t = log(sigma_1 / sigma_2) from tau = ||u||_F^2 alone; theta is the
    rotation angle of the polar factor K = u P^-1 with P = sqrt(u^T u),
    already in (-pi, pi].  Both are continuous in u.
    """
    tau = (u * u).sum(axis=(-2, -1))
    rad = np.sqrt(np.maximum(tau - 2.0, 0.0))
    t = 2.0 * np.log((np.sqrt(tau + 2.0) + rad) / 2.0)
    # P = (u^T u + I) / sqrt(tau + 2) has det 1; K = u adj(P).
    ut = np.swapaxes(u, -1, -2)
    p = (ut @ u + _I2) / np.sqrt(tau + 2.0)[..., None, None]
    k = u @ inv_many(p)
    theta = np.arctan2(k[..., 1, 0], k[..., 0, 0])
    return t, theta


def rho_many(u: np.ndarray) -> np.ndarray:
    """Displacement rho(u) of (N, 2, 2) group elements from the identity."""
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 2
    if scalar:
        u = u[None]
    out = np.empty(u.shape[:-2])
    near = frobenius_from_identity_many(u) < LOG_BRANCH_FROBENIUS
    if np.any(near):
        lv = principal_log_many(u[near])
        out[near] = np.sqrt((lv * lv).sum(axis=-1))
    far = ~near
    if np.any(far):
        t, theta = cartan_t_theta_many(u[far])
        out[far] = np.hypot(t, theta)
    return out[0] if scalar else out


def dist_many(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return rho_many(a @ inv_many(b))


def adjoint_many(m: np.ndarray) -> np.ndarray:
    """(N, 3, 3) adjoint matrices in basis (H, E, F); columns are images."""
    a, b = m[..., 0, 0], m[..., 0, 1]
    c, d = m[..., 1, 0], m[..., 1, 1]
    out = np.empty(m.shape[:-2] + (3, 3))
    out[..., 0, 0] = a * d + b * c
    out[..., 0, 1] = -a * c
    out[..., 0, 2] = b * d
    out[..., 1, 0] = -2.0 * a * b
    out[..., 1, 1] = a * a
    out[..., 1, 2] = -b * b
    out[..., 2, 0] = 2.0 * c * d
    out[..., 2, 1] = -c * c
    out[..., 2, 2] = d * d
    return out


def group_norm_many(m: np.ndarray) -> np.ndarray:
    fwd = np.abs(adjoint_many(m)).max(axis=(-2, -1))
    bwd = np.abs(adjoint_many(inv_many(m))).max(axis=(-2, -1))
    return np.maximum(fwd, bwd)


def op_norm_many(m: np.ndarray) -> np.ndarray:
    """Largest singular value; for det 1 this is e^{t/2}."""
    tau = (m * m).sum(axis=(-2, -1))
    return (np.sqrt(tau + 2.0) + np.sqrt(np.maximum(tau - 2.0, 0.0))) / 2.0


# ---------------------------------------------------------------------------
# scalar object layer


@dataclass(frozen=True, eq=False)
class GroupElement:
    """Immutable unimodular 2x2 real matrix.

    The wrapped array is defensively copied and marked read-only; the
    determinant invariant |det - 1| <= 1e-10 is enforced on construction
    (with lazy renormalization) and preserved by the provided operations.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, copy=True)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("non-finite matrix entry")
        d = float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
        if d <= 0:
            raise ValueError(f"determinant must be positive, got {d}")
        if abs(d - 1.0) > DET_FIX:
            m /= math.sqrt(d)
        if abs(float(np.linalg.det(m)) - 1.0) > DET_TOL:
            raise ValueError("determinant drift beyond invariant")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    # constructors ---------------------------------------------------------

    @staticmethod
    def identity() -> "GroupElement":
        return GroupElement(_I2)

    @staticmethod
    def upper_unipotent(s: float) -> "GroupElement":
        return GroupElement(np.array([[1.0, s], [0.0, 1.0]]))

    @staticmethod
    def lower_unipotent(s: float) -> "GroupElement":
        return GroupElement(np.array([[1.0, 0.0], [s, 1.0]]))

    @staticmethod
    def rotation(phi: float) -> "GroupElement":
        c, s = math.cos(phi), math.sin(phi)
        return GroupElement(np.array([[c, -s], [s, c]]))

    @staticmethod
    def diagonal(t: float) -> "GroupElement":
        e = math.exp(0.5 * t)
        return GroupElement(np.array([[e, 0.0], [0.0, 1.0 / e]]))

    # operations -----------------------------------------------------------

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.matrix @ other.matrix)

    @cached_property
    def inv(self) -> "GroupElement":
        m = self.matrix
        return GroupElement(
            np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
        )

    @cached_property
    def norm(self) -> float:
        return float(group_norm_many(self.matrix[None])[0])

    def __repr__(self):
        m = self.matrix
        return (
            f"GroupElement([[{m[0, 0]:.12g}, {m[0, 1]:.12g}], "
            f"[{m[1, 0]:.12g}, {m[1, 1]:.12g}]])"
        )


@dataclass(frozen=True)
class LieVector:
    """Traceless 2x2 matrix stored as coefficients in the (H, E, F) basis."""

    h: float
    e: float
    f: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.h * self.h + self.e * self.e + self.f * self.f)

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.h, self.e], [self.f, -self.h]])

    @staticmethod
    def from_matrix(x: np.ndarray) -> "LieVector":
        x = np.asarray(x, dtype=float)
        if abs(x[0, 0] + x[1, 1]) > 1e-12:
            raise ValueError("matrix is not traceless")
        return LieVector(float(x[0, 0]), float(x[0, 1]), float(x[1, 0]))

    def scaled(self, a: float) -> "LieVector":
        return LieVector(a * self.h, a * self.e, a * self.f)


@dataclass(frozen=True)
class CartanTriple:
    """Angles and radial part of g = R(k1) diag(e^{t/2}, e^{-t/2}) R(k2)."""

    k1: float
    t: float
    k2: float

    @property
    def total_angle(self) -> float:
        """k1 + k2 folded to [-pi, pi]."""
        return float(fold_angle(self.k1 + self.k2))

    def compose(self) -> GroupElement:
        return (
            GroupElement.rotation(self.k1)
            @ GroupElement.diagonal(self.t)
            @ GroupElement.rotation(self.k2)
        )


def mul(g: GroupElement, h: GroupElement) -> GroupElement:
    return g @ h


def adjoint(g: GroupElement) -> np.ndarray:
    return adjoint_many(g.matrix[None])[0]


def group_norm(g: GroupElement) -> float:
    return g.norm


def exp_map(v: LieVector) -> GroupElement:
    return GroupElement(exp_many(np.array([v.h, v.e, v.f])))


def log_map(g: GroupElement) -> LieVector:
    """Principal log; raises LogDomainError outside ||g - I||_F < 0.5."""
    u = g.matrix
    fro = float(frobenius_from_identity_many(u[None])[0])
    if fro >= LOG_BRANCH_FROBENIUS:
        raise LogDomainError(
            f"||g - I||_F = {fro:.6g} is outside the principal-log domain"
        )
    c = principal_log_many(u[None])[0]
    return LieVector(float(c[0]), float(c[1]), float(c[2]))


def cartan(g: GroupElement) -> CartanTriple:
    """Rotation-diagonal-rotation decomposition via SVD with det +1 factors."""
    u_m, s, vh = np.linalg.svd(g.matrix)
    if np.linalg.det(u_m) < 0:
        # det(U) and det(V) share sign when det g > 0; flip both second axes.
        u_m = u_m.copy()
        vh = vh.copy()
        u_m[:, 1] *= -1.0
        vh[1, :] *= -1.0
    k1 = math.atan2(u_m[1, 0], u_m[0, 0])
    k2 = math.atan2(vh[1, 0], vh[0, 0])
    t = float(np.log(s[0] / s[1]))
    return CartanTriple(k1=k1, t=max(t, 0.0), k2=k2)


def dist(g: GroupElement, h: GroupElement) -> float:
    """Right-invariant displacement rho(g h^-1)."""
    return float(rho_many(g.matrix @ h.inv.matrix))
