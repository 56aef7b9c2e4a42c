"""The space of unimodular planar lattices and its coarse geometry.

A point of the quotient space X is a coset g Lambda with Lambda the integer
unimodular group; equivalently the lattice spanned by the columns of g.  The
canonical chart used throughout:

    rep^-1 = n(x) a(y) k(theta),   n(x) = [[1,x],[0,1]],
    a(y) = [[sqrt y, 0],[0, 1/sqrt y]],  k(theta) = rotation by theta,

with theta folded to [0, pi) because -I acts trivially on the half-plane
coordinates but flips the rotation fiber.  Right multiplication by lambda
acts on w = rep^-1 . i by the Moebius action of lambda^-1, so Gauss
reduction of the column basis lands w in the classical fundamental domain
|x| <= 1/2, x^2 + y^2 >= 1.  In this chart the shortest lattice vector has
length s = y^{-1/2}, Haar measure is dx dy/y^2 dtheta, the total mass of
the domain is pi^2/3, and the normalized mass above height y0 is (3/pi)/y0.

Heights: ht(p) = max(1, s(p)^{-kappa}); the region X(h) = {ht <= h} is the
part of the space at distance ~ 2 log h / kappa from the cusp.

Distances between cosets minimize the group displacement over lambda:
dist_X(p, q) = min_lambda rho(rep_p lambda rep_q^-1).  The minimizer is
found by a sound two-stage enumeration: a cheap feasible candidate bounds
the answer by D, and every lambda that could do better has entries inside
an explicit window (|lambda| <= sigma_1(u) |A^-1| |B| entrywise with
log sigma_1(u) <= sqrt(2) rho(u)), which is then enumerated exhaustively.
For pairs of *reduced* representatives at distance below NEAR_RADIUS the
minimizer always lies in a fixed table of local identification moves
(integer matrices with entries in [-2, 2]); the hot paths use that table
and the full enumeration remains the oracle.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .group_core import GroupElement, inv_many, rho_many

__all__ = [
    "FUNDAMENTAL_MASS",
    "NEAR_RADIUS",
    "HeightParams",
    "SpacePoint",
    "reduce",
    "reduce_many",
    "chart_to_rep_many",
    "height",
    "height_many",
    "shortest_vector_bruteforce",
    "dist_X",
    "dist_X_oracle",
    "coset_dist_reduced_many",
    "injectivity_radius",
    "net",
    "haar_sample",
    "haar_strip_mass",
    "lattice_points_in_ball",
    "haar_ball_volume",
]

# Total Haar mass of the fundamental domain (area pi/3 times theta-range pi).
FUNDAMENTAL_MASS = math.pi * math.pi / 3.0
# Bottom of the y-range of the reduced domain.
Y_FLOOR = math.sqrt(3.0) / 2.0
# Radius below which the local-move table is exhaustive for reduced pairs.
NEAR_RADIUS = 0.45

_MAX_GAUSS_ITERS = 128
_ENUM_BUDGET = 5_000_000


# ---------------------------------------------------------------------------
# reduction


def reduce_many(m: np.ndarray):
    """Reduce (N, 2, 2) representatives to canonical fundamental-domain form.

    Returns (reps, x, y, theta, s).  Gauss reduction of the column basis
    (swap with sign, then shear by the rounded projection) composed with a
    final sign flip that folds theta into [0, pi).  Idempotent bit for bit
    on already-canonical input.
    """
    g = np.array(m, dtype=float, copy=True)
    if g.ndim == 2:
        g = g[None]
    for _ in range(_MAX_GAUSS_ITERS):
        v1 = g[..., :, 0]
        v2 = g[..., :, 1]
        n1 = (v1 * v1).sum(-1)
        n2 = (v2 * v2).sum(-1)
        swap = n2 < n1
        if swap.any():
            keep = v1[swap].copy()
            g[swap, :, 0] = v2[swap]
            g[swap, :, 1] = -keep
            v1 = g[..., :, 0]
            v2 = g[..., :, 1]
            n1 = (v1 * v1).sum(-1)
        q = np.rint((v1 * v2).sum(-1) / n1)
        if not swap.any() and not q.any():
            break
        g[..., :, 1] = v2 - q[..., None] * v1
    else:  # pragma: no cover - loop is provably finite on sane input
        raise RuntimeError("column reduction did not terminate")

    # canonical sign: sin(theta) = -c / ||v1|| must be nonnegative, and a > 0
    # when c = 0; a pure sign rule keeps the fold exactly idempotent
    c0 = g[..., 1, 0] + 0.0
    a0 = g[..., 0, 0]
    flip = (c0 > 0.0) | ((c0 == 0.0) & (a0 < 0.0))
    if flip.any():
        g[flip] *= -1.0
    a = g[..., 0, 0]
    b = g[..., 0, 1]
    c = g[..., 1, 0]
    d = g[..., 1, 1]
    theta = np.arctan2(-c, a) + 0.0
    nsq = a * a + c * c
    s = np.sqrt(nsq)
    y = 1.0 / nsq
    x = -(a * b + c * d) / nsq + 0.0
    return g, x, y, theta, s


def chart_to_rep_many(x, y, theta) -> np.ndarray:
    """Representatives with rep^-1 = n(x) a(y) k(theta); vectorized."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    ry = np.sqrt(y)
    ct, st = np.cos(theta), np.sin(theta)
    # rep = k(-theta) a(y)^-1 n(-x)
    out = np.empty(np.broadcast(x, y, theta).shape + (2, 2))
    out[..., 0, 0] = ct / ry
    out[..., 0, 1] = -ct * x / ry + st * ry
    out[..., 1, 0] = -st / ry
    out[..., 1, 1] = st * x / ry + ct * ry
    return out


@dataclass(frozen=True)
class HeightParams:
    """Height exponent; ht(p) = max(1, s(p)^-kappa)."""

    kappa: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


@dataclass(frozen=True, eq=False)
class SpacePoint:
    """A reduced coset representative with its chart coordinates.

    Construct through reduce() or haar_sample(); the fields satisfy
    |x| <= 1/2, x^2 + y^2 >= 1, theta in [0, pi), s = y^{-1/2} = length of
    the shortest nonzero lattice vector.
    """

    rep: GroupElement
    x: float
    y: float
    theta: float
    s: float
    _height_cache: dict = field(default_factory=dict, repr=False)

    @property
    def iwasawa(self):
        return (self.x, self.y, self.theta)

    def height(self, params: HeightParams = HeightParams()) -> float:
        v = self._height_cache.get(params.kappa)
        if v is None:
            v = max(1.0, self.s ** (-params.kappa))
            self._height_cache[params.kappa] = v
        return v


def _point_from_reduced(rep_mat: np.ndarray, x, y, theta, s) -> SpacePoint:
    return SpacePoint(
        rep=GroupElement(rep_mat),
        x=float(x),
        y=float(y),
        theta=float(theta),
        s=float(s),
    )


def reduce(g) -> SpacePoint:
    """Canonical fundamental-domain representative of the coset of g."""
    mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=float)
    reps, x, y, theta, s = reduce_many(mat[None])
    return _point_from_reduced(reps[0], x[0], y[0], theta[0], s[0])


def points_from_mats(mats: np.ndarray) -> list:
    reps, x, y, theta, s = reduce_many(mats)
    return [
        _point_from_reduced(reps[i], x[i], y[i], theta[i], s[i])
        for i in range(len(reps))
    ]


# ---------------------------------------------------------------------------
# heights


def height(p: SpacePoint, params: HeightParams = HeightParams()) -> float:
    return p.height(params)


def height_many(s: np.ndarray, kappa: float = 1.0) -> np.ndarray:
    return np.maximum(1.0, np.asarray(s) ** (-kappa))


def shortest_vector_bruteforce(p: SpacePoint, bound: int = 50) -> float:
    """Shortest nonzero lattice vector by exhaustive integer search."""
    rng = np.arange(-bound, bound + 1)
    u, v = np.meshgrid(rng, rng, indexing="ij")
    coeff = np.stack([u.ravel(), v.ravel()], axis=1).astype(float)
    coeff = coeff[(coeff != 0).any(axis=1)]
    vecs = coeff @ p.rep.matrix.T
    return float(np.sqrt((vecs * vecs).sum(1)).min())


# ---------------------------------------------------------------------------
# integer enumeration machinery


def _bezout(c: int, d: int):
    # returns (a0, b0) with a0 d - b0 c = 1; gcd(c, d) must be 1
    old_r, r = c, d
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        qq = old_r // r
        old_r, r = r, old_r - qq * r
        old_s, s = s, old_s - qq * s
        old_t, t = t, old_t - qq * t
    # old_s * c + old_t * d = old_r = +-1
    if old_r == -1:
        old_s, old_t = -old_s, -old_t
    return old_t, -old_s


def _unimodular_in_window(w: np.ndarray, budget: int = _ENUM_BUDGET) -> np.ndarray:
    """All integer matrices with det 1 and |entry_ij| <= w_ij, as (K, 2, 2).

    Enumerates coprime bottom rows and the shear family over each; the
    windows w come from a proved displacement bound, so the result is an
    exhaustive candidate set for the coset-distance minimizer.
    """
    w00, w01 = float(w[0, 0]), float(w[0, 1])
    w10, w11 = float(w[1, 0]), float(w[1, 1])
    cmax = int(math.floor(w10))
    dmax = int(math.floor(w11))
    if (2 * cmax + 1) * (2 * dmax + 1) > budget:
        raise RuntimeError("integer enumeration window exceeds budget")
    cs = np.arange(-cmax, cmax + 1)
    ds = np.arange(-dmax, dmax + 1)
    cg, dg = np.meshgrid(cs, ds, indexing="ij")
    cg = cg.ravel()
    dg = dg.ravel()
    keep = np.gcd(np.abs(cg), np.abs(dg)) == 1
    cg, dg = cg[keep], dg[keep]

    out = []
    total = 0
    for c, d in zip(cg.tolist(), dg.tolist()):
        a0, b0 = _bezout(c, d)
        # a = a0 + t c in [-w00, w00]; b = b0 + t d in [-w01, w01]
        lo, hi = -np.inf, np.inf
        if c > 0:
            lo, hi = (-w00 - a0) / c, (w00 - a0) / c
        elif c < 0:
            lo, hi = (w00 - a0) / c, (-w00 - a0) / c
        elif abs(a0) > w00:
            continue
        if d > 0:
            lo, hi = max(lo, (-w01 - b0) / d), min(hi, (w01 - b0) / d)
        elif d < 0:
            lo, hi = max(lo, (w01 - b0) / d), min(hi, (-w01 - b0) / d)
        elif abs(b0) > w01:
            continue
        t0, t1 = int(math.ceil(lo)), int(math.floor(hi))
        if t1 < t0:
            continue
        n = t1 - t0 + 1
        total += n
        if total > budget:
            raise RuntimeError("integer enumeration exceeds budget")
        t = np.arange(t0, t1 + 1)
        lam = np.empty((n, 2, 2), dtype=np.int64)
        lam[:, 0, 0] = a0 + t * c
        lam[:, 0, 1] = b0 + t * d
        lam[:, 1, 0] = c
        lam[:, 1, 1] = d
        out.append(lam)
    if not out:
        return np.empty((0, 2, 2), dtype=np.int64)
    return np.concatenate(out, axis=0)


def _local_moves() -> np.ndarray:
    # All det-1 integer matrices with entries in [-2, 2]; covers every
    # fundamental-domain identification relevant below NEAR_RADIUS.
    r = np.arange(-2, 3)
    a, b, c, d = np.meshgrid(r, r, r, r, indexing="ij")
    det = a * d - b * c
    mask = det == 1
    lam = np.stack(
        [a[mask], b[mask], c[mask], d[mask]], axis=1
    ).reshape(-1, 2, 2)
    order = np.lexsort(
        (lam[:, 1, 1], lam[:, 1, 0], lam[:, 0, 1], lam[:, 0, 0])
    )
    return lam[order].astype(float)


LOCAL_MOVES = _local_moves()


def _displacement_sigma(dd: float) -> float:
    """Upper bound for sigma_1(u) given rho(u) <= dd.

    Cartan branch: log sigma_1 = t/2 <= rho/2.  Log branch: rho is the
    coefficient norm of X with u = exp(X), sigma_1(X) <= (2/sqrt 3) rho
    (the extremal X is nilpotent), so sigma_1(u) <= exp((2/sqrt3) rho);
    that branch only fires for rho <= 0.53, whence the cap.
    """
    return math.exp(max(0.5 * dd, (2.0 / math.sqrt(3.0)) * min(dd, 0.55)))


def _entry_window(a_inv_abs, b_abs, dd: float) -> np.ndarray:
    su = _displacement_sigma(dd)
    return su * np.outer(a_inv_abs.sum(axis=1), b_abs.sum(axis=0))


def _min_over_candidates(a_mat, b_inv, lams) -> float:
    if len(lams) == 0:
        return math.inf
    prods = a_mat[None] @ lams.astype(float) @ b_inv[None]
    return float(rho_many(prods).min())


def dist_X(p: SpacePoint, q: SpacePoint, enlarge: float = 1.0) -> float:
    """Exact coset distance min_lambda rho(rep_p lambda rep_q^-1).

    A feasible candidate (local moves plus the rounding of rep_p^-1 rep_q)
    bounds the answer; the full integer window for that bound is then
    enumerated.  enlarge > 1 widens the window by that factor and is used
    by the brute-force oracle tests.
    """
    a_mat = p.rep.matrix
    b_mat = q.rep.matrix
    b_inv = inv_many(b_mat)
    v = inv_many(a_mat) @ b_mat
    grid = np.stack(np.meshgrid(*([[-1.0, 0.0, 1.0]] * 4), indexing="ij"), -1)
    cand = np.rint(v).ravel() + grid.reshape(-1, 4)
    cand = cand.reshape(-1, 2, 2)
    dets = cand[:, 0, 0] * cand[:, 1, 1] - cand[:, 0, 1] * cand[:, 1, 0]
    cand = cand[dets == 1.0]
    d0 = _min_over_candidates(a_mat, b_inv, np.concatenate([LOCAL_MOVES, cand]))
    w = _entry_window(np.abs(inv_many(a_mat)), np.abs(b_mat), d0) * enlarge
    lams = _unimodular_in_window(w)
    return min(d0, _min_over_candidates(a_mat, b_inv, lams))


def dist_X_oracle(p: SpacePoint, q: SpacePoint) -> float:
    """Brute-force reference: the sound window enlarged fourfold."""
    return dist_X(p, q, enlarge=4.0)


def _low_moves() -> np.ndarray:
    # Integer det-1 matrices with |c| = 1: b is then determined by (a, d).
    # For reduced pairs with y1 y2 <= 2.83 these, the shears, and their
    # negatives exhaust every possible minimizer below NEAR_RADIUS (the
    # entry bounds give |c| <= 1 and |a|, |d| <= 3).
    rng = np.arange(-3, 4)
    a, d, c = np.meshgrid(rng, rng, np.array([-1, 1]), indexing="ij")
    b = (a * d - 1) * c  # b = (ad - 1)/c with c = +-1
    lam = np.stack([a, b, c, d], axis=-1).reshape(-1, 2, 2)
    return lam.astype(float)


_LOW_MOVES = _low_moves()

# y1 y2 above this forces c = 0 in any minimizer below NEAR_RADIUS.
_LOW_BAND_Y2 = 2.83
# rho_reported / rho_cartan lies in [1/2, sqrt 2] (extremes: diagonal and
# rotation directions); 2.9 > 2 sqrt 2 covers the two-sided chain, and
# beyond 1.07 the log branch cannot fire so the profile value is exact.
_SHEAR_SLACK = 2.9
_SHEAR_CERTAIN = 1.07


def _charts_from_reduced(m: np.ndarray):
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    c = m[..., 1, 0]
    d = m[..., 1, 1]
    nsq = a * a + c * c
    y = 1.0 / nsq
    x = -(a * b + c * d) / nsq
    theta = np.arctan2(-c, a)
    return x, y, theta


def coset_dist_reduced_many(a_mats: np.ndarray, b_mats: np.ndarray) -> np.ndarray:
    """Coset distance for batches of *reduced* representatives, pairwise.

    Exact whenever the true distance is below NEAR_RADIUS, an upper bound
    otherwise.  The minimizer decomposes: for y1 y2 above the low band the
    entry bounds force lambda = +-T^m, and the shear family has the closed
    Cartan profile rho(m)^2 = t(tau)^2 + fold(dtheta - atan(q/P))^2 with
    q = (m + x2 - x1)/sqrt(y1 y2); the profile is scanned in closed form
    and only candidates that could undercut its minimum through the branch
    seam are evaluated exactly.  Low-band pairs also check the fixed
    |c| = 1 table.
    """
    a_mats = np.asarray(a_mats, dtype=float)
    b_mats = np.asarray(b_mats, dtype=float)
    n = len(a_mats)
    if n == 0:
        return np.empty(0)
    x1, y1, t1 = _charts_from_reduced(a_mats)
    x2, y2, t2 = _charts_from_reduced(b_mats)
    gm = np.sqrt(y1 * y2)
    pp = np.sqrt(y2 / y1) + np.sqrt(y1 / y2)
    base = x2 - x1
    dth = t2 - t1

    # scan all m with a chance of profile value <= _SHEAR_CERTAIN
    lo = np.ceil(-1.14 * gm - base).astype(np.int64)
    hi = np.floor(1.14 * gm - base).astype(np.int64)
    lo = np.minimum(lo, np.floor(-base).astype(np.int64))
    hi = np.maximum(hi, np.ceil(-base).astype(np.int64))
    counts = hi - lo + 1
    pair = np.repeat(np.arange(n), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    m_flat = (np.arange(len(pair)) - starts[pair] + lo[pair]).astype(float)

    q = (m_flat + base[pair]) / gm[pair]
    tau = pp[pair] ** 2 - 2.0 + q * q
    t = 2.0 * np.log((np.sqrt(tau + 2.0) + np.sqrt(np.maximum(tau - 2.0, 0.0))) / 2.0)
    thbar = dth[pair] - np.arctan2(q, pp[pair])
    thbar = np.abs(thbar - 2.0 * np.pi * np.round(thbar / (2.0 * np.pi)))
    prof = np.hypot(t, np.minimum(thbar, np.pi - thbar))

    fm = np.full(n, np.inf)
    np.minimum.at(fm, pair, prof)
    keep = prof <= np.minimum(_SHEAR_SLACK * fm[pair] + 1e-9, _SHEAR_CERTAIN)
    # always evaluate at least the profile argmin of every pair
    keep |= prof <= fm[pair] + 1e-15

    kp = pair[keep]
    km = m_flat[keep]
    b_inv = inv_many(b_mats)
    tb = b_inv[kp]
    shear = np.empty_like(tb)  # T^m B^-1 built in place
    shear[:, 0, 0] = tb[:, 0, 0] + km * tb[:, 1, 0]
    shear[:, 0, 1] = tb[:, 0, 1] + km * tb[:, 1, 1]
    shear[:, 1, 0] = tb[:, 1, 0]
    shear[:, 1, 1] = tb[:, 1, 1]
    u = a_mats[kp] @ shear
    vals = np.minimum(rho_many(u), rho_many(-u))
    out = np.full(n, np.inf)
    np.minimum.at(out, kp, vals)

    low = np.nonzero(y1 * y2 <= _LOW_BAND_Y2)[0]
    if len(low):
        ul = a_mats[low, None] @ (_LOW_MOVES[None] @ b_inv[low, None])
        out[low] = np.minimum(out[low], rho_many(ul).min(axis=1))
    return out


def injectivity_radius(p: SpacePoint) -> float:
    """Half the smallest displacement of a nontrivial conjugate lattice map."""
    a_mat = p.rep.matrix
    a_inv = inv_many(a_mat)
    moves = LOCAL_MOVES
    trivial = (moves[:, 0, 0] * moves[:, 1, 1] == 1.0) & (
        (moves[:, 0, 1] == 0) & (moves[:, 1, 0] == 0)
    )
    d0 = _min_over_candidates(a_mat, a_inv, moves[~trivial])
    w = _entry_window(np.abs(a_inv), np.abs(a_mat), d0)
    lams = _unimodular_in_window(w)
    if len(lams):
        ident = (
            (lams[:, 0, 1] == 0)
            & (lams[:, 1, 0] == 0)
            & (lams[:, 0, 0] * lams[:, 1, 1] == 1)
        )
        lams = lams[~ident]
    return 0.5 * min(d0, _min_over_candidates(a_mat, a_inv, lams))


# ---------------------------------------------------------------------------
# Haar sampling


def _haar_xy(n: int, rng: np.random.Generator, y_max: float):
    xs = np.empty(n)
    ys = np.empty(n)
    got = 0
    inv_floor = 1.0 / Y_FLOOR
    inv_top = 1.0 / y_max
    while got < n:
        m = max(1024, 2 * (n - got))
        x = rng.uniform(-0.5, 0.5, m)
        u = rng.uniform(0.0, 1.0, m)
        y = 1.0 / (inv_floor - u * (inv_floor - inv_top))
        ok = x * x + y * y >= 1.0
        k = min(int(ok.sum()), n - got)
        xs[got : got + k] = x[ok][:k]
        ys[got : got + k] = y[ok][:k]
        got += k
    return xs, ys


def haar_sample(
    n: int,
    rng: np.random.Generator,
    y_max: float = 1.0e3,
    h_bound: Optional[float] = None,
    kappa: float = 1.0,
) -> list:
    """i.i.d. points from normalized dx dy/y^2 dtheta on the truncated domain.

    y is inverse-CDF sampled on [sqrt(3)/2, y_max] and (x, y) rejected into
    the domain; the truncation deficit is (3/pi)/y_max of the full mass.
    h_bound further restricts to X(h_bound) = {y <= h_bound^(2/kappa)}.
    """
    top = y_max
    if h_bound is not None:
        top = min(top, max(1.0, h_bound ** (2.0 / kappa)))
    xs, ys = _haar_xy(n, rng, top)
    thetas = rng.uniform(0.0, np.pi, n)
    return points_from_mats(chart_to_rep_many(xs, ys, thetas))


def haar_sample_mats(
    n: int,
    rng: np.random.Generator,
    y_max: float = 1.0e3,
):
    """Array version of haar_sample: reduced reps plus chart coordinates."""
    xs, ys = _haar_xy(n, rng, y_max)
    thetas = rng.uniform(0.0, np.pi, n)
    return reduce_many(chart_to_rep_many(xs, ys, thetas))


def haar_strip_mass(y_lo: float, y_max: float = math.inf) -> float:
    """Normalized Haar mass of {y >= y_lo}, truncation at y_max.

    Valid for y_lo >= 1, where the domain is the full unit-width strip; the
    area of the whole domain is pi/3, so the untruncated mass is (3/pi)/y_lo.
    """
    if y_lo < 1.0:
        raise ValueError("strip mass formula needs y_lo >= 1")
    top = 0.0 if math.isinf(y_max) else 1.0 / y_max
    return (1.0 / y_lo - top) / (math.pi / 3.0 - top)


# ---------------------------------------------------------------------------
# lattice points and ball volumes


def lattice_points_in_ball(radius: float) -> np.ndarray:
    """Integer det-1 matrices with rho(lambda) <= radius, lexsorted."""
    bound = _displacement_sigma(radius)
    w = np.full((2, 2), bound)
    lams = _unimodular_in_window(w)
    if len(lams) == 0:
        return lams
    keep = rho_many(lams.astype(float)) <= radius
    lams = lams[keep]
    order = np.lexsort(
        (lams[:, 1, 1], lams[:, 1, 0], lams[:, 0, 1], lams[:, 0, 0])
    )
    return lams[order]


_VOLUME_SEED = 0x9E3779B97F4A7C15
_volume_cache: dict = {}


def haar_ball_volume(delta: float, rel_se: float = 0.01, max_samples: int = 1 << 22):
    """Monte Carlo Haar volume of the group ball {rho < delta}.

    Haar is dx dy/y^2 dtheta in the n a k chart (no extra normalization;
    the reported reference is haar_ball_volume(1.0)).  The sampling box is
    derived from proved displacement bounds, so it always contains the
    ball.  Returns (volume, standard_error); results are cached per
    (delta, rel_se) and seeded deterministically from the bits of delta.
    """
    key = (round(float(delta), 12), rel_se)
    hit = _volume_cache.get(key)
    if hit is not None:
        return hit
    # Box bounds from rho(u) < delta, all O(delta): the first column of u
    # has norm in [1/sigma_1, sigma_1] so |ln y| <= 2 ln sigma_1; the
    # column inner product gives |x| <= (sigma_1^4 - 1)/2; the fiber angle
    # is within 1.2 delta + the polar angle of the n a part.
    lsig = math.log(_displacement_sigma(delta))
    w_lny = 2.0 * lsig
    w_x = 0.5 * (math.exp(4.0 * lsig) - 1.0)
    w_th = min(math.pi, 1.2 * delta + math.atan(w_x / (math.exp(-w_lny) + 1.0)))
    box = (2.0 * w_lny) * (2.0 * w_x) * (2.0 * w_th)

    entropy = _VOLUME_SEED ^ int.from_bytes(struct.pack("<d", delta), "little")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
    total = 0
    acc = 0.0
    acc2 = 0.0
    vol = se = 0.0
    edge = 0.0
    while total < max_samples:
        m = 1 << 17
        lny = rng.uniform(-w_lny, w_lny, m)
        x = rng.uniform(-w_x, w_x, m)
        th = rng.uniform(-w_th, w_th, m)
        y = np.exp(lny)
        u = inv_many(chart_to_rep_many(x, y, th))  # u = n a k itself
        inside = rho_many(u) < delta
        vals = np.where(inside, 1.0 / y, 0.0)
        if inside.any():
            # guard: accepted samples must stay clear of the box faces
            edge = max(
                edge,
                float(np.abs(lny[inside]).max()) / w_lny,
                float(np.abs(x[inside]).max()) / w_x,
                float(np.abs(th[inside]).max()) / w_th,
            )
        acc += vals.sum()
        acc2 += (vals * vals).sum()
        total += m
        mean = acc / total
        var = max(acc2 / total - mean * mean, 0.0)
        vol = box * mean
        se = box * math.sqrt(var / total)
        if vol > 0 and se / vol <= rel_se and total >= (1 << 18):
            break
    if edge > 0.995:  # pragma: no cover - indicates a bound violation
        raise RuntimeError("ball sample touched the bounding box face")
    _volume_cache[key] = (vol, se)
    return vol, se


# ---------------------------------------------------------------------------
# near-pair machinery for reduced points

# Chart windows containing every pair at coset distance <= NEAR_RADIUS.
# C_LNY = 2 * (2/sqrt 3) is proved via the singular-value bound above; the
# theta and x constants are generous empirical envelopes validated in the
# tests (worst observed ratios stay below half of these).
C_LNY = 2.32
C_TH = 6.0
C_X = 6.0


# Wall-crossing moves whose chart continuations the near-pair boxes must
# consider: the arc inversion and the order-3 corner rotations (squares
# included).  x-wall crossings are absorbed by the x-wrap inside the box.
_ALIAS_MATS = (
    np.array([[0.0, -1.0], [1.0, 0.0]]),
    np.array([[0.0, -1.0], [1.0, -1.0]]),
    np.array([[-1.0, 1.0], [-1.0, 0.0]]),
    np.array([[0.0, -1.0], [1.0, 1.0]]),
    np.array([[-1.0, -1.0], [1.0, 0.0]]),
)


def _alias_chart(x, y, th, lam):
    """Chart of the representative rep lam: the Moebius image of w under
    lam^-1 with the frame angle picked up from the Iwasawa bottom row."""
    al, bl = lam[0, 0], lam[0, 1]
    cl, dl = lam[1, 0], lam[1, 1]
    den = (al - cl * x) ** 2 + (cl * y) ** 2
    xa = ((dl * x - bl) * (al - cl * x) + cl * dl * y * y) / den
    ya = y / den
    ta = th + np.arctan2(-cl * y, al - cl * x)
    return xa, ya, ta - np.pi * np.floor(ta / np.pi)


def _box_near(x1, y1, t1, x2, y2, t2, r):
    dly = np.abs(np.log(y1) - np.log(y2))
    dth = np.abs(t1 - t2)
    dth = np.minimum(dth, np.pi - dth)
    dx = np.abs(x1 - x2)
    dx = np.minimum(dx, np.abs(np.abs(x1 - x2) - 1.0))
    return (
        (dly <= C_LNY * r)
        & (dth <= C_TH * r)
        & (dx <= C_X * r * np.maximum(y1, y2))
    )


def chart_near_mask(x1, y1, t1, x2, y2, t2, r):
    """True wherever the pair *could* be within coset distance r <= 0.45.

    Sound overapproximation: the direct chart box, widened by the x-wrap
    and by the wall-crossing continuations in either direction.  Inputs
    broadcast.
    """
    m = _box_near(x1, y1, t1, x2, y2, t2, r)
    for lam in _ALIAS_MATS:
        xa, ya, ta = _alias_chart(x1, y1, t1, lam)
        m |= _box_near(xa, ya, ta, x2, y2, t2, r)
        xb, yb, tb = _alias_chart(x2, y2, t2, lam)
        m |= _box_near(x1, y1, t1, xb, yb, tb, r)
    return m


def dist_to_point_many(mats, x, y, th, p: SpacePoint, cutoff: float) -> np.ndarray:
    """Coset distances from reduced (N,2,2) reps to one reduced point.

    Exact below cutoff (cutoff <= NEAR_RADIUS); entries whose chart boxes
    rule out proximity are returned as +inf without an exact evaluation.
    """
    if cutoff > NEAR_RADIUS:
        raise ValueError("cutoff beyond validated near-pair radius")
    out = np.full(len(mats), np.inf)
    sel = chart_near_mask(x, y, th, p.x, p.y, p.theta, cutoff)
    if sel.any():
        b = np.broadcast_to(p.rep.matrix, (int(sel.sum()), 2, 2))
        out[sel] = coset_dist_reduced_many(mats[sel], b)
    return out


class ReducedPointSet:
    """Growable set of reduced points hashed on coarse (ln y, theta) cells.

    Supports sound "is anything within r" queries for r <= NEAR_RADIUS;
    each point is registered in its own cell and, near the arc wall, in the
    cell of its continuation chart, so slab lookups never miss a near pair.
    """

    def __init__(self, r: float, capacity: int = 1024):
        self.r = r
        self.cly = 3.0 * r
        self.n_th = max(1, int(math.ceil(math.pi / (3.0 * r))))
        self.cth = math.pi / self.n_th
        # windows sized so the slab always spans the chart boxes
        self.dy_win = int(math.ceil(C_LNY * r / self.cly))
        self.dt_win = min(self.n_th // 2 + 1, int(math.ceil(C_TH * r / self.cth)))
        self.cells: dict = {}
        self.n = 0
        self.mats = np.empty((capacity, 2, 2))
        self.xs = np.empty(capacity)
        self.ys = np.empty(capacity)
        self.ths = np.empty(capacity)

    def _grow(self):
        cap = 2 * len(self.xs)
        for name in ("mats", "xs", "ys", "ths"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:])
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def _cell(self, y: float, th: float):
        return int(math.floor(math.log(y) / self.cly)), int(
            math.floor(th / self.cth)
        ) % self.n_th

    def insert(self, mat, x: float, y: float, th: float):
        if self.n == len(self.xs):
            self._grow()
        i = self.n
        self.mats[i] = mat
        self.xs[i] = x
        self.ys[i] = y
        self.ths[i] = th
        self.n = i + 1
        keys = {self._cell(y, th)}
        if abs(x * x + y * y - 1.0) < 8.0 * self.r:
            for lam in _ALIAS_MATS:
                _, ya, ta = _alias_chart(x, y, th, lam)
                keys.add(self._cell(float(ya), float(ta)))
        for k in keys:
            self.cells.setdefault(k, []).append(i)

    def _slab_cells(self, y: float, th: float, idxs: list):
        iy, it = self._cell(y, th)
        for dy in range(-self.dy_win, self.dy_win + 1):
            for dt in range(-self.dt_win, self.dt_win + 1):
                got = self.cells.get((iy + dy, (it + dt) % self.n_th))
                if got:
                    idxs.extend(got)

    def slab(self, x: float, y: float, th: float) -> np.ndarray:
        """Store indices that can possibly be near (x, y, th): the direct
        cell window plus, near the arc wall, the continuation-chart window.
        """
        idxs: list = []
        self._slab_cells(y, th, idxs)
        if abs(x * x + y * y - 1.0) < 8.0 * self.r:
            for lam in _ALIAS_MATS:
                _, ya, ta = _alias_chart(x, y, th, lam)
                self._slab_cells(float(ya), float(ta), idxs)
        return np.fromiter(sorted(set(idxs)), dtype=np.int64, count=-1)

    def min_dists(self, mats, x, y, th) -> np.ndarray:
        """Min coset distance of each query to the set, +inf if > ~r.

        Queries must share a chart cell neighborhood (same y level and
        theta up to the slab window); exact for values <= NEAR_RADIUS.
        """
        out = np.full(len(mats), np.inf)
        i0 = int(np.argmin(y))
        idxs = self.slab(float(x[i0]), float(y[i0]), float(th[i0]))
        if len(idxs) == 0:
            return out
        sx = self.xs[idxs]
        sy = self.ys[idxs]
        st = self.ths[idxs]
        near = chart_near_mask(
            x[:, None], y[:, None], th[:, None], sx[None], sy[None], st[None], self.r
        )
        qi, si = np.nonzero(near)
        if len(qi) == 0:
            return out
        d = coset_dist_reduced_many(mats[qi], self.mats[idxs[si]])
        np.minimum.at(out, qi, d)
        return out

    def points(self) -> list:
        return points_from_mats(self.mats[: self.n].copy())


def _grid_rows(y_top: float, r: float):
    """Deterministic chart grid adapted to the hyperbolic metric."""
    cgrid = 0.22
    n_th = max(1, int(math.ceil(math.pi / (cgrid * r))))
    thetas = (np.arange(n_th) + 0.5) * (math.pi / n_th)
    lny_lo = math.log(Y_FLOOR)
    lny_hi = math.log(y_top)
    n_y = max(1, int(math.ceil((lny_hi - lny_lo) / (cgrid * r))))
    lnys = lny_lo + (np.arange(n_y) + 0.5) * ((lny_hi - lny_lo) / n_y)
    for lny in lnys:
        y = math.exp(lny)
        step = cgrid * r * y
        n_x = max(1, int(math.ceil(1.0 / step)))
        xs = -0.5 + (np.arange(n_x) + 0.5) / n_x
        mask = xs * xs + y * y >= 1.0
        xs = xs[mask]
        if len(xs) == 0:
            continue
        for th in thetas:
            yield xs, y, th


def _insert_batch(store: ReducedPointSet, reps, cx, cy, cth, r: float) -> int:
    """Greedy-insert a batch sharing one chart row; returns inserts made."""
    free = store.min_dists(reps, cx, cy, cth) >= r
    pending: list = []
    for i in np.nonzero(free)[0]:
        ok = True
        for j in pending:
            if chart_near_mask(cx[i], cy[i], cth[i], cx[j], cy[j], cth[j], r):
                if coset_dist_reduced_many(reps[i][None], reps[j][None])[0] < r:
                    ok = False
                    break
        if ok:
            pending.append(int(i))
    for i in pending:
        store.insert(reps[i], float(cx[i]), float(cy[i]), float(cth[i]))
    return len(pending)


def net(h_bound: float, r: float, kappa: float = 1.0) -> list:
    """Greedy r-separated net of X(h_bound) with empirical r-covering.

    Deterministic grid candidates are inserted greedily at separation
    threshold exactly r, then the covering is repaired with fixed-seed
    Haar batches (any sample farther than r from the net is itself
    insertable) until two consecutive batches come back clean.
    """
    if not 0 < r <= 0.4:
        raise ValueError("net radius must lie in (0, 0.4]")
    y_top = max(1.0, h_bound ** (2.0 / kappa))
    store = ReducedPointSet(r)

    for xs, y, th in _grid_rows(y_top, r):
        mats = chart_to_rep_many(xs, np.full_like(xs, y), np.full_like(xs, th))
        reps, cx, cy, cth, _ = reduce_many(mats)
        _insert_batch(store, reps, cx, cy, cth, r)

    clean = 0
    stream = 0
    batch = 200_000
    while clean < 2:
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(0x5EED0C0DE, spawn_key=(stream,)))
        )
        stream += 1
        reps, cx, cy, cth, _ = haar_sample_mats(batch, rng, y_max=y_top)
        order = np.argsort(cy, kind="stable")
        added = 0
        for i in order:
            d = dist_to_point_set_single(store, reps[i], cx[i], cy[i], cth[i])
            if d >= r:
                store.insert(reps[i], float(cx[i]), float(cy[i]), float(cth[i]))
                added += 1
        clean = clean + 1 if added == 0 else 0

    return store.points()


def dist_to_point_set_single(
    store: ReducedPointSet, mat, x: float, y: float, th: float
) -> float:
    """Min coset distance from one reduced point to the store (+inf if far)."""
    idxs = store.slab(y, th)
    if len(idxs) == 0:
        return math.inf
    sx = store.xs[idxs]
    sy = store.ys[idxs]
    st = store.ths[idxs]
    near = chart_near_mask(x, y, th, sx, sy, st, store.r)
    if not near.any():
        return math.inf
    sel = idxs[np.nonzero(near)[0]]
    a = np.broadcast_to(mat, (len(sel), 2, 2))
    return float(coset_dist_reduced_many(np.ascontiguousarray(a), store.mats[sel]).min())
