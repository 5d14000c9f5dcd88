"""Orthogonal triangularizations with controlled diagonals.

All triangular factors are *generalized lower triangular*: ``T[i, j] == 0``
for ``i < j``.  Upper-triangular intermediate forms are converted by row and
column reversal and never leave this module.

Provided here:

* :func:`gmd` -- geometric mean decomposition, every diagonal entry of ``T``
  equal to the geometric mean of the singular values.
* :func:`gtd_feasible` -- multiplicative majorization test for a prescribed
  diagonal.
* :func:`jet_shared_right` / :func:`jet_shared_left` -- joint equi-diagonal
  triangularization of two matrices sharing one orthogonal factor.
* :func:`build_time_extension` / :func:`extension_efficiency` -- the
  block-diagonal lifting used for more than two users.
* :func:`verify_joint_triangularization` -- checks externally supplied or
  computed factors against their defining equations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, LengthMismatch, NotProper, TooFewBlocks
from .linalg import (
    DEFAULT_TOL,
    Tolerances,
    above_diagonal_max,
    as_matrix,
    matrix_from_json,
    matrix_to_json,
    orthonormality_residual,
    qr_lower,
    relative_residual,
    reversal,
    svd,
    validate_proper,
)


@dataclass(frozen=True)
class GtdResult:
    """``a = u @ t @ v.T`` with square orthogonal ``u``, ``v``."""

    u: np.ndarray
    t: np.ndarray
    v: np.ndarray

    @property
    def diag(self) -> np.ndarray:
        return np.diag(self.t).copy()

    def residuals(self, a) -> dict:
        a = as_matrix(a)
        return {
            "reconstruction": relative_residual(a, self.u @ self.t @ self.v.T),
            "orthonormality_u": orthonormality_residual(self.u),
            "orthonormality_v": orthonormality_residual(self.v),
            "above_diagonal": above_diagonal_max(self.t),
        }


class Orientation(enum.Enum):
    SHARED_RIGHT = "shared_right"
    SHARED_LEFT = "shared_left"


@dataclass(frozen=True)
class JointTriangularization:
    """Two or more triangularizations that share one orthogonal factor.

    ``SHARED_RIGHT``: ``A_k = U_k T_k V^T`` where ``shared`` is ``V`` and
    ``per_matrix[k] == (U_k, T_k)``.

    ``SHARED_LEFT``: ``H_k = U T_k V_k^T`` where ``shared`` is ``U`` and
    ``per_matrix[k] == (V_k, T_k)``.
    """

    shared: np.ndarray
    per_matrix: list[tuple[np.ndarray, np.ndarray]]
    diag: np.ndarray
    orientation: Orientation

    def to_json(self) -> dict:
        return {
            "shared": matrix_to_json(self.shared),
            "per_matrix": [{"u": matrix_to_json(q), "t": matrix_to_json(t)} for q, t in self.per_matrix],
            "diag": [float(x) for x in self.diag],
            "orientation": self.orientation.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "JointTriangularization":
        return cls(
            shared=matrix_from_json(obj["shared"]),
            per_matrix=[(matrix_from_json(p["u"]), matrix_from_json(p["t"])) for p in obj["per_matrix"]],
            diag=np.asarray(obj["diag"], dtype=float),
            orientation=Orientation(obj["orientation"]),
        )


def _require_proper(a, tol: Tolerances, name: str = "matrix") -> np.ndarray:
    report = validate_proper(a, tol.proper)
    if not report.accepted:
        raise NotProper(f"{name}: " + "; ".join(report.failures))
    return as_matrix(a)


# --------------------------------------------------------------------------
# GMD
# --------------------------------------------------------------------------


def _gmd_square_upper(sigma: np.ndarray):
    """Givens sweep on ``diag(sigma)``.

    Returns ``(g1, r, g2)`` with ``diag(sigma) = g1 @ r @ g2.T``, ``r`` upper
    triangular and every diagonal entry equal to the geometric mean.  At step
    ``k`` the trailing block ``r[k:, k:]`` is diagonal, so its entries can be
    permuted freely; the largest remaining entry is paired with the smallest.
    """
    n = sigma.size
    r = np.diag(sigma.astype(float))
    g1 = np.eye(n)
    g2 = np.eye(n)
    target = float(np.exp(np.mean(np.log(sigma))))
    eps = 64 * np.finfo(float).eps

    def swap(i: int, j: int) -> None:
        if i == j:
            return
        r[[i, j], :] = r[[j, i], :]
        r[:, [i, j]] = r[:, [j, i]]
        g1[:, [i, j]] = g1[:, [j, i]]
        g2[:, [i, j]] = g2[:, [j, i]]

    for k in range(n - 1):
        tail = np.diag(r)[k:]
        p = k + int(np.argmax(tail))
        q = k + int(np.argmin(tail))
        hi, lo = r[p, p], r[q, q]
        if hi - target <= eps * target:
            swap(k, p)
            continue
        if target - lo <= eps * target:
            swap(k, q)
            continue
        swap(k, p)
        if q == k:
            q = p
        swap(k + 1, q)
        d1, d2 = r[k, k], r[k + 1, k + 1]
        c = np.sqrt((target**2 - d2**2) / (d1**2 - d2**2))
        s = np.sqrt(max(0.0, 1.0 - c * c))
        rot_right = np.array([[c, -s], [s, c]])
        rot_left = np.array([[c * d1, -s * d2], [s * d2, c * d1]]) / target
        idx = [k, k + 1]
        r[:, idx] = r[:, idx] @ rot_right
        r[idx, :] = rot_left.T @ r[idx, :]
        g2[:, idx] = g2[:, idx] @ rot_right
        g1[:, idx] = g1[:, idx] @ rot_left
        r[k + 1, k] = 0.0
        r[k, k] = target
    return g1, r, g2


def _gmd_any(a: np.ndarray) -> GtdResult:
    """GMD of any full-row-rank wide or square matrix."""
    rows, cols = a.shape
    d = np.diag(a)
    if not np.any(np.triu(a, k=1)) and np.all(d > 0) and np.ptp(d) <= 4 * np.finfo(float).eps * d[0]:
        # already an equal-diagonal lower form, e.g. the identity
        s = np.linalg.svd(a, compute_uv=False)
        if abs(np.sum(np.log(s)) - rows * np.log(d[0])) <= 1e-12 * rows:
            return GtdResult(np.eye(rows), a.copy(), np.eye(cols))
    try:
        u0, sigma, vt0 = np.linalg.svd(a, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        from .errors import ConvergenceFailure

        raise ConvergenceFailure(str(exc)) from exc
    v0 = vt0.T
    g1, r, g2 = _gmd_square_upper(sigma)
    j = reversal(rows)
    u = u0 @ g1 @ j
    t = np.zeros((rows, cols))
    t[:, :rows] = j @ r @ j
    t[np.triu_indices(rows, k=1, m=cols)] = 0.0
    v = v0.copy()
    v[:, :rows] = v0[:, :rows] @ g2 @ j
    return GtdResult(u, t, v)


def gmd(a, tol: Tolerances = DEFAULT_TOL) -> GtdResult:
    """Geometric mean decomposition of a proper matrix.

    The diagonal of ``t`` is all ones up to rounding because the singular
    values of a proper matrix have unit product.
    """
    return _gmd_any(_require_proper(a, tol))


def gtd_feasible(sigma, prescribed, rtol: float = 1e-10) -> bool:
    """Multiplicative majorization test.

    A triangular factor with diagonal ``prescribed`` (any order) exists iff
    the descending prefix products of ``prescribed`` never exceed those of
    ``sigma`` and the full products agree.
    """
    sigma = np.asarray(sigma, dtype=float)
    prescribed = np.asarray(prescribed, dtype=float)
    if sigma.shape != prescribed.shape:
        raise LengthMismatch(f"{sigma.size} singular values vs {prescribed.size} diagonal entries")
    if np.any(sigma <= 0) or np.any(prescribed <= 0):
        raise ValueError("singular values and prescribed diagonal must be positive")
    ls = np.cumsum(np.log(np.sort(sigma)[::-1]))
    lp = np.cumsum(np.log(np.sort(prescribed)[::-1]))
    if abs(lp[-1] - ls[-1]) > rtol:
        return False
    return bool(np.all(lp[:-1] <= ls[:-1] + rtol))


# --------------------------------------------------------------------------
# JET
# --------------------------------------------------------------------------


def _jet_square_right(a1: np.ndarray, a2: np.ndarray):
    """Square core: ``a_k = u_k @ t_k @ v.T`` with equal diagonals.

    GMD of ``a1 @ inv(a2) = q r p^T`` (unit diagonal), then the lower RQ of
    ``p^T a2 = t2 v^T`` gives ``a2 = p t2 v^T`` and ``a1 = q (r t2) v^T``.
    """
    m = np.linalg.solve(a2.T, a1.T).T
    g = _gmd_any(m)
    v, t2 = qr_lower(g.v.T @ a2)
    u1, u2 = g.u, g.v
    t1 = np.tril(u1.T @ a1 @ v)
    t2 = np.tril(u2.T @ a2 @ v)
    return v, [(u1, t1), (u2, t2)]


def _positive_diag(shared: np.ndarray, pairs, orientation: Orientation):
    """Flip signs so that the common diagonal is positive.

    Only the private side is touched: flipping row ``i`` of ``T_k`` with
    column ``i`` of ``U_k`` (shared right), or column ``i`` of ``T_k`` with
    column ``i`` of ``V_k`` (shared left), keeps every product intact.
    """
    d = np.diag(pairs[0][1])
    flips = np.where(d < 0, -1.0, 1.0)
    n = flips.size
    out = []
    for q, t in pairs:
        q, t = q.copy(), t.copy()
        q[:, :n] *= flips
        if orientation is Orientation.SHARED_RIGHT:
            t[:n, :] *= flips[:, None]
        else:
            t[:, :n] *= flips
        out.append((q, t))
    return shared, out


def _common_diag(pairs) -> np.ndarray:
    diags = np.array([np.diag(t) for _, t in pairs])
    return diags.mean(axis=0)


def jet_shared_right(a1, a2, tol: Tolerances = DEFAULT_TOL) -> JointTriangularization:
    """Joint triangularization ``A_k = U_k T_k V^T`` with equal diagonals.

    Both inputs must have the same column count ``N`` and be square or tall
    with full column rank and ``det(A_k^T A_k) = 1`` (the transposes of proper
    matrices).  A common right factor for two wide matrices exists only when
    their row spaces coincide, so wide inputs are rejected.  Tall inputs are
    reduced to square ``N x N`` factors by a thin QR first.
    """
    a1, a2 = as_matrix(a1), as_matrix(a2)
    if a1.shape[1] != a2.shape[1]:
        raise DimensionMismatch(f"column counts differ: {a1.shape[1]} vs {a2.shape[1]}")
    _require_proper(a1.T, tol, "first matrix (transposed)")
    _require_proper(a2.T, tol, "second matrix (transposed)")
    n = a1.shape[1]

    cores, bases = [], []
    for a in (a1, a2):
        if a.shape[0] == n:
            cores.append(a)
            bases.append(None)
        else:
            y, s = np.linalg.qr(a, mode="complete")
            cores.append(s[:n, :])
            bases.append(y)
    v, pairs = _jet_square_right(*cores)
    full = []
    for (u, t), y in zip(pairs, bases):
        if y is None:
            full.append((u, t))
            continue
        m = y.shape[0]
        u_full = y.copy()
        u_full[:, :n] = y[:, :n] @ u
        t_full = np.zeros((m, n))
        t_full[:n, :] = t
        full.append((u_full, t_full))
    v, full = _positive_diag(v, full, Orientation.SHARED_RIGHT)
    return JointTriangularization(v, full, _common_diag(full), Orientation.SHARED_RIGHT)


def jet_shared_left(h1, h2, tol: Tolerances = DEFAULT_TOL) -> JointTriangularization:
    """Joint triangularization ``H_k = U T_k V_k^T`` with equal diagonals.

    This is the receiver-shared form: one orthogonal ``U`` applied at the
    common receiver and a private ``V_k`` at each transmitter.  Each proper
    ``H_k`` is first reduced by the lower RQ route to ``S_k Q_k^T`` with a
    square lower-triangular ``S_k``; the square pair is handled by the
    shared-right construction on ``S_k^T`` followed by reversal, and the
    right factors are composed back.
    """
    h1 = _require_proper(h1, tol, "first channel")
    h2 = _require_proper(h2, tol, "second channel")
    if h1.shape[0] != h2.shape[0]:
        raise DimensionMismatch(f"row counts differ: {h1.shape[0]} vs {h2.shape[0]}")
    n_r = h1.shape[0]
    j = reversal(n_r)

    qs, squares = [], []
    for h in (h1, h2):
        q, t = qr_lower(h)
        qs.append(q)
        squares.append(t[:, :n_r])

    if np.allclose(np.diag(squares[0]), np.diag(squares[1]), rtol=4 * np.finfo(float).eps, atol=0.0):
        # the separate RQ factors already share their diagonal
        out = [(q, np.pad(s, ((0, 0), (0, q.shape[0] - n_r)))) for q, s in zip(qs, squares)]
        return JointTriangularization(np.eye(n_r), out, _common_diag(out), Orientation.SHARED_LEFT)

    # S_k^T = W_k L_k X^T  =>  S_k = (X J)(J L_k^T J)(W_k J)^T
    x, pairs = _jet_square_right(squares[0].T, squares[1].T)
    u = x @ j
    out = []
    for (w, l), q in zip(pairs, qs):
        t_sq = np.tril(j @ l.T @ j)
        v = q.copy()
        v[:, :n_r] = q[:, :n_r] @ (w @ j)
        t = np.zeros((n_r, q.shape[0]))
        t[:, :n_r] = t_sq
        out.append((v, t))
    u, out = _positive_diag(u, out, Orientation.SHARED_LEFT)
    return JointTriangularization(u, out, _common_diag(out), Orientation.SHARED_LEFT)


# --------------------------------------------------------------------------
# time extension
# --------------------------------------------------------------------------


def truncated_blocks(n_r: int, k_users: int, n_blocks: int) -> int:
    """Number of usable blocks ``N - n_r**(K-2) + 1`` after edge truncation."""
    if k_users < 2:
        raise ValueError("at least two users are required")
    need = n_r ** (k_users - 2)
    if n_blocks < need:
        raise TooFewBlocks(
            f"N = {n_blocks} blocks is below the minimum N_r^(K-2) = {n_r}^{k_users - 2} = {need} "
            f"required for {k_users} users"
        )
    return n_blocks - need + 1


def extension_efficiency(n_r: int, k_users: int, n_blocks: int) -> float:
    """Fraction of the ``N`` blocks that survive truncation."""
    return truncated_blocks(n_r, k_users, n_blocks) / n_blocks


@dataclass(frozen=True)
class TimeExtension:
    n_blocks: int
    base_rows: int
    users: int
    extended: list[np.ndarray] = field(repr=False)
    truncated_rows: int


def build_time_extension(channels, n_blocks: int, tol: Tolerances = DEFAULT_TOL) -> TimeExtension:
    """Block-diagonal lifting ``I_N (x) H_k`` of every channel."""
    mats = [_require_proper(h, tol, f"channel {i + 1}") for i, h in enumerate(channels)]
    if len(mats) < 2:
        raise ValueError("at least two channels are required")
    n_r = mats[0].shape[0]
    if any(h.shape[0] != n_r for h in mats):
        raise DimensionMismatch("channels do not share the receive dimension")
    tn = truncated_blocks(n_r, len(mats), n_blocks)
    eye = np.eye(n_blocks)
    return TimeExtension(n_blocks, n_r, len(mats), [np.kron(eye, h) for h in mats], tn)


# --------------------------------------------------------------------------
# verifier
# --------------------------------------------------------------------------


@dataclass
class VerificationReport:
    reconstruction: list[float]
    reconstruction_abs: list[float]
    above_diagonal: float
    diagonal_disparity: float
    orthonormality: dict[str, float]
    tolerances: Tolerances
    passed: bool = False
    failures: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "pass": self.passed,
            "reconstruction": self.reconstruction,
            "reconstruction_abs": self.reconstruction_abs,
            "above_diagonal": self.above_diagonal,
            "diagonal_disparity": self.diagonal_disparity,
            "orthonormality": self.orthonormality,
            "failures": self.failures,
        }


def verify_joint_triangularization(
    jt: JointTriangularization, originals, tol: Tolerances = DEFAULT_TOL
) -> VerificationReport:
    """Check factors against ``T_k = U^T H_k V_k`` (or the shared-right dual).

    The residual is measured as ``||U^T H_k V_k - T_k||_F``, which equals the
    reconstruction error when the factors are square and also covers
    truncated factors with orthonormal columns, as produced for time-extended
    channels.  Relative residuals are normalized by ``||H_k||_F``.
    """
    originals = [as_matrix(h) for h in originals]
    if len(originals) != len(jt.per_matrix):
        raise DimensionMismatch(f"{len(originals)} matrices for {len(jt.per_matrix)} factor pairs")

    rel, absolute = [], []
    ortho = {"shared": orthonormality_residual(jt.shared)}
    above = 0.0
    diags = []
    for k, ((q, t), h) in enumerate(zip(jt.per_matrix, originals)):
        if jt.orientation is Orientation.SHARED_LEFT:
            left, right = jt.shared, q
        else:
            left, right = q, jt.shared
        if left.shape[0] != h.shape[0] or right.shape[0] != h.shape[1] or t.shape != (left.shape[1], right.shape[1]):
            raise DimensionMismatch(
                f"matrix {k + 1}: factor shapes {left.shape}, {t.shape}, {right.shape} do not fit {h.shape}"
            )
        diff = np.linalg.norm(left.T @ h @ right - t)
        absolute.append(float(diff))
        rel.append(float(diff / np.linalg.norm(h)))
        ortho[f"matrix_{k + 1}"] = orthonormality_residual(q)
        above = max(above, above_diagonal_max(t))
        diags.append(np.diag(t))

    lengths = {d.size for d in diags}
    if len(lengths) != 1:
        disparity = float("inf")
    else:
        stack = np.array(diags)
        disparity = float(np.max(stack.max(axis=0) - stack.min(axis=0)))
        if jt.diag is not None and np.size(jt.diag) == stack.shape[1]:
            disparity = max(disparity, float(np.max(np.abs(stack - np.asarray(jt.diag)))))

    report = VerificationReport(rel, absolute, above, disparity, ortho, tol)
    if max(rel) > tol.reconstruction:
        report.failures.append(f"reconstruction residual {max(rel):.3g} > {tol.reconstruction:g}")
    if above > tol.triangular:
        report.failures.append(f"above-diagonal magnitude {above:.3g} > {tol.triangular:g}")
    if disparity > tol.diagonal:
        report.failures.append(f"diagonal disparity {disparity:.3g} > {tol.diagonal:g}")
    worst = max(ortho.values())
    if worst > tol.orthonormality:
        report.failures.append(f"orthonormality residual {worst:.3g} > {tol.orthonormality:g}")
    report.passed = not report.failures
    return report


def verify_gtd(result: GtdResult, a, tol: Tolerances = DEFAULT_TOL) -> VerificationReport:
    """Single-matrix verifier, phrased as a one-member joint triangularization."""
    jt = JointTriangularization(result.v, [(result.u, result.t)], result.diag, Orientation.SHARED_RIGHT)
    return verify_joint_triangularization(jt, [a], tol)
