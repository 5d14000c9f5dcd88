"""Dense real-matrix helpers: validation, orthogonal factorizations and
proper-matrix handling.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64.  A channel
matrix ``H`` of shape ``(n_r, n_t)`` is *proper* when ``n_r <= n_t``, it has
full row rank and ``det(H @ H.T) == 1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceFailure, NotProper, ParseError, RankDeficient

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Tolerances:
    """Tolerances shared by the decomposition verifiers."""

    orthonormality: float = 1e-9
    reconstruction: float = 1e-8
    triangular: float = 1e-10
    diagonal: float = 1e-8
    proper: float = 1e-8

    def replace(self, **overrides: float) -> "Tolerances":
        unknown = set(overrides) - set(self.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown tolerance(s): {', '.join(sorted(unknown))}")
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update({k: float(v) for k, v in overrides.items()})
        return Tolerances(**values)


DEFAULT_TOL = Tolerances()


def as_matrix(a) -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array (copying only if needed)."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def numerical_rank(a: np.ndarray) -> int:
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s >= RANK_RTOL * s[0]))


def orthonormality_residual(q: np.ndarray) -> float:
    """``max |Q^T Q - I|`` over all entries."""
    return float(np.max(np.abs(q.T @ q - np.eye(q.shape[1]))))


def relative_residual(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.linalg.norm(a)
    diff = np.linalg.norm(a - b)
    return float(diff / scale) if scale > 0 else float(diff)


def above_diagonal_max(t: np.ndarray) -> float:
    upper = np.triu(t, k=1)
    return float(np.max(np.abs(upper))) if upper.size else 0.0


def reversal(n: int) -> np.ndarray:
    return np.eye(n)[::-1]


def svd(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``a = u @ diag(sigma) @ v.T`` with ``sigma`` descending."""
    a = as_matrix(a)
    try:
        u, sigma, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return u, sigma, vt.T


def qr_lower(a) -> tuple[np.ndarray, np.ndarray]:
    """Lower-triangular RQ factorization ``a = t @ q.T``.

    ``t`` has the shape of ``a`` and is generalized lower triangular with a
    nonnegative diagonal; ``q`` is square orthogonal of size ``a.shape[1]``.
    This is the transmitter-side form used by the successive precoding
    schemes: only an orthogonal operation at the input is needed.
    """
    a = as_matrix(a)
    rows, cols = a.shape
    if rows > cols or numerical_rank(a) < rows:
        raise RankDeficient(f"{rows}x{cols} matrix does not have full row rank")
    q, r = np.linalg.qr(a.T, mode="complete")
    t = r.T
    signs = np.where(np.diag(t) < 0, -1.0, 1.0)
    t[:, :rows] *= signs
    q[:, :rows] *= signs
    t[np.triu_indices(rows, k=1, m=cols)] = 0.0
    return q, t


@dataclass(frozen=True)
class ProperChannel:
    """A proper channel matrix together with its total power budget."""

    h: np.ndarray
    power: float
    det_gram: float = field(default=float("nan"))

    def __post_init__(self):
        h = as_matrix(self.h)
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        if not self.power > 0 or not np.isfinite(self.power):
            raise ValueError(f"power must be positive and finite, got {self.power}")
        object.__setattr__(self, "power", float(self.power))
        object.__setattr__(self, "det_gram", float(np.linalg.det(h @ h.T)))

    @property
    def n_r(self) -> int:
        return self.h.shape[0]

    @property
    def n_t(self) -> int:
        return self.h.shape[1]

    @classmethod
    def checked(cls, h, power: float, tol: float = DEFAULT_TOL.proper) -> "ProperChannel":
        report = validate_proper(h, tol, power=power)
        if not report.accepted:
            raise NotProper("; ".join(report.failures))
        return report.channel


@dataclass(frozen=True)
class ProperReport:
    accepted: bool
    failures: tuple[str, ...]
    det_gram: float
    channel: ProperChannel | None = None


def validate_proper(h, tol: float = DEFAULT_TOL.proper, power: float = 1.0) -> ProperReport:
    """Check the three defining conditions and list every one that fails."""
    h = as_matrix(h)
    rows, cols = h.shape
    failures = []
    if cols < rows:
        failures.append(f"more rows than columns ({rows}x{cols})")
    rank = numerical_rank(h)
    if rank < rows:
        failures.append(f"rank {rank} < {rows} rows")
    det_gram = float(np.linalg.det(h @ h.T))
    if abs(det_gram - 1.0) > tol:
        failures.append(f"det(H H^T) = {det_gram:.12g}, not 1 within {tol:g}")
    if failures:
        return ProperReport(False, tuple(failures), det_gram)
    return ProperReport(True, (), det_gram, ProperChannel(h, power))


def normalize_to_proper(h, power: float) -> ProperChannel:
    """Move ``det(H H^T)`` into the power budget.

    Returns ``H / a**(1/(2 n_r))`` with power ``P * a**(1/n_r)`` where
    ``a = det(H H^T)``; the received SNR is unchanged.
    """
    h = as_matrix(h)
    rows, cols = h.shape
    if cols < rows or numerical_rank(h) < rows:
        raise RankDeficient(f"{rows}x{cols} matrix does not have full row rank")
    sign, logdet = np.linalg.slogdet(h @ h.T)
    if sign <= 0:
        raise RankDeficient("Gram matrix is not positive definite")
    if abs(logdet) <= 4 * np.finfo(float).eps * rows:
        return ProperChannel(h, power)
    scale = np.exp(logdet / (2 * rows))
    return ProperChannel(h / scale, power * np.exp(logdet / rows))


def random_proper(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Gaussian matrix rescaled so that ``det(H H^T) = 1``."""
    h = rng.standard_normal((rows, cols))
    _, logdet = np.linalg.slogdet(h @ h.T)
    return h / np.exp(logdet / (2 * rows))


def matrix_to_json(a) -> dict:
    a = as_matrix(a)
    return {"rows": a.shape[0], "cols": a.shape[1], "data": [float(f"{x:.17g}") for x in a.ravel()]}


def matrix_from_json(obj) -> np.ndarray:
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"not a matrix object: {exc}") from exc
    if rows < 1 or cols < 1 or len(data) != rows * cols:
        raise ParseError(f"matrix data has {len(data)} entries, expected {rows}x{cols}")
    try:
        m = np.array(data, dtype=float).reshape(rows, cols)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"matrix data is not numeric: {exc}") from exc
    if not np.all(np.isfinite(m)):
        raise ParseError("matrix data has non-finite entries")
    return m


def dumps_matrix(a) -> str:
    return json.dumps(matrix_to_json(a))


def loads_matrix(text: str) -> np.ndarray:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    return matrix_from_json(obj)
