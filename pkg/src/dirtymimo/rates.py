"""Capacity and rate-bound formulas for the dirty MIMO multiple-access channel.

All rates are in bits per real channel use (base-2 logs, real Gaussian
model).  Where a bound is written with ``[x]^+`` it is clamped here; the
plain high-SNR expressions are returned as-is and may be negative at low SNR.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .decomp import jet_shared_left, truncated_blocks
from .errors import DiagProductNotUnit, DimensionMismatch, NotProper, TooFewBlocks
from .linalg import DEFAULT_TOL, ProperChannel, as_matrix, qr_lower, validate_proper


def _pos(x: float) -> float:
    return max(0.0, x)


class PowerKind(enum.Enum):
    TOTAL = "total"
    PER_ANTENNA = "per_antenna"


@dataclass(frozen=True)
class PowerSet:
    """Per-user power budgets.

    With ``PER_ANTENNA`` each value is the budget of a single transmit antenna
    and ``antennas`` must give each user's antenna count; :meth:`totals`
    converts to the total budgets the formulas expect.
    """

    powers: tuple[float, ...]
    kind: PowerKind = PowerKind.TOTAL
    antennas: tuple[int, ...] | None = None

    def __post_init__(self):
        powers = tuple(float(p) for p in np.atleast_1d(self.powers))
        if not powers or not all(np.isfinite(p) and p > 0 for p in powers):
            raise ValueError(f"powers must be positive and finite, got {powers}")
        object.__setattr__(self, "powers", powers)
        kind = PowerKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.antennas is not None:
            ants = tuple(int(a) for a in self.antennas)
            if len(ants) != len(powers):
                raise DimensionMismatch(f"{len(ants)} antenna counts for {len(powers)} users")
            object.__setattr__(self, "antennas", ants)
        elif kind is PowerKind.PER_ANTENNA:
            raise ValueError("per-antenna powers need antenna counts")

    @classmethod
    def symmetric(cls, p: float, users: int = 2, kind=PowerKind.TOTAL, antennas=None) -> "PowerSet":
        return cls((p,) * users, kind, antennas)

    def __len__(self) -> int:
        return len(self.powers)

    def totals(self) -> np.ndarray:
        p = np.array(self.powers)
        if self.kind is PowerKind.PER_ANTENNA:
            p = p * np.array(self.antennas)
        return p

    def per_antenna(self) -> np.ndarray:
        """Budget of each antenna under an equal split of the total."""
        if self.kind is PowerKind.PER_ANTENNA:
            return np.array(self.powers)
        if self.antennas is None:
            raise ValueError("antenna counts are needed to split a total budget")
        return np.array(self.powers) / np.array(self.antennas)


@dataclass
class RateSummary:
    rates: dict[str, float]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for label, value in self.rates.items():
            if not np.isfinite(value):
                raise ValueError(f"rate {label!r} is not finite: {value}")

    def __getitem__(self, label: str) -> float:
        return self.rates[label]

    def to_json(self) -> dict:
        return {"rates": dict(self.rates), "meta": _jsonable(self.meta)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def summaries_to_csv(grid, summaries: list[RateSummary], x_label: str = "P") -> str:
    """One row per grid point; ``%.12g`` formatting."""
    labels = list(summaries[0].rates)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([x_label, *labels])
    for x, s in zip(grid, summaries):
        w.writerow([f"{x:.12g}", *(f"{s.rates[k]:.12g}" for k in labels)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# single-user capacity
# --------------------------------------------------------------------------


def _waterfill_levels(gains: np.ndarray, power: float) -> np.ndarray:
    """Bisection on the water level; the result never overspends ``power``."""
    inv = 1.0 / gains
    lo, hi = float(inv.min()), float(inv.max()) + power
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        spent = np.maximum(mid - inv, 0.0).sum()
        if spent > power:
            hi = mid
        else:
            lo = mid
        if power - np.maximum(lo - inv, 0.0).sum() <= 1e-10 * power or hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    return np.maximum(lo - inv, 0.0)


def waterfill(h, power: float) -> tuple[float, np.ndarray]:
    """``max 1/2 log2|I + H K H^T|`` over ``trace(K) <= power`` for any ``H``."""
    h = as_matrix(h)
    _, sigma, vt = np.linalg.svd(h, full_matrices=True)
    live = sigma > 1e-12 * max(sigma[0], 1e-300)
    gains = sigma[live] ** 2
    levels = _waterfill_levels(gains, power)
    v = vt.T[:, : gains.size]
    cov = (v * levels) @ v.T
    capacity = 0.5 * float(np.sum(np.log2(1.0 + gains * levels)))
    return capacity, cov


def waterfill_capacity(channel: ProperChannel) -> tuple[float, np.ndarray]:
    """Water-filling capacity and optimal input covariance of a channel."""
    return waterfill(channel.h, channel.power)


def log_det_rate(h, cov) -> float:
    """``1/2 log2|I + H K H^T|``."""
    h = as_matrix(h)
    _, logdet = np.linalg.slogdet(np.eye(h.shape[0]) + h @ cov @ h.T)
    return 0.5 * logdet / np.log(2.0)


def kkt_residual(h, cov, power: float) -> float:
    """Largest violation of the water-filling optimality conditions.

    For eigenmode gains ``g_i`` and powers ``p_i`` the marginal utility
    ``g_i / (1 + g_i p_i)`` must equal a common value on active modes and not
    exceed it on inactive ones; the residual is scaled by that value.
    """
    h = as_matrix(h)
    _, sigma, vt = np.linalg.svd(h, full_matrices=True)
    gains = sigma**2
    v = vt.T[:, : gains.size]
    p = np.einsum("ij,jk,ki->i", v.T, cov, v)
    marginal = gains / (1.0 + gains * p)
    active = p > 1e-12 * power
    nu = marginal[active].max()
    spread = (marginal[active].max() - marginal[active].min()) / nu
    excess = max(0.0, (marginal[~active].max() - nu) / nu) if np.any(~active) else 0.0
    return float(max(spread, excess))


def high_snr_rate(n_r: int, p: float) -> float:
    """``(n_r / 2) log2(p / n_r)``, unclamped."""
    return 0.5 * n_r * float(np.log2(p / n_r))


def _check_unit_product(diag, tol: float = 1e-6) -> np.ndarray:
    d = np.asarray(diag, dtype=float)
    prod = float(np.prod(np.abs(d)))
    if abs(prod - 1.0) > tol:
        raise DiagProductNotUnit(f"|prod(d)| = {prod:.12g}, expected 1")
    return d


def zf_dpc_rate(diag, n_r: int, p: float) -> float:
    """Rate of the successive zero-forcing precoder with equal power split."""
    d = _check_unit_product(diag)
    if d.size != n_r:
        raise DimensionMismatch(f"{d.size} diagonal entries for n_r = {n_r}")
    return 0.5 * float(np.sum(np.log2(1.0 + p / n_r * d**2)))


# --------------------------------------------------------------------------
# dirty MAC bounds
# --------------------------------------------------------------------------


def scalar_dmac_bounds(powers: PowerSet) -> RateSummary:
    """Scalar dirty MAC sum-rate caps: outer, lattice inner and high-SNR."""
    k = len(powers)
    if k < 2:
        raise ValueError("the dirty MAC needs at least two users")
    pmin = float(powers.totals().min())
    return RateSummary(
        {
            "outer": 0.5 * float(np.log2(1.0 + pmin)),
            "inner": 0.5 * _pos(float(np.log2(1.0 / k + pmin))),
            "high_snr": 0.5 * float(np.log2(pmin)),
        },
        {"users": k, "min_power": pmin},
    )


def _channels(channels) -> list[ProperChannel]:
    out = []
    for i, c in enumerate(channels):
        if not isinstance(c, ProperChannel):
            raise TypeError(f"channel {i + 1} must be a ProperChannel")
        report = validate_proper(c.h, DEFAULT_TOL.proper)
        if not report.accepted:
            raise NotProper(f"channel {i + 1}: " + "; ".join(report.failures))
        out.append(c)
    if len({c.n_r for c in out}) != 1:
        raise DimensionMismatch("channels do not share the receive dimension")
    return out


def qrd_bottleneck_rate(channels) -> RateSummary:
    """High-SNR sum rate of per-user RQ triangularization.

    Every user triangularizes on its own, so subchannel ``i`` is limited by
    the weakest ``P_k d_{k;i}^2`` across users (the per-element bottleneck).
    """
    chans = _channels(channels)
    n_r = chans[0].n_r
    diags = np.array([np.diag(qr_lower(c.h)[1]) for c in chans])
    powers = np.array([c.power for c in chans])
    minima = np.min(powers[:, None] * diags**2, axis=0)
    per_index = 0.5 * np.log2(minima / n_r)
    return RateSummary(
        {"qrd_bottleneck": float(per_index.sum())},
        {"per_index_min_snr": (minima / n_r).tolist(), "per_index_rate": per_index.tolist(), "diagonals": diags.tolist()},
    )


def dmac_outer(channels) -> float:
    """Minimum individual water-filling capacity."""
    chans = _channels(channels)
    if len(chans) < 2:
        raise ValueError("the dirty MAC needs at least two users")
    return min(waterfill_capacity(c)[0] for c in chans)


def dmac_inner_high_snr(n_r: int, powers: PowerSet, k_users: int | None = None, n_blocks: int | None = None) -> float:
    """Achievable sum rate with equal-diagonal triangularization.

    ``(n_r/2)[log2(min P / n_r)]^+`` for two users; for three or more the
    time-extension factor ``N~/N`` scales it and ``n_blocks`` is required.
    """
    k = len(powers) if k_users is None else int(k_users)
    if k < 2:
        raise ValueError("the dirty MAC needs at least two users")
    base = 0.5 * n_r * _pos(float(np.log2(powers.totals().min() / n_r)))
    if k == 2 and n_blocks is None:
        return base
    if n_blocks is None:
        raise TooFewBlocks(
            f"{k} users need a time extension: pass a block count N >= N_r^(K-2) = {n_r ** (k - 2)} "
            "(usable blocks N~ = N - N_r^(K-2) + 1)"
        )
    return base * truncated_blocks(n_r, k, n_blocks) / n_blocks


def dmac_inner_finite_snr(diag, powers: PowerSet, k_users: int | None = None) -> float:
    """Per-subchannel lattice rate before the ``1/K`` term is dropped."""
    d = _check_unit_product(diag)
    k = len(powers) if k_users is None else int(k_users)
    snr = d**2 * float(powers.totals().min()) / d.size
    return float(sum(0.5 * _pos(float(np.log2(1.0 / k + s))) for s in snr))


def gap_report(channels, powers: PowerSet | None = None, n_blocks: int | None = None) -> RateSummary:
    """Outer bound minus the inner bounds for one instance.

    ``channels`` are proper matrices or :class:`ProperChannel` objects; when
    ``powers`` is given it overrides the channels' own budgets.  The
    finite-SNR inner bound needs the joint equal-diagonal decomposition and
    is only reported for two users.
    """
    mats = [c.h if isinstance(c, ProperChannel) else as_matrix(c) for c in channels]
    if powers is None:
        powers = PowerSet(tuple(c.power for c in channels))
    totals = powers.totals()
    if len(totals) != len(mats):
        raise DimensionMismatch(f"{len(totals)} powers for {len(mats)} channels")
    chans = _channels([ProperChannel(h, p) for h, p in zip(mats, totals)])
    n_r = chans[0].n_r
    k = len(chans)
    outer = dmac_outer(chans)
    inner_hs = dmac_inner_high_snr(n_r, powers, k, n_blocks)
    rates = {"outer": outer, "inner_high_snr": inner_hs}
    meta = {"users": k, "n_r": n_r, "min_power": float(totals.min())}
    if k == 2:
        jt = jet_shared_left(mats[0], mats[1])
        inner_fs = dmac_inner_finite_snr(jt.diag, powers, k)
        rates["inner_finite_snr"] = inner_fs
        meta["jet_diag"] = jt.diag.tolist()
    rates["gap_high_snr"] = outer - inner_hs
    if "inner_finite_snr" in rates:
        rates["gap_finite_snr"] = outer - rates["inner_finite_snr"]
    if n_blocks is not None:
        meta["n_blocks"] = n_blocks
        meta["efficiency"] = truncated_blocks(n_r, k, n_blocks) / n_blocks
    return RateSummary(rates, meta)


def dumps_summary(summary: RateSummary) -> str:
    return json.dumps(summary.to_json(), indent=2)
