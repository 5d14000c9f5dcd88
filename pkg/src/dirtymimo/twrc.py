"""Two-way relay channel: cut-set bounds, physical-layer network coding rates
and baselines, all as symmetric rates ``R = R_1 = R_2`` in bits per real
channel use.

The broadcast phase is summarized by its common-message capacity
``c_common``; only the multiple-access phase is modelled explicitly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotDiagonal, NotProper, ParseError
from .linalg import DEFAULT_TOL, as_matrix, matrix_from_json, matrix_to_json, validate_proper
from .rates import PowerKind, PowerSet, high_snr_rate, log_det_rate, waterfill


@dataclass(frozen=True)
class TwrcScenario:
    """MAC-phase channels, a symmetric power budget and the BC capacity.

    ``power`` is per terminal; with ``PowerKind.PER_ANTENNA`` it applies to
    every transmit antenna and the total is ``N_t * power``.
    """

    h1: np.ndarray
    h2: np.ndarray
    power: float
    power_kind: PowerKind = PowerKind.TOTAL
    c_common: float = math.inf

    def __post_init__(self):
        h1, h2 = as_matrix(self.h1), as_matrix(self.h2)
        if h1.shape[0] != h2.shape[0]:
            raise DimensionMismatch(f"channels do not share N_r: {h1.shape} vs {h2.shape}")
        if not self.power > 0:
            raise ValueError(f"power must be positive, got {self.power}")
        if not self.c_common >= 0:
            raise ValueError(f"c_common must be nonnegative, got {self.c_common}")
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "h2", h2)
        object.__setattr__(self, "power", float(self.power))
        object.__setattr__(self, "power_kind", PowerKind(self.power_kind))
        object.__setattr__(self, "c_common", float(self.c_common))

    @property
    def n_r(self) -> int:
        return self.h1.shape[0]

    @property
    def channels(self) -> tuple[np.ndarray, np.ndarray]:
        return self.h1, self.h2

    def powers(self) -> PowerSet:
        return PowerSet((self.power, self.power), self.power_kind, (self.h1.shape[1], self.h2.shape[1]))

    def with_power(self, power: float) -> "TwrcScenario":
        return TwrcScenario(self.h1, self.h2, power, self.power_kind, self.c_common)

    def to_json(self) -> dict:
        return {
            "h1": matrix_to_json(self.h1),
            "h2": matrix_to_json(self.h2),
            "power": self.power,
            "power_kind": self.power_kind.value,
            "c_common": self.c_common if math.isfinite(self.c_common) else "inf",
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TwrcScenario":
        try:
            c_common = obj.get("c_common", math.inf)
            return cls(
                matrix_from_json(obj["h1"]),
                matrix_from_json(obj["h2"]),
                float(obj["power"]),
                PowerKind(obj.get("power_kind", "total")),
                float(c_common),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad scenario: {exc}") from exc

    @classmethod
    def loads(cls, text: str) -> "TwrcScenario":
        try:
            return cls.from_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON: {exc}") from exc


def mirrored_scenario(power: float = 1.0) -> TwrcScenario:
    """Two mirrored parallel channels with a 20-bit broadcast phase."""
    return TwrcScenario(np.diag([0.25, 4.0]), np.diag([4.0, 0.25]), power, PowerKind.PER_ANTENNA, 20.0)


def _require_proper(s: TwrcScenario) -> None:
    for i, h in enumerate(s.channels):
        report = validate_proper(h, DEFAULT_TOL.proper)
        if not report.accepted:
            raise NotProper(f"channel {i + 1}: " + "; ".join(report.failures))


def cut_set_scalar(p: float, c_common: float) -> float:
    return min(0.5 * math.log2(1.0 + p), c_common)


def pnc_scalar(p: float, c_common: float) -> float:
    return min(max(0.0, 0.5 * math.log2(0.5 + p)), c_common)


def cut_set_mimo(s: TwrcScenario) -> float:
    """``min{C_1, C_2, c_common}`` with water-filling individual capacities."""
    totals = s.powers().totals()
    c1 = waterfill(s.h1, totals[0])[0]
    c2 = waterfill(s.h2, totals[1])[0]
    return min(c1, c2, s.c_common)


def pnc_mimo(s: TwrcScenario) -> float:
    """Equal-diagonal triangularization plus scalar PNC on every subchannel."""
    _require_proper(s)
    p = float(s.powers().totals().min())
    return min(max(0.0, high_snr_rate(s.n_r, p)), s.c_common)


def df_symmetric_rate(s: TwrcScenario) -> float:
    """Decode-and-forward with white inputs at full power.

    The relay decodes both messages, so ``2R`` is limited by the MAC sum
    rate and each ``R`` by its own single-user rate.
    """
    _require_proper(s)
    totals = s.powers().totals()
    covs = [np.eye(h.shape[1]) * p / h.shape[1] for h, p in zip(s.channels, totals)]
    gram = sum(h @ k @ h.T for h, k in zip(s.channels, covs))
    sum_rate = 0.5 * np.linalg.slogdet(np.eye(s.n_r) + gram)[1] / math.log(2.0)
    singles = [log_det_rate(h, k) for h, k in zip(s.channels, covs)]
    return float(min(0.5 * sum_rate, *singles, s.c_common))


def per_element_pnc(s: TwrcScenario) -> float:
    """Scalar PNC on each parallel subchannel without any joint decomposition.

    Subchannel ``i`` runs at the weaker terminal's SNR ``min_k p_k h_{k;ii}^2``
    with the budget split equally over antennas.
    """
    for i, h in enumerate(s.channels):
        if h.shape[0] != h.shape[1] or np.any(h != np.diag(np.diag(h))):
            raise NotDiagonal(f"channel {i + 1} is not a square diagonal matrix")
    per_ant = s.powers().per_antenna()
    snr = np.minimum(per_ant[0] * np.diag(s.h1) ** 2, per_ant[1] * np.diag(s.h2) ** 2)
    total = sum(max(0.0, 0.5 * math.log2(0.5 + x)) for x in snr)
    return min(total, s.c_common)


def _is_diagonal(s: TwrcScenario) -> bool:
    return all(h.shape[0] == h.shape[1] and np.all(h == np.diag(np.diag(h))) for h in s.channels)


COLUMNS = ("cut_set_mimo", "pnc_mimo", "df_symmetric_rate", "per_element_pnc")


def geometric_grid(lo: float, hi: float, points: int) -> np.ndarray:
    if not (0 < lo < hi) or points < 2:
        raise ValueError(f"need 0 < min < max and points >= 2, got {lo}, {hi}, {points}")
    return np.geomspace(lo, hi, points)


def sweep(s: TwrcScenario, p_grid) -> list[dict]:
    """Symmetric rates of every strategy along a power grid.

    The grid values are interpreted with the scenario's power kind.  The
    per-element baseline is only defined for diagonal channels and is left
    out otherwise.
    """
    grid = np.asarray(p_grid, dtype=float)
    if grid.ndim != 1 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("power grid must be positive and strictly ascending")
    diagonal = _is_diagonal(s)
    rows = []
    for p in grid:
        point = s.with_power(p)
        row = {
            "P": float(p),
            "cut_set_mimo": cut_set_mimo(point),
            "pnc_mimo": pnc_mimo(point),
            "df_symmetric_rate": df_symmetric_rate(point),
        }
        if diagonal:
            row["per_element_pnc"] = per_element_pnc(point)
        rows.append(row)
    return rows


def power_mapping_note(s: TwrcScenario) -> str:
    if s.power_kind is PowerKind.PER_ANTENNA:
        return (
            f"power_kind=per_antenna; P is per antenna; total budget = N_t*P "
            f"(N_t = {s.h1.shape[1]}, {s.h2.shape[1]}); rates are symmetric R per terminal"
        )
    return "power_kind=total; P is the total budget per terminal; rates are symmetric R per terminal"


def sweep_csv(s: TwrcScenario, rows: list[dict]) -> str:
    """CSV with a ``#`` metadata line, a header row and ``%.12g`` numbers."""
    buf = io.StringIO()
    buf.write(f"# {power_mapping_note(s)}; c_common={s.c_common:.12g}\n")
    columns = ["P", *[c for c in COLUMNS if c in rows[0]]]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([f"{row[c]:.12g}" for c in columns])
    return buf.getvalue()


def read_sweep_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return [{k: float(v) for k, v in row.items()} for row in reader]
