"""Monte Carlo realization of the zero-forcing dirty-paper schemes.

Each subchannel carries uncoded symbols from a one-dimensional modulo
lattice: ``levels`` equally spaced points in ``[-w, w)`` with spacing
``delta = 2 w / levels``, so sums of symbols stay on the same grid modulo
``2 w``.  Transmitters pre-cancel, subchannel by subchannel, both the
self-interference of the triangular factor and their own known interference
``(U^T s_k)_i``; the receiver applies ``U^T``, scales by ``1 / d_i`` and
takes the nearest lattice point modulo ``2 w``.

Randomness is counter based: the trials are cut into fixed blocks and block
``b`` draws from a Philox stream keyed by the seed with ``b`` in the counter,
so results do not depend on execution order.  Interference has its own
stream, so changing it leaves messages, dither and noise untouched.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .decomp import gmd, jet_shared_left
from .errors import DimensionMismatch, NotProper, ParseError, PowerViolation
from .linalg import DEFAULT_TOL, ProperChannel, as_matrix, matrix_from_json, qr_lower, validate_proper

BLOCK = 4096
POWER_RTOL = 1e-6


class Dither(enum.Enum):
    NONE = "none"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class LatticeConfig:
    """Scalar modulo lattice used on every subchannel.

    ``halfwidth`` is ``w`` (scalar or one per subchannel).  ``None`` picks
    ``sqrt(P / N_r)``, which bounds every transmitted symbol by ``w`` and so
    keeps the realized power within budget on every run, not just on average.
    """

    halfwidth: float | tuple[float, ...] | None = None
    levels: int = 16
    dither: Dither = Dither.UNIFORM

    def __post_init__(self):
        object.__setattr__(self, "dither", Dither(self.dither))
        if self.levels < 2:
            raise ValueError("need at least two lattice levels")
        if self.halfwidth is not None:
            hw = tuple(float(x) for x in np.atleast_1d(self.halfwidth))
            if any(not x > 0 for x in hw):
                raise ValueError("halfwidth must be positive")
            object.__setattr__(self, "halfwidth", hw)

    def widths(self, n_r: int, power: float) -> np.ndarray:
        if self.halfwidth is None:
            return np.full(n_r, np.sqrt(power / n_r))
        w = np.asarray(self.halfwidth, dtype=float)
        if w.size == 1:
            w = np.full(n_r, w[0])
        if w.size != n_r:
            raise DimensionMismatch(f"{w.size} halfwidths for {n_r} subchannels")
        # a uniform symbol on [-w, w) has power w^2 / 3
        if np.any(w**2 / 3 > power / n_r * (1 + 1e-9)):
            raise PowerViolation(f"halfwidths {w.tolist()} exceed the per-subchannel budget {power / n_r:.6g}")
        return w


@dataclass(frozen=True)
class InterferenceSpec:
    """Known-interference generator: ``zero``, ``constant``, ``uniform`` or
    ``sign_flip`` (amplitude times ``(-1)^(trial + entry)``)."""

    kind: str = "zero"
    amplitude: float = 0.0

    KINDS = ("zero", "constant", "uniform", "sign_flip")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown interference kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, first_trial: int, count: int, dim: int) -> np.ndarray:
        a = float(self.amplitude)
        if self.kind == "zero" or a == 0.0:
            return np.zeros((count, dim))
        if self.kind == "constant":
            return np.full((count, dim), a)
        if self.kind == "uniform":
            return rng.uniform(-a, a, size=(count, dim))
        parity = (np.arange(first_trial, first_trial + count)[:, None] + np.arange(dim)[None, :]) % 2
        return a * (1.0 - 2.0 * parity)

    @classmethod
    def from_json(cls, obj) -> "InterferenceSpec":
        if obj is None:
            return cls()
        return cls(str(obj.get("kind", "zero")), float(obj.get("amplitude", 0.0)))


@dataclass
class SimReport:
    scheme: str
    seed: int
    trials: int
    levels: int
    halfwidth: list[float]
    diag: list[float]
    gain: list[float]
    gain_se: list[float]
    noise_var: list[float]
    symbol_errors: list[int]
    interference_invariant: bool
    residual_self_interference: float
    realized_power: list[float]
    power_budget: list[float]
    terminal_errors: list[list[int]] | None = None
    implication_violations: int | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    def summary(self) -> str:
        return (
            f"{self.scheme}: trials={self.trials} seed={self.seed} errors={self.symbol_errors} "
            f"interference_invariant={str(self.interference_invariant).lower()} "
            f"residual={self.residual_self_interference:.3g}"
        )


def _cmod(x, width):
    """Reduce into ``[-w, w)`` for period ``2 w``."""
    return x - 2 * width * np.floor((x + width) / (2 * width))


def _streams(seed: int, block: int):
    key = int(seed) % (1 << 128)
    main = np.random.Generator(np.random.Philox(key=key, counter=[0, 0, block, 0]))
    interf = np.random.Generator(np.random.Philox(key=key, counter=[0, 0, block, 1]))
    return main, interf


@dataclass
class _Link:
    """Factored multi-user link ``H_k = U T_k V_k^T`` with common diagonal."""

    channels: list[np.ndarray]
    u: np.ndarray
    factors: list[tuple[np.ndarray, np.ndarray]]  # (V_k, T_k)
    diag: np.ndarray
    powers: list[float]

    @property
    def n_r(self) -> int:
        return self.u.shape[0]


def _simulate(
    link: _Link,
    scheme: str,
    interferences: list[InterferenceSpec],
    lattice: LatticeConfig,
    trials: int,
    seed: int,
    noise_scale: float,
) -> SimReport:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    n_r, users = link.n_r, len(link.channels)
    if len(interferences) != users:
        raise DimensionMismatch(f"{len(interferences)} interference specs for {users} users")
    w = lattice.widths(n_r, min(link.powers))
    levels = lattice.levels
    delta = 2 * w / levels
    d = link.diag
    check_invariance = any(s.kind != "zero" and s.amplitude != 0 for s in interferences)

    errors = np.zeros(n_r, dtype=np.int64)
    term_errors = np.zeros((users, n_r), dtype=np.int64)
    violations = 0
    s_xx = np.zeros(n_r)
    s_ex = np.zeros(n_r)
    s_ee = np.zeros(n_r)
    power_sum = np.zeros(users)
    residual = 0.0
    invariant = True

    for b, start in enumerate(range(0, trials, BLOCK)):
        count = min(BLOCK, trials - start)
        rng, rng_s = _streams(seed, b)
        msgs, dithers = [], []
        for _ in range(users):
            msgs.append(rng.integers(0, levels, size=(count, n_r)))
            if lattice.dither is Dither.UNIFORM:
                dithers.append(rng.uniform(-w, w, size=(count, n_r)))
            else:
                dithers.append(np.zeros((count, n_r)))
        noise = rng.standard_normal((count, n_r)) * noise_scale
        interf = [spec.sample(rng_s, start, count, n_r) for spec in interferences]

        def transmit(ss):
            y_clean = np.zeros((count, n_r))
            known = np.zeros((count, n_r))
            sent = np.zeros((count, n_r))
            energy = np.zeros(users)
            for k in range(users):
                v_k, t_k = link.factors[k]
                values = _cmod(msgs[k] * delta, w)
                s_eff = ss[k] @ link.u
                xt = np.zeros((count, n_r))
                for i in range(n_r):
                    pre = xt[:, :i] @ t_k[i, :i] + s_eff[:, i]
                    xt[:, i] = _cmod(values[:, i] - dithers[k][:, i] - pre / d[i], w[i])
                x = xt @ v_k[:, :n_r].T
                energy[k] = np.sum(x**2)
                y_clean += x @ link.channels[k].T + ss[k]
                known += xt @ np.tril(t_k[:, :n_r], -1).T + s_eff
                sent += xt
            return y_clean, known, sent, energy

        y_clean, known, sent, energy = transmit(interf)
        y_tilde = (y_clean + noise) @ link.u
        dither_sum = sum(dithers)
        obs = y_tilde / d + dither_sum
        decoded = np.mod(np.rint(obs / delta).astype(np.int64), levels)
        truth = np.mod(sum(msgs), levels)
        wrong = decoded != truth
        errors += wrong.sum(axis=0)
        power_sum += energy

        clean_obs = (y_clean @ link.u) / d + dither_sum
        intended = _cmod(truth * delta, w)
        dev = np.abs(_cmod(clean_obs - intended, w)) / w
        residual = max(residual, float(dev.max()))

        eff = y_tilde - known
        s_xx += np.sum(sent**2, axis=0)
        s_ex += np.sum(eff * sent, axis=0)
        s_ee += np.sum(eff**2, axis=0)

        if scheme == "twrc":
            for k in range(users):
                other = msgs[1 - k]
                recovered = np.mod(decoded - msgs[k], levels)
                bad = recovered != other
                term_errors[1 - k] += bad.sum(axis=0)
                violations += int(np.count_nonzero(bad & ~wrong))

        if check_invariance and invariant:
            zeros = [np.zeros_like(s) for s in interf]
            yz = transmit(zeros)[0]
            yz_tilde = (yz + noise) @ link.u
            dz = np.mod(np.rint((yz_tilde / d + dither_sum) / delta).astype(np.int64), levels)
            invariant = bool(np.array_equal(dz, decoded))

    realized = (power_sum / trials).tolist()
    for k, (p_real, budget) in enumerate(zip(realized, link.powers)):
        if p_real > budget * (1 + POWER_RTOL):
            raise PowerViolation(f"user {k + 1} realized power {p_real:.9g} exceeds budget {budget:.9g}")

    gain = s_ex / s_xx
    rss = np.maximum(s_ee - s_ex**2 / s_xx, 0.0)
    noise_var = rss / max(trials - 1, 1)
    gain_se = np.sqrt(noise_var / s_xx)
    return SimReport(
        scheme=scheme,
        seed=int(seed),
        trials=int(trials),
        levels=levels,
        halfwidth=w.tolist(),
        diag=d.tolist(),
        gain=gain.tolist(),
        gain_se=gain_se.tolist(),
        noise_var=noise_var.tolist(),
        symbol_errors=errors.tolist(),
        interference_invariant=invariant,
        residual_self_interference=residual,
        realized_power=realized,
        power_budget=[float(p) for p in link.powers],
        terminal_errors=term_errors.tolist() if scheme == "twrc" else None,
        implication_violations=violations if scheme == "twrc" else None,
    )


def _proper(h) -> np.ndarray:
    h = as_matrix(h.h if isinstance(h, ProperChannel) else h)
    report = validate_proper(h, DEFAULT_TOL.proper)
    if not report.accepted:
        raise NotProper("; ".join(report.failures))
    return h


def _power(h, power):
    if power is None:
        if not isinstance(h, ProperChannel):
            raise ValueError("power is required for a bare matrix")
        return h.power
    return float(power)


def run_single_user_zf_dpc(
    h,
    interference: InterferenceSpec | None = None,
    lattice: LatticeConfig = LatticeConfig(),
    trials: int = 1000,
    seed: int = 0,
    noise_scale: float = 1.0,
    power: float | None = None,
    decomposition: str = "gmd",
) -> SimReport:
    """Single-user ZF dirty-paper transmission over ``y = H x + s + z``.

    ``decomposition`` selects the triangularization: ``gmd`` (equal diagonal)
    or ``qr`` (receiver-free RQ form, ``U = I``).
    """
    p = _power(h, power)
    hm = _proper(h)
    if decomposition == "gmd":
        g = gmd(hm)
        u, t, v = g.u, g.t, g.v
    elif decomposition == "qr":
        v, t = qr_lower(hm)
        u = np.eye(hm.shape[0])
    else:
        raise ValueError(f"unknown decomposition {decomposition!r}")
    link = _Link([hm], u, [(v, t)], np.diag(t).copy(), [p])
    return _simulate(link, "single_user", [interference or InterferenceSpec()], lattice, trials, seed, noise_scale)


def _jet_link(h1, h2, powers) -> _Link:
    m1, m2 = _proper(h1), _proper(h2)
    if m1.shape[0] != m2.shape[0]:
        raise DimensionMismatch("channels do not share the receive dimension")
    jt = jet_shared_left(m1, m2)
    return _Link([m1, m2], jt.shared, list(jt.per_matrix), jt.diag.copy(), list(powers))


def run_two_user_dmac(
    h1,
    h2,
    interferences=(None, None),
    lattice: LatticeConfig = LatticeConfig(),
    trials: int = 1000,
    seed: int = 0,
    noise_scale: float = 1.0,
    powers: tuple[float, float] | None = None,
) -> SimReport:
    """Two-user dirty MAC; the receiver decodes the modulo sum per subchannel."""
    if powers is None:
        powers = (_power(h1, None), _power(h2, None))
    link = _jet_link(h1, h2, powers)
    specs = [s or InterferenceSpec() for s in interferences]
    return _simulate(link, "dmac", specs, lattice, trials, seed, noise_scale)


def run_twrc_pnc_mac_phase(
    scenario,
    lattice: LatticeConfig = LatticeConfig(),
    trials: int = 1000,
    seed: int = 0,
    noise_scale: float = 1.0,
    interferences=(None, None),
) -> SimReport:
    """MAC phase of the relay scheme: the relay decodes the modulo sum and
    each terminal subtracts its own symbol to recover the other's."""
    totals = scenario.powers().totals()
    if totals[0] != totals[1]:
        raise ValueError("the relay scheme needs symmetric powers")
    link = _jet_link(scenario.h1, scenario.h2, totals.tolist())
    specs = [s or InterferenceSpec() for s in interferences]
    return _simulate(link, "twrc", specs, lattice, trials, seed, noise_scale)


# --------------------------------------------------------------------------
# JSON config
# --------------------------------------------------------------------------


@dataclass
class SimConfig:
    scheme: str
    channels: list[np.ndarray]
    powers: list[float]
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    interference: list[InterferenceSpec] = field(default_factory=list)
    trials: int = 1000
    seed: int | None = None
    noise_scale: float = 1.0
    decomposition: str = "gmd"

    @classmethod
    def from_json(cls, obj: dict) -> "SimConfig":
        try:
            scheme = obj["scheme"]
            if scheme not in ("single_user", "dmac", "twrc"):
                raise ValueError(f"unknown scheme {scheme!r}")
            channels = [matrix_from_json(m) for m in obj["channels"]]
            powers = [float(p) for p in np.atleast_1d(obj["power"])]
            if len(powers) == 1:
                powers = powers * len(channels)
            if obj.get("power_kind", "total") == "per_antenna":
                powers = [p * h.shape[1] for p, h in zip(powers, channels)]
            lat = obj.get("lattice", {}) or {}
            lattice = LatticeConfig(lat.get("halfwidth"), int(lat.get("levels", 16)), Dither(lat.get("dither", "uniform")))
            specs = obj.get("interference", [])
            if isinstance(specs, dict):
                specs = [specs] * len(channels)
            interference = [InterferenceSpec.from_json(s) for s in specs] or [InterferenceSpec()] * len(channels)
            seed = obj.get("seed")
            return cls(
                scheme,
                channels,
                powers,
                lattice,
                interference,
                int(obj.get("trials", 1000)),
                None if seed is None else int(seed),
                float(obj.get("noise_scale", 1.0)),
                obj.get("decomposition", "gmd"),
            )
        except ParseError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad simulation config: {exc}") from exc

    def run(self, seed: int | None = None) -> SimReport:
        seed = self.seed if seed is None else seed
        if seed is None:
            raise ValueError("a seed is required")
        expected = 1 if self.scheme == "single_user" else 2
        if len(self.channels) != expected or len(self.interference) != expected:
            raise DimensionMismatch(f"scheme {self.scheme} needs {expected} channel(s) and interference spec(s)")
        common = dict(lattice=self.lattice, trials=self.trials, seed=seed, noise_scale=self.noise_scale)
        if self.scheme == "single_user":
            return run_single_user_zf_dpc(
                self.channels[0], self.interference[0], power=self.powers[0], decomposition=self.decomposition, **common
            )
        if self.scheme == "dmac":
            return run_two_user_dmac(
                self.channels[0], self.channels[1], self.interference, powers=tuple(self.powers[:2]), **common
            )
        from .twrc import TwrcScenario

        if self.powers[0] != self.powers[1]:
            raise ValueError("the relay scheme needs symmetric powers")
        scenario = TwrcScenario(self.channels[0], self.channels[1], self.powers[0])
        return run_twrc_pnc_mac_phase(scenario, interferences=self.interference, **common)
