"""Simulated device backends for closed-loop tuning.

Two of the three cost functions live here: Pauli-spin-blockade readout
visibility over 14 gate-voltage and timing parameters, and shuttling
echo amplitude over 8 gate offsets. Both evaluate a candidate vector in
the normalized unit cube against a hidden landscape whose optimum is
planted at construction, so optimizer runs can be scored against ground
truth. The single-qubit benchmarking backend is in ``rb``.

Evaluations are deterministic given the landscape seed and an explicit
shot seed, which keeps parallel candidate evaluation reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dqd import DqdConfig, initialization_fidelity

__all__ = [
    "SpaceEntry",
    "ParameterSpace",
    "ReadoutShots",
    "CostEvaluation",
    "HiddenLandscape",
    "readout_space",
    "shuttle_space",
    "rb_space",
    "visibility",
    "visibility_to_fidelity",
    "make_readout_landscape",
    "make_shuttle_landscape",
    "true_readout_visibility",
    "readout_backend_evaluate",
    "shuttle_depolarization",
    "shuttle_backend_evaluate",
    "READOUT_CEILING",
    "SHUTTLE_P_OPTIMUM",
    "SHUTTLE_P_WORST",
    "DEFAULT_SHUTTLE_DISTANCE_UM",
]

READOUT_CEILING = 0.995
READOUT_BASE_VISIBILITY = 0.05

SHUTTLE_P_OPTIMUM = 0.0192
SHUTTLE_P_WORST = 0.117
SHUTTLE_SEGMENT_UM = 10.0
DEFAULT_SHUTTLE_DISTANCE_UM = 172.8

# Integrator steps for the embedded initialization-ramp fidelity. The
# closed loop calls this once per candidate, so it runs coarser than the
# standalone quantum-sim default; the fidelity is converged to ~1e-4
# here, far below the binomial shot noise it feeds into.
_INIT_STEPS = 300

# Physical ranges the four initialization-stage parameters map onto
# (linear in the normalized coordinate).
_INIT_EPS0_GHZ = (-50.0, 0.0)
_INIT_EPSF_GHZ = (20.0, 80.0)
_INIT_TC_GHZ = (2.0, 12.0)
_INIT_RAMP_NS = (0.05, 8.0)
_INIT_ZEEMAN_GHZ = 0.3


@dataclass(frozen=True)
class SpaceEntry:
    """One named physical parameter with bounds and unit."""

    name: str
    low: float
    high: float
    unit: str

    def __post_init__(self) -> None:
        if not self.low < self.high:
            raise ValueError(
                f"parameter {self.name!r}: low {self.low} must be < high {self.high}"
            )


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered set of named parameters with normalize/denormalize maps.

    The optimizer works in the unit cube; backends and exports use
    physical units. ``normalize`` and ``denormalize`` are exact inverses
    up to floating-point roundoff.
    """

    entries: tuple[SpaceEntry, ...]

    def __post_init__(self) -> None:
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        if not self.entries:
            raise ValueError("parameter space must not be empty")

    @property
    def dimension(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def index(self, name: str) -> int:
        for i, e in enumerate(self.entries):
            if e.name == name:
                return i
        raise KeyError(f"unknown parameter {name!r}")

    def lows(self) -> np.ndarray:
        return np.array([e.low for e in self.entries])

    def highs(self) -> np.ndarray:
        return np.array([e.high for e in self.entries])

    def normalize(self, values: np.ndarray) -> np.ndarray:
        """Map physical values to the unit cube."""
        values = np.asarray(values, dtype=float)
        self._check_shape(values)
        lo, hi = self.lows(), self.highs()
        return (values - lo) / (hi - lo)

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        """Map unit-cube coordinates to physical values."""
        x = np.asarray(x, dtype=float)
        self._check_shape(x)
        lo, hi = self.lows(), self.highs()
        return lo + (hi - lo) * x

    def _check_shape(self, arr: np.ndarray) -> None:
        if arr.shape != (self.dimension,):
            raise ValueError(
                f"expected a vector of length {self.dimension}, got shape {arr.shape}"
            )

    def to_dicts(self) -> list[dict]:
        return [
            {"name": e.name, "low": e.low, "high": e.high, "unit": e.unit}
            for e in self.entries
        ]

    @classmethod
    def from_dicts(cls, items: list[dict]) -> "ParameterSpace":
        return cls(tuple(SpaceEntry(d["name"], d["low"], d["high"], d["unit"]) for d in items))


def readout_space() -> ParameterSpace:
    """The 14 tunable parameters of the readout and initialization stages.

    Four of them (vP1_init, vP2_init, B1_init, t_read_init) feed the
    double-dot ramp model; the rest act through the planted quadratic
    landscape only.
    """
    mv = "mV"
    ns = "ns"
    return ParameterSpace((
        SpaceEntry("ve12_read", -3.0, 3.0, mv),
        SpaceEntry("vmu12_read", -3.0, 3.0, mv),
        SpaceEntry("B0_read", -50.0, 50.0, mv),
        SpaceEntry("B1_read", -50.0, 50.0, mv),
        SpaceEntry("B2_read", -50.0, 50.0, mv),
        SpaceEntry("B1_init", -50.0, 50.0, mv),
        SpaceEntry("vP1_init", -5.0, 5.0, mv),
        SpaceEntry("vP2_init", -5.0, 5.0, mv),
        SpaceEntry("vP2_zero", -5.0, 5.0, mv),
        SpaceEntry("vP3_zero", -5.0, 5.0, mv),
        SpaceEntry("t_measure", 100.0, 5000.0, ns),
        SpaceEntry("t_zero_read", 10.0, 500.0, ns),
        SpaceEntry("t_read_init", 0.05, 8.0, ns),
        SpaceEntry("t_init_zero", 10.0, 500.0, ns),
    ))


def shuttle_space() -> ParameterSpace:
    """The 8 gate-offset voltages of the conveyor shuttling pulse."""
    mv = "mV"
    return ParameterSpace(tuple(
        SpaceEntry(name, -10.0, 10.0, mv)
        for name in ("vP1", "vP2", "vP3", "vP4", "B1", "B2", "B3", "B4")
    ))


def rb_space() -> ParameterSpace:
    """Drive-pulse parameters for single-qubit gate benchmarking.

    Bounds bracket a roughly calibrated working point, as in fine
    tuning on a live device; they keep the quarter-turn pulse between
    a 50 and a 150 degree rotation everywhere in the box, so no corner
    degenerates into do-nothing pulses that trivially return the state.
    """
    return ParameterSpace((
        SpaceEntry("t_d", 10.0, 16.0, "ns"),
        SpaceEntry("A", 7.0, 13.0, "mV"),
        SpaceEntry("f", 995.0, 1005.0, "MHz"),
    ))


@dataclass(frozen=True)
class ReadoutShots:
    """Counts from a pair of parity-readout shot batches."""

    n_shots: int
    odd_given_odd: int
    odd_given_even: int

    def __post_init__(self) -> None:
        if self.n_shots <= 0:
            raise ValueError("n_shots must be positive")
        for label, count in (("odd_given_odd", self.odd_given_odd),
                             ("odd_given_even", self.odd_given_even)):
            if not 0 <= count <= self.n_shots:
                raise ValueError(f"{label} count {count} outside [0, {self.n_shots}]")


def visibility(shots: ReadoutShots) -> float:
    """Readout visibility: fraction odd after odd prep minus odd after even prep."""
    return (shots.odd_given_odd - shots.odd_given_even) / shots.n_shots


def visibility_to_fidelity(v: float) -> float:
    """Convert visibility to readout fidelity, (1 + V) / 2."""
    if not -1.0 <= v <= 1.0:
        raise ValueError(f"visibility {v} outside [-1, 1]")
    return 0.5 * (1.0 + v)


@dataclass(frozen=True)
class CostEvaluation:
    """Scalar cost for one candidate plus backend-specific metadata."""

    cost: float
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class HiddenLandscape:
    """Planted ground truth a backend evaluates against.

    ``optimum`` is the cost minimizer in normalized coordinates,
    ``coupling`` the SPD quadratic form giving curvature and crosstalk,
    and ``floor`` the planted best defect: one minus the peak visibility
    for the readout task, or the minimal depolarization parameter for
    the shuttle task.
    """

    optimum: np.ndarray
    coupling: np.ndarray
    floor: float
    shot_noise: bool
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "optimum", np.asarray(self.optimum, dtype=float))
        object.__setattr__(self, "coupling", np.asarray(self.coupling, dtype=float))
        n = self.optimum.shape[0]
        if self.coupling.shape != (n, n):
            raise ValueError("coupling shape does not match optimum length")
        if not np.allclose(self.coupling, self.coupling.T, atol=1e-12):
            raise ValueError("coupling must be symmetric")
        if np.linalg.eigvalsh(self.coupling)[0] <= 0:
            raise ValueError("coupling must be positive definite")
        if not 0.0 <= self.floor < 1.0:
            raise ValueError(f"floor {self.floor} outside [0, 1)")

    def quadratic(self, x: np.ndarray) -> float:
        """Crosstalk quadratic form evaluated at a normalized point."""
        d = np.asarray(x, dtype=float) - self.optimum
        return float(d @ self.coupling @ d)

    def to_dict(self) -> dict:
        return {
            "optimum": self.optimum.tolist(),
            "coupling": self.coupling.tolist(),
            "floor": self.floor,
            "shot_noise": self.shot_noise,
            "seed": self.seed,
        }

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def from_dict(cls, payload: dict) -> "HiddenLandscape":
        return cls(
            optimum=np.array(payload["optimum"], dtype=float),
            coupling=np.array(payload["coupling"], dtype=float),
            floor=float(payload["floor"]),
            shot_noise=bool(payload["shot_noise"]),
            seed=int(payload["seed"]),
        )

    @classmethod
    def load(cls, path: Path | str) -> "HiddenLandscape":
        return cls.from_dict(json.loads(Path(path).read_text()))


def make_readout_landscape(seed: int, ceiling: float = READOUT_CEILING,
                           shot_noise: bool = True) -> HiddenLandscape:
    """Build a seeded 14-parameter readout landscape.

    The four initialization-stage coordinates of the optimum are pinned
    to an adiabatic sweet spot of the ramp model; the crosstalk pairs
    (ve12_read, B2_read) and (vmu12_read, B1_read) carry off-diagonal
    couplings whose signs the covariance analysis should rediscover.
    """
    space = readout_space()
    n = space.dimension
    rng = np.random.default_rng(seed)
    optimum = rng.uniform(0.3, 0.7, n)
    optimum[space.index("vP1_init")] = 0.40
    optimum[space.index("vP2_init")] = 0.50
    optimum[space.index("B1_init")] = 0.80
    optimum[space.index("t_read_init")] = 0.50
    diag = rng.uniform(0.15, 0.6, n)
    coupling = np.diag(diag)
    i, j = space.index("ve12_read"), space.index("B2_read")
    coupling[i, j] = coupling[j, i] = -0.6 * np.sqrt(diag[i] * diag[j])
    i, j = space.index("vmu12_read"), space.index("B1_read")
    coupling[i, j] = coupling[j, i] = 0.6 * np.sqrt(diag[i] * diag[j])
    return HiddenLandscape(optimum, coupling, 1.0 - ceiling, shot_noise, seed)


def _init_stage_config(space: ParameterSpace, x: np.ndarray) -> DqdConfig:
    def lerp(bounds: tuple[float, float], v: float) -> float:
        lo, hi = bounds
        return lo + (hi - lo) * float(v)

    return DqdConfig(
        eps_initial=lerp(_INIT_EPS0_GHZ, x[space.index("vP1_init")]),
        eps_final=lerp(_INIT_EPSF_GHZ, x[space.index("vP2_init")]),
        ramp_time=lerp(_INIT_RAMP_NS, x[space.index("t_read_init")]),
        tunnel_coupling=lerp(_INIT_TC_GHZ, x[space.index("B1_init")]),
        zeeman_diff=_INIT_ZEEMAN_GHZ,
    )


_F_OPT_CACHE: dict[tuple[int, bytes], float] = {}


def _init_fidelity_at_optimum(landscape: HiddenLandscape, space: ParameterSpace) -> float:
    key = (landscape.seed, landscape.optimum.tobytes())
    if key not in _F_OPT_CACHE:
        cfg = _init_stage_config(space, landscape.optimum)
        _F_OPT_CACHE[key] = initialization_fidelity(cfg, n_steps=_INIT_STEPS)
    return _F_OPT_CACHE[key]


def true_readout_visibility(landscape: HiddenLandscape, space: ParameterSpace,
                            x: np.ndarray) -> float:
    """Noiseless visibility of the planted readout landscape at x.

    A Gaussian bump over the crosstalk quadratic is multiplied by the
    initialization-ramp fidelity relative to its value at the planted
    optimum, clamped at 1 so the optimum stays the unique maximizer even
    though the ramp model's own best point lies elsewhere.
    """
    x = np.asarray(x, dtype=float)
    f_init = initialization_fidelity(_init_stage_config(space, x), n_steps=_INIT_STEPS)
    f_opt = _init_fidelity_at_optimum(landscape, space)
    ratio = min(1.0, f_init / f_opt)
    ceiling = 1.0 - landscape.floor
    span = ceiling - READOUT_BASE_VISIBILITY
    return span * np.exp(-landscape.quadratic(x)) * ratio + READOUT_BASE_VISIBILITY


def _check_cube(x: np.ndarray, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"candidate must have dimension {dim}, got shape {x.shape}")
    if np.any(x < -1e-9) or np.any(x > 1 + 1e-9):
        raise ValueError("candidate outside the unit cube")
    return np.clip(x, 0.0, 1.0)


def readout_backend_evaluate(landscape: HiddenLandscape, space: ParameterSpace,
                             x: np.ndarray, n_shots: int,
                             shot_seed: int = 0) -> CostEvaluation:
    """Evaluate readout visibility at x; cost is the negated visibility.

    With ``landscape.shot_noise`` the two parity fractions are drawn
    binomially with ``n_shots`` trials each, seeded by the landscape
    seed and ``shot_seed``.
    """
    x = _check_cube(x, space.dimension)
    if space.dimension != 14:
        raise ValueError("readout backend expects the 14-parameter space")
    v_true = true_readout_visibility(landscape, space, x)
    meta: dict = {"true_visibility": v_true}
    if landscape.shot_noise:
        if n_shots <= 0:
            raise ValueError("n_shots must be positive")
        rng = np.random.default_rng((landscape.seed, shot_seed))
        p_odd = 0.5 * (1.0 + v_true)
        p_even = 0.5 * (1.0 - v_true)
        shots = ReadoutShots(
            n_shots=n_shots,
            odd_given_odd=int(rng.binomial(n_shots, p_odd)),
            odd_given_even=int(rng.binomial(n_shots, p_even)),
        )
        v_meas = visibility(shots)
        meta["shots"] = {
            "n_shots": shots.n_shots,
            "odd_given_odd": shots.odd_given_odd,
            "odd_given_even": shots.odd_given_even,
        }
    else:
        v_meas = v_true
    meta["visibility"] = v_meas
    meta["fidelity"] = visibility_to_fidelity(max(-1.0, min(1.0, v_meas)))
    return CostEvaluation(cost=-v_meas, metadata=meta)


def make_shuttle_landscape(seed: int, p_optimum: float = SHUTTLE_P_OPTIMUM,
                           shot_noise: bool = False) -> HiddenLandscape:
    """Build a seeded 8-parameter shuttle landscape.

    The coupling is a dense random SPD form rescaled so the quadratic
    equals 1 at its worst corner of the unit cube; the depolarization
    parameter then interpolates p_optimum..p_worst exactly.
    """
    n = shuttle_space().dimension
    rng = np.random.default_rng(seed)
    optimum = rng.uniform(0.3, 0.7, n)
    a = rng.standard_normal((n, n))
    raw = a @ a.T + n * np.eye(n)
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * n)).reshape(n, -1).T
    d = corners - optimum
    worst = np.max(np.einsum("ki,ij,kj->k", d, raw, d))
    return HiddenLandscape(optimum, raw / worst, p_optimum, shot_noise, seed)


def shuttle_depolarization(landscape: HiddenLandscape, x: np.ndarray,
                           p_worst: float = SHUTTLE_P_WORST) -> float:
    """Depolarization parameter p(x) of the planted shuttle landscape.

    The quadratic form stays within [0, 1] on the unit cube (it is
    convex, so its maximum sits at the corner used for normalization),
    which pins p to [floor, p_worst] with the floor attained exactly at
    the planted optimum.
    """
    return landscape.floor + (p_worst - landscape.floor) * landscape.quadratic(x)


def shuttle_backend_evaluate(landscape: HiddenLandscape, space: ParameterSpace,
                             x: np.ndarray,
                             distance: float = DEFAULT_SHUTTLE_DISTANCE_UM,
                             n_shots: int = 1000,
                             shot_seed: int = 0) -> CostEvaluation:
    """Evaluate the spin-echo amplitude after shuttling over ``distance``.

    The echo amplitude follows A(x) = (1 - p(x)) ** (distance / 10 um),
    measured as the contrast between the two echo circuit variants, and
    the cost is 1 - A.
    """
    x = _check_cube(x, space.dimension)
    if space.dimension != 8:
        raise ValueError("shuttle backend expects the 8-parameter space")
    if distance < 0:
        raise ValueError("distance must be non-negative")
    p = shuttle_depolarization(landscape, x)
    amplitude = (1.0 - p) ** (distance / SHUTTLE_SEGMENT_UM)
    meta: dict = {"p": p, "true_amplitude": amplitude, "distance_um": distance}
    if landscape.shot_noise:
        if n_shots <= 0:
            raise ValueError("n_shots must be positive")
        rng = np.random.default_rng((landscape.seed, shot_seed))
        f_plus = rng.binomial(n_shots, 0.5 * (1.0 + amplitude)) / n_shots
        f_minus = rng.binomial(n_shots, 0.5 * (1.0 - amplitude)) / n_shots
        measured = f_plus - f_minus
        meta["shots"] = {"n_shots": n_shots, "f_plus": f_plus, "f_minus": f_minus}
    else:
        measured = amplitude
    meta["amplitude"] = measured
    return CostEvaluation(cost=1.0 - measured, metadata=meta)
