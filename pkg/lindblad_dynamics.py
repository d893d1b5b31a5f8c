"""
Открытая динамика: лиувиллиан, стационарные состояния, захват однофотонного импульса.

Векторизация по столбцам: vec(AρB) = (Bᵀ ⊗ A) vec(ρ).
Все времена в нс, все частоты внутри в рад/нс.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, sparse, special

from core_model import DispersiveParams, DriveSpec, ProbeSpec, angular
from dressed_engine import (
    FrameSpec,
    Operators,
    build_hamiltonian,
    captured_projector,
    diagonalize_dressed,
    transition_frequencies,
)
from simulation_errors import (
    ConfigError,
    ConvergenceError,
    FitError,
    LambdaScopeError,
    SteadyStateError,
    WeakDriveError,
)

logger = logging.getLogger(__name__)

STEADY_RESIDUAL = 1e-10
WEAK_DRIVE_LIMIT = 0.01  # максимум ⟨a†a⟩ для слабого сигнала
WEAK_FLUX_FRACTION = 1e-3  # |α_in|² в долях γ
STEP_HALVING_TOLERANCE = 1e-4
TRUNCATION_TOLERANCE = 1e-3
PLATEAU_RTOL = 1e-9  # равные максимумы p̄_e
PULSE_WINDOW_WIDTHS = 3.0
LIFETIME_WINDOW_NS = (500.0, 5000.0)
LIFETIME_RESIDUAL_LIMIT = 0.05
DARK_COUNT_WINDOW_NS = (100.0, 600.0)
DARK_COUNT_FLOOR = 1e-4  # 1/мкс, ниже наклон не проверяется
DARK_SLOPE_TOLERANCE = 0.25
MIN_FIT_SPAN_NS = 100.0
NS_PER_US = 1e3


# --- Векторизация и супероператоры ---

def vectorize(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvectorize(vec: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(vec).reshape(dim, dim, order="F")


def spre(op) -> sparse.csr_matrix:
    """vec(Aρ) = (I ⊗ A) vec ρ"""
    op = sparse.csr_matrix(op)
    return sparse.kron(sparse.identity(op.shape[0], format="csr"), op, format="csr")


def spost(op) -> sparse.csr_matrix:
    """vec(ρB) = (Bᵀ ⊗ I) vec ρ"""
    op = sparse.csr_matrix(op)
    return sparse.kron(op.T, sparse.identity(op.shape[0], format="csr"), format="csr")


def lindblad_dissipator(collapse: np.ndarray) -> sparse.csr_matrix:
    """D[c]ρ = cρc† − ½{c†c, ρ}"""
    c = sparse.csr_matrix(collapse)
    cdc = (c.conj().T @ c).tocsr()
    jump = sparse.kron(c.conj(), c, format="csr")
    return (jump - 0.5 * spre(cdc) - 0.5 * spost(cdc)).tocsr()


def transpose_permutation(dim: int) -> np.ndarray:
    """Перестановка индексов: vec(Mᵀ) = vec(M)[perm]"""
    k = np.arange(dim * dim)
    return (k % dim) * dim + k // dim


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    diff = rho - sigma
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())


# --- Типы ---

@dataclass(frozen=True)
class CoherentDrive:
    """Когерентное поле на входе резонатора: i√κ(α x† − α* x)"""

    target: str  # "a" или "b"
    alpha: complex  # √(фотон/нс)
    frequency: float  # ГГц, задает вращение подсистемы

    def __post_init__(self):
        if self.target not in ("a", "b"):
            raise ConfigError(f"Coherent drive target must be 'a' or 'b', got '{self.target}'",
                              {"target": self.target})


class PulseSpec(BaseModel):
    """Гауссов однофотонный импульс ξ(t) = (8 ln2/πl²)^¼ · 2^(−t²/(l/2)²)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    omega_s: float = Field(..., gt=0, description="GHz")
    length: float = Field(..., gt=0, description="ns")
    amplitude: float = Field(1.0, ge=0, le=1)
    t0: Optional[float] = None
    t1: Optional[float] = None

    @model_validator(mode="after")
    def _window(self) -> "PulseSpec":
        if self.start >= self.end:
            raise ValueError(f"empty pulse window [{self.start}, {self.end}] ns")
        return self

    @property
    def start(self) -> float:
        return self.t0 if self.t0 is not None else -PULSE_WINDOW_WIDTHS * self.length

    @property
    def end(self) -> float:
        return self.t1 if self.t1 is not None else PULSE_WINDOW_WIDTHS * self.length

    def envelope(self, t):
        norm = (8.0 * math.log(2.0) / (math.pi * self.length ** 2)) ** 0.25
        return self.amplitude * norm * np.power(2.0, -(np.asarray(t) / (0.5 * self.length)) ** 2)

    def delivered(self, t):
        """∫_{−∞}^t |ξ|² в замкнутом виде"""
        arg = math.sqrt(8.0 * math.log(2.0)) * np.asarray(t) / self.length
        return self.amplitude ** 2 * 0.5 * (1.0 + special.erf(arg))

    def norm_on_grid(self, dt: float) -> float:
        grid = np.arange(self.start, self.end + 0.5 * dt, dt)
        return float(integrate.trapezoid(np.abs(self.envelope(grid)) ** 2, grid))

    def with_length(self, length: float) -> "PulseSpec":
        return PulseSpec(**{**self.model_dump(), "length": length, "t0": None, "t1": None})

    def with_carrier(self, omega_s: float) -> "PulseSpec":
        return PulseSpec(**{**self.model_dump(), "omega_s": omega_s})


@dataclass
class Liouvillian:
    """Генератор Линдблада в векторизованной форме"""

    superop: sparse.csr_matrix
    hamiltonian: np.ndarray
    collapse: Dict[str, np.ndarray]
    ops: Operators
    frame: FrameSpec
    dp: DispersiveParams
    drive: DriveSpec

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvectorize(self.superop @ vectorize(rho), self.dim)

    def dense(self) -> np.ndarray:
        return self.superop.toarray()

    def expectation_weights(self, op: np.ndarray) -> np.ndarray:
        """w такой, что tr(Oρ) = w · vec(ρ)"""
        return vectorize(np.asarray(op).T)


@dataclass
class Trajectory:
    """Равномерная сетка времени и наблюдаемые"""

    t: np.ndarray
    p_e: np.ndarray
    n_a: np.ndarray
    n_b: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)
    pbar_e: Optional[np.ndarray] = None

    @property
    def step(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def max_p_e(self) -> float:
        return float(np.max(self.p_e))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"t_ns": self.t, "p_e": self.p_e, "n_a": self.n_a, "n_b": self.n_b})
        if self.pbar_e is not None:
            frame["pbar_e"] = self.pbar_e
        return frame


@dataclass
class MovingAverage:
    t: np.ndarray
    pbar_e: np.ndarray  # NaN там, где окно выходит за начало
    t_m: float
    pbar_max: float
    window: float


@dataclass
class LifetimeResult:
    Gamma: float  # 1/мкс
    residual: float
    p_ss: float
    window_ns: Tuple[float, float]
    n_points: int

    @property
    def lifetime_us(self) -> float:
        return math.inf if self.Gamma <= 0 else 1.0 / self.Gamma


@dataclass
class DarkCountResult:
    rate: float  # 1/мкс
    per_photon: float
    flux: float  # фотонов в нс
    window_ns: Tuple[float, float]
    half_slopes: Tuple[float, float]

    @property
    def mean_time_us(self) -> float:
        return math.inf if self.rate <= 0 else 1.0 / self.rate


# --- Сборка генератора ---

def dynamics_frame(dp: DispersiveParams, drive: DriveSpec,
                   omega_s: Optional[float] = None,
                   omega_p: Optional[float] = None) -> FrameSpec:
    """Кубит на ω_d, A на несущей сигнала, B на частоте пробы"""
    return FrameSpec(
        qubit=drive.omega_d,
        a=omega_s if omega_s is not None else dp.omega_a,
        b=omega_p if omega_p is not None else dp.operating_probe_frequency(),
    )


def probe_drive(dp: DispersiveParams, probe: ProbeSpec) -> CoherentDrive:
    return CoherentDrive(target="b", alpha=probe.amplitude(dp.kappa_b), frequency=probe.omega_p)


def build_liouvillian(dp: DispersiveParams, drive: DriveSpec,
                      drives: Sequence[CoherentDrive] = (),
                      frame: Optional[FrameSpec] = None) -> Liouvillian:
    """Лиувиллиан с накачкой кубита и когерентными полями на резонаторах"""
    frame = frame or FrameSpec(qubit=drive.omega_d)
    for coherent in drives:
        frame = frame.merge(coherent.target, coherent.frequency)

    H = build_hamiltonian(dp, drive, frame)
    ops = H.ops
    hamiltonian = H.matrix.copy()

    kappa = {"a": dp.kappa_a_rad, "b": dp.kappa_b_rad}
    lowering = {"a": ops.a, "b": ops.b}
    for coherent in drives:
        x = lowering[coherent.target]
        term = 1j * math.sqrt(kappa[coherent.target]) * (coherent.alpha * x.conj().T
                                                         - np.conj(coherent.alpha) * x)
        hamiltonian += term

    collapse = {
        "a": math.sqrt(dp.kappa_a_rad) * ops.a,
        "b": math.sqrt(dp.kappa_b_rad) * ops.b,
        "qubit": math.sqrt(dp.gamma_rad) * ops.sigma,
    }

    superop = -1j * (spre(hamiltonian) - spost(hamiltonian))
    for channel in collapse.values():
        superop = superop + lindblad_dissipator(channel)

    return Liouvillian(
        superop=superop.tocsr(),
        hamiltonian=hamiltonian,
        collapse=collapse,
        ops=ops,
        frame=frame,
        dp=dp,
        drive=drive,
    )


def steady_state(L: Liouvillian) -> np.ndarray:
    """Прямое плотное решение L vec ρ = 0 с условием tr ρ = 1 вместо первой строки"""
    n = L.dim
    A = L.dense()
    A[0, :] = vectorize(np.eye(n))
    b = np.zeros(n * n, dtype=complex)
    b[0] = 1.0

    try:
        v = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as e:
        raise SteadyStateError(
            "Degenerate stationary manifold: generator has rank deficiency beyond the trace",
            {"dimension": n, "solver": str(e)},
        )

    residual = float(np.abs(A @ v - b).max())
    rho = unvectorize(v, n)
    rho = 0.5 * (rho + rho.conj().T)
    if not np.all(np.isfinite(v)) or residual > STEADY_RESIDUAL or np.abs(rho).max() > 1.0 + 1e-6:
        raise SteadyStateError(
            "Steady-state solve is ill-conditioned (degenerate stationary manifold?)",
            {"residual": residual, "max_element": float(np.abs(rho).max()), "dimension": n},
        )
    logger.debug(f"Steady state solved, residual {residual:.2e}")
    return rho


# --- Отражение ---

def empty_cavity_reflection(kappa: float, detuning: float) -> complex:
    """r = (iδ − κ/2)/(κ/2 + iδ), δ = ω_резонатора − ω_поля"""
    return (1j * detuning - 0.5 * kappa) / (0.5 * kappa + 1j * detuning)


def default_signal_amplitude(dp: DispersiveParams) -> float:
    return math.sqrt(WEAK_FLUX_FRACTION * dp.gamma_rad)


def reflection_coefficient(dp: DispersiveParams, drive: DriveSpec, omega_s: float,
                           alpha_in: Optional[complex] = None) -> complex:
    """r_s = 1 − √κ_a⟨a⟩/α_in для слабого непрерывного сигнала"""
    alpha = default_signal_amplitude(dp) if alpha_in is None else alpha_in
    signal = CoherentDrive(target="a", alpha=alpha, frequency=omega_s)
    L = build_liouvillian(dp, drive, [signal], dynamics_frame(dp, drive, omega_s=omega_s))
    rho = steady_state(L)

    photons = float(np.trace(L.ops.a.conj().T @ L.ops.a @ rho).real)
    if photons > WEAK_DRIVE_LIMIT:
        raise WeakDriveError(
            f"Signal too strong for linear response: steady <a+a> = {photons:.4g} > {WEAK_DRIVE_LIMIT}",
            {"n_a": photons, "alpha_in": abs(alpha), "limit": WEAK_DRIVE_LIMIT},
        )
    mean_a = np.trace(L.ops.a @ rho)
    return complex(1.0 - math.sqrt(dp.kappa_a_rad) * mean_a / alpha)


def _reflection_task(dp: DispersiveParams, omega_d: float, alpha_in: Optional[complex],
                     point: Tuple[float, float]) -> Dict[str, float]:
    Omega_d, omega_s = point
    drive = DriveSpec(omega_d=omega_d, Omega_d=Omega_d)
    try:
        r = reflection_coefficient(dp, drive, omega_s, alpha_in)
        lines = transition_frequencies(diagonalize_dressed(build_hamiltonian(dp, drive)))
    except LambdaScopeError as e:
        raise type(e)(f"{e.message} at Omega_d={Omega_d} MHz, omega_s={omega_s} GHz",
                      {**e.details, "Omega_d_MHz": Omega_d, "omega_s_GHz": omega_s})
    return {
        "Omega_d_MHz": Omega_d,
        "omega_s_GHz": omega_s,
        "abs_r": abs(r),
        "arg_r": math.atan2(r.imag, r.real),
        "omega_31_GHz": lines["omega_31"],
        "omega_41_GHz": lines["omega_41"],
    }


def reflection_map(dp: DispersiveParams, omega_d: float, Omega_list: Iterable[float],
                   omega_s_list: Iterable[float], alpha_in: Optional[complex] = None,
                   mapper: Callable = map) -> pd.DataFrame:
    """|r_s| на сетке (Ω_d, ω_s); mapper сохраняет порядок точек"""
    points = [(float(Om), float(ws)) for Om in Omega_list for ws in omega_s_list]
    rows = list(mapper(partial(_reflection_task, dp, omega_d, alpha_in), points))
    logger.info(f"📊 Reflection map: {len(rows)} points at omega_d={omega_d} GHz")
    return pd.DataFrame(rows)


# --- Интегрирование ---

class RK4Stepper:
    """Классический метод Рунге-Кутты 4-го порядка с постоянным шагом"""

    def __init__(self, rhs: Callable[[float, np.ndarray], np.ndarray], dt: float):
        self.rhs = rhs
        self.dt = dt

    def step(self, t: float, y: np.ndarray) -> np.ndarray:
        dt = self.dt
        k1 = self.rhs(t, y)
        k2 = self.rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = self.rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = self.rhs(t + dt, y + dt * k3)
        return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def run(self, y0: np.ndarray, t0: float, t1: float, record_dt: float,
            observe: Callable[[float, np.ndarray], None]) -> np.ndarray:
        record_every = max(1, int(round(record_dt / self.dt)))
        n_steps = int(math.ceil((t1 - t0) / self.dt - 1e-9))
        n_steps += (-n_steps) % record_every
        y = y0
        observe(t0, y)
        for k in range(1, n_steps + 1):
            y = self.step(t0 + (k - 1) * self.dt, y)
            if k % record_every == 0:
                observe(t0 + k * self.dt, y)
        return y


def dressed_density(dp: DispersiveParams, drive: DriveSpec, label: int) -> np.ndarray:
    """|ĩ⟩⟨ĩ| в полном пространстве"""
    spec = diagonalize_dressed(build_hamiltonian(dp, drive))
    return spec.projector(label)


def evolve_density(L: Liouvillian, rho0: np.ndarray, t0: float, t1: float, dt: float,
                   record_dt: float, projector: Optional[np.ndarray] = None) -> Tuple[Trajectory, np.ndarray]:
    """Обычное уравнение Линдблада, без однофотонного источника"""
    ops = L.ops
    projector = captured_projector(build_hamiltonian(L.dp, L.drive, L.frame)) if projector is None else projector
    weights = np.stack([L.expectation_weights(projector),
                        L.expectation_weights(ops.num_a),
                        L.expectation_weights(ops.num_b),
                        L.expectation_weights(np.eye(L.dim))])
    records: List[np.ndarray] = []
    times: List[float] = []

    def observe(t: float, y: np.ndarray) -> None:
        times.append(t)
        records.append((weights @ y).real)

    stepper = RK4Stepper(lambda _t, y: L.superop @ y, dt)
    final = stepper.run(vectorize(rho0).astype(complex), t0, t1, record_dt, observe)
    data = np.array(records)
    traj = Trajectory(
        t=np.array(times), p_e=data[:, 0], n_a=data[:, 1], n_b=data[:, 2],
        meta={"dt": dt, "method": "rk4", "truncation": [L.dp.n_a_max, L.dp.n_b_max],
              "max_trace_error": float(np.abs(data[:, 3] - 1.0).max())},
    )
    return traj, unvectorize(final, L.dim)


class FockHierarchy:
    """Иерархия ρ⁰⁰, ρ¹⁰, ρ¹¹ для однофотонного волнового пакета в резонаторе A"""

    def __init__(self, L: Liouvillian, pulse: PulseSpec):
        self.L = L
        self.pulse = pulse
        kappa = L.dp.kappa_a_rad
        raising = math.sqrt(kappa) * L.ops.a.conj().T
        lowering = math.sqrt(kappa) * L.ops.a
        # [ρ, √κ a†] и [√κ a, ρ]
        self.source_raise = (spost(raising) - spre(raising)).tocsr()
        self.source_lower = (spre(lowering) - spost(lowering)).tocsr()
        self.perm = transpose_permutation(L.dim)

    def rhs(self, t: float, Y: np.ndarray) -> np.ndarray:
        out = self.L.superop @ Y
        xi = float(self.pulse.envelope(t))
        if xi != 0.0:
            rho_01 = Y[self.perm, 1].conj()
            out[:, 1] += xi * (self.source_raise @ Y[:, 0])
            out[:, 2] += xi * (self.source_raise @ rho_01 + self.source_lower @ Y[:, 1])
        return out

    def initial(self, rho0: np.ndarray) -> np.ndarray:
        v = vectorize(rho0).astype(complex)
        return np.stack([v, np.zeros_like(v), v.copy()], axis=1)


def _check_grid(dp: DispersiveParams, pulse: PulseSpec, dt: float) -> None:
    limit = min(0.5 / dp.kappa_b_rad, pulse.length / 200.0)
    if dt > limit:
        raise ConfigError(
            f"Time step {dt} ns does not resolve kappa_b and the pulse; use dt <= {limit:.4g} ns",
            {"dt": dt, "max_dt": limit, "pulse_length": pulse.length},
        )


def _integrate_hierarchy(L: Liouvillian, pulse: PulseSpec, rho0: np.ndarray, projector: np.ndarray,
                         tmax: float, dt: float, record_dt: float) -> Trajectory:
    hierarchy = FockHierarchy(L, pulse)
    ops = L.ops
    weights = np.stack([L.expectation_weights(projector),
                        L.expectation_weights(ops.num_a),
                        L.expectation_weights(ops.num_b)])
    trace_w = L.expectation_weights(np.eye(L.dim))
    times: List[float] = []
    records: List[np.ndarray] = []
    checks = {"trace_00": 0.0, "trace_11": 0.0, "hermiticity": 0.0, "min_population": 0.0}

    def observe(t: float, Y: np.ndarray) -> None:
        rho_11 = Y[:, 2]
        times.append(t)
        records.append((weights @ rho_11).real)
        checks["trace_00"] = max(checks["trace_00"], abs(trace_w @ Y[:, 0] - 1.0))
        checks["trace_11"] = max(checks["trace_11"], abs(trace_w @ rho_11 - 1.0))
        checks["hermiticity"] = max(checks["hermiticity"],
                                    float(np.abs(rho_11 - rho_11[hierarchy.perm].conj()).max()))
        diag = rho_11[:: L.dim + 1].real
        checks["min_population"] = min(checks["min_population"], float(diag.min()))

    RK4Stepper(hierarchy.rhs, dt).run(hierarchy.initial(rho0), pulse.start, tmax, record_dt, observe)
    data = np.array(records)
    return Trajectory(
        t=np.array(times), p_e=data[:, 0], n_a=data[:, 1], n_b=data[:, 2],
        meta={"dt": dt, "method": "rk4-fock-hierarchy",
              "truncation": [L.dp.n_a_max, L.dp.n_b_max], **checks},
    )


def evolve_single_photon(dp: DispersiveParams, drive: DriveSpec, probe: Optional[ProbeSpec],
                         pulse: PulseSpec, tmax: float, dt: float = 0.1,
                         record_dt: float = 1.0, verify: bool = True) -> Trajectory:
    """Захват однофотонного импульса детектором в состоянии |1̃⟩"""
    _check_grid(dp, pulse, dt)
    started = time.time()
    omega_p = probe.omega_p if probe is not None else None
    frame = dynamics_frame(dp, drive, omega_s=pulse.omega_s, omega_p=omega_p)
    drives = [probe_drive(dp, probe)] if probe is not None and probe.enabled else []
    L = build_liouvillian(dp, drive, drives, frame)
    projector = captured_projector(build_hamiltonian(dp, drive, L.frame))
    rho0 = dressed_density(dp, drive, 1)

    traj = _integrate_hierarchy(L, pulse, rho0, projector, tmax, dt, record_dt)
    if verify:
        fine = _integrate_hierarchy(L, pulse, rho0, projector, tmax, 0.5 * dt, record_dt)
        n = min(len(fine.p_e), len(traj.p_e))
        deviation = float(np.abs(fine.p_e[:n] - traj.p_e[:n]).max())
        traj.meta["step_halving_deviation"] = deviation
        if deviation > STEP_HALVING_TOLERANCE:
            raise ConvergenceError(
                f"Step halving changed p_e by {deviation:.2e} > {STEP_HALVING_TOLERANCE}; "
                f"reduce dt below {dt} ns",
                {"dt": dt, "deviation": deviation, "tolerance": STEP_HALVING_TOLERANCE},
            )

    traj.meta.update({
        "omega_s_GHz": pulse.omega_s,
        "length_ns": pulse.length,
        "n_b_mean": probe.n_b_mean if probe is not None else 0.0,
        "wall_clock_s": time.time() - started,
    })
    logger.debug(f"Single-photon run l={pulse.length} ns: max p_e={traj.max_p_e:.4f}")
    return traj


def truncation_check(dp: DispersiveParams, drive: DriveSpec, probe: Optional[ProbeSpec],
                     pulse: PulseSpec, tmax: float, dt: float = 0.1) -> float:
    """Изменение max p_e при n_max → n_max + 1"""
    base = evolve_single_photon(dp, drive, probe, pulse, tmax, dt, verify=False)
    larger = dp.with_truncation(dp.n_a_max + 1, dp.n_b_max + 1)
    extended = evolve_single_photon(larger, drive, probe, pulse, tmax, dt, verify=False)
    change = abs(extended.max_p_e - base.max_p_e)
    if change > TRUNCATION_TOLERANCE:
        raise ConvergenceError(
            f"Fock truncation not converged: max p_e changed by {change:.2e} with n_max+1",
            {"change": change, "tolerance": TRUNCATION_TOLERANCE,
             "truncation": [dp.n_a_max, dp.n_b_max]},
        )
    return change


def lambda_group_delay(dp: DispersiveParams, drive: DriveSpec) -> float:
    """Групповая задержка Λ-системы в центре полосы, нс"""
    lines = transition_frequencies(diagonalize_dressed(build_hamiltonian(dp, drive)))
    half_split = 0.5 * angular(lines["omega_41"] - lines["omega_31"])
    k = 0.5 * dp.kappa_a_rad
    return 2.0 * k / (k ** 2 + half_split ** 2)


def capture_tracking(traj: Trajectory, pulse: PulseSpec, delay: float) -> float:
    """max |p_e(t) − ∫_{−∞}^{t−delay}|ξ|²| на фронте нарастания"""
    delivered = pulse.delivered(traj.t - delay)
    rise = (delivered >= 0.05 * pulse.amplitude ** 2) & (delivered <= 0.95 * pulse.amplitude ** 2)
    if not rise.any():
        return 0.0
    return float(np.abs(traj.p_e[rise] - delivered[rise]).max())


def moving_average(traj: Trajectory, Delta_t: float) -> MovingAverage:
    """p̄_e(t) = (1/Δt)∫_{t−Δt}^t p_e по трапециям"""
    h = traj.step
    width = int(round(Delta_t / h))
    if width < 1:
        raise ConfigError(f"Averaging window {Delta_t} ns is shorter than the grid step {h} ns",
                          {"Delta_t": Delta_t, "step": h})
    if width >= len(traj.t):
        raise ConfigError(
            f"Averaging window {Delta_t} ns exceeds trajectory span {traj.t[-1] - traj.t[0]:.1f} ns",
            {"Delta_t": Delta_t, "span": float(traj.t[-1] - traj.t[0])},
        )
    cumulative = integrate.cumulative_trapezoid(traj.p_e, traj.t, initial=0.0)
    pbar = np.full_like(traj.p_e, np.nan, dtype=float)
    pbar[width:] = (cumulative[width:] - cumulative[:-width]) / (width * h)
    # самый ранний максимум; шум округления разностей не должен сдвигать t_m по плато
    top = np.nanmax(pbar)
    valid = np.nan_to_num(pbar, nan=-np.inf)
    peak = int(np.flatnonzero(valid >= top - PLATEAU_RTOL * max(abs(top), 1.0))[0])
    return MovingAverage(t=traj.t, pbar_e=pbar, t_m=float(traj.t[peak]),
                         pbar_max=float(pbar[peak]), window=width * h)


# --- Время жизни и темновой счет ---

def _background_liouvillian(dp: DispersiveParams, drive: DriveSpec,
                            probe: Optional[ProbeSpec]) -> Liouvillian:
    omega_p = probe.omega_p if probe is not None else None
    drives = [probe_drive(dp, probe)] if probe is not None and probe.enabled else []
    return build_liouvillian(dp, drive, drives, dynamics_frame(dp, drive, omega_p=omega_p))


def excited_lifetime(dp: DispersiveParams, drive: DriveSpec, probe: Optional[ProbeSpec],
                     window: Tuple[float, float] = LIFETIME_WINDOW_NS,
                     dt: float = 0.2, record_dt: float = 5.0) -> LifetimeResult:
    """Скорость релаксации |2̃⟩ при непрерывной пробе"""
    L = _background_liouvillian(dp, drive, probe)
    projector = captured_projector(build_hamiltonian(dp, drive, L.frame))
    p_ss = float(np.trace(projector @ steady_state(L)).real)
    traj, _ = evolve_density(L, dressed_density(dp, drive, 2), 0.0, window[1], dt, record_dt, projector)

    mask = (traj.t >= window[0]) & (traj.t <= window[1])
    excess = traj.p_e[mask] - p_ss
    if mask.sum() < 3 or np.any(excess <= 0):
        raise FitError(
            "Excited population reached the steady state inside the fit window",
            {"window_ns": list(window), "p_ss": p_ss, "min_excess": float(excess.min()) if excess.size else None},
        )
    slope, intercept = np.polyfit(traj.t[mask], np.log(excess), 1)
    fitted = slope * traj.t[mask] + intercept
    residual = float(np.sqrt(np.mean((np.log(excess) - fitted) ** 2)))
    if residual > LIFETIME_RESIDUAL_LIMIT:
        raise FitError(
            f"Non-exponential decay: log-residual {residual:.3g} above {LIFETIME_RESIDUAL_LIMIT}",
            {"window_ns": list(window), "residual": residual, "slope_per_ns": float(slope),
             "p_ss": p_ss, "n_points": int(mask.sum())},
        )
    result = LifetimeResult(Gamma=-slope * NS_PER_US, residual=residual, p_ss=p_ss,
                            window_ns=tuple(window), n_points=int(mask.sum()))
    logger.info(f"🔬 Lifetime at n_b={probe.n_b_mean if probe else 0.0}: {result.lifetime_us:.2f} us")
    return result


def _linear_slope(t: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(t, y, 1)[0])


def dark_count_rate(dp: DispersiveParams, drive: DriveSpec, probe: Optional[ProbeSpec],
                    window: Tuple[float, float] = DARK_COUNT_WINDOW_NS,
                    dt: float = 0.2, record_dt: float = 1.0) -> DarkCountResult:
    """Скорость переходов |1̃⟩ → |2̃⟩ без сигнала, по линейному росту p_e"""
    L = _background_liouvillian(dp, drive, probe)
    traj, _ = evolve_density(L, dressed_density(dp, drive, 1), 0.0, window[1], dt, record_dt)

    lo, hi = window
    while True:
        if hi - lo < MIN_FIT_SPAN_NS:
            raise FitError(
                "Dark-count slope unstable: fit window shrank below the minimum span",
                {"window_ns": [lo, hi], "min_span_ns": MIN_FIT_SPAN_NS},
            )
        mask = (traj.t >= lo) & (traj.t <= hi)
        mid = 0.5 * (lo + hi)
        slope = _linear_slope(traj.t[mask], traj.p_e[mask])
        first = _linear_slope(traj.t[mask & (traj.t <= mid)], traj.p_e[mask & (traj.t <= mid)])
        second = _linear_slope(traj.t[mask & (traj.t >= mid)], traj.p_e[mask & (traj.t >= mid)])
        rate = slope * NS_PER_US
        if abs(rate) < DARK_COUNT_FLOOR or abs(first - second) <= DARK_SLOPE_TOLERANCE * abs(slope):
            break
        logger.warning(f"⚠️ Dark-count slope drifts on [{lo}, {hi}] ns, shrinking window")
        hi = mid

    flux = probe.photon_flux(dp.kappa_b) if probe is not None and probe.enabled else 0.0
    per_photon = slope / flux if flux > 0 else 0.0
    result = DarkCountResult(rate=rate, per_photon=per_photon, flux=flux, window_ns=(lo, hi),
                             half_slopes=(first * NS_PER_US, second * NS_PER_US))
    logger.info(f"🔬 Dark counts: rate={rate:.3e}/us, per photon={per_photon:.2e}")
    return result


__all__ = [
    'CoherentDrive',
    'PulseSpec',
    'Liouvillian',
    'Trajectory',
    'MovingAverage',
    'LifetimeResult',
    'DarkCountResult',
    'RK4Stepper',
    'FockHierarchy',
    'vectorize',
    'unvectorize',
    'trace_distance',
    'dynamics_frame',
    'probe_drive',
    'build_liouvillian',
    'steady_state',
    'empty_cavity_reflection',
    'reflection_coefficient',
    'reflection_map',
    'dressed_density',
    'evolve_density',
    'evolve_single_photon',
    'truncation_check',
    'lambda_group_delay',
    'capture_tracking',
    'moving_average',
    'excited_lifetime',
    'dark_count_rate',
]
