"""
Статистика считывания и эффективность детектирования.

Считывание описано аналитически: фазы пробы, SNR, точность F,
вероятность правильного решения q(τ) и эффективности η₁, η₂.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, signal, special

from core_model import DispersiveParams, DriveSpec, ProbeSpec, angular
from lindblad_dynamics import PulseSpec, Trajectory, evolve_single_photon, moving_average
from simulation_errors import QuadratureError, ThresholdError

logger = logging.getLogger(__name__)

REFERENCE_ZENO_NS = 175.0
NORMALIZATION_TOLERANCE = 1e-6
SIMPSON_POINTS = 4001
NS_PER_US = 1e3


@dataclass(frozen=True)
class ProbePhases:
    """Фазы отраженной пробы для |g⟩ и |e⟩"""

    theta_g: float
    theta_e: float
    kappa_b: float  # МГц

    @property
    def unit_g(self) -> complex:
        return complex(math.cos(self.theta_g), math.sin(self.theta_g))

    @property
    def unit_e(self) -> complex:
        return complex(math.cos(self.theta_e), math.sin(self.theta_e))

    @property
    def separation(self) -> float:
        return abs(self.unit_g - self.unit_e)

    @classmethod
    def from_units(cls, unit_g: complex, unit_e: complex, kappa_b: float) -> "ProbePhases":
        return cls(theta_g=math.atan2(unit_g.imag, unit_g.real),
                   theta_e=math.atan2(unit_e.imag, unit_e.real), kappa_b=kappa_b)


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def reflection_phase(kappa: float, detuning: float) -> float:
    """θ = 2 arctan[κ/2δ]; при δ → 0⁺ θ = π"""
    return _wrap(2.0 * math.atan2(kappa, 2.0 * detuning))


def probe_phases(dp: DispersiveParams, omega_p: float) -> ProbePhases:
    detuning_g = (dp.omega_b - omega_p) * 1e3
    detuning_e = detuning_g - 2.0 * dp.chi_b
    return ProbePhases(theta_g=reflection_phase(dp.kappa_b, detuning_g),
                       theta_e=reflection_phase(dp.kappa_b, detuning_e),
                       kappa_b=dp.kappa_b)


@dataclass
class ReadoutModel:
    """Параметры считывания за окно Δt"""

    probe: ProbeSpec
    phases: ProbePhases
    Delta_t: float  # нс
    SNR: float
    F: float
    Delta_t_m: float  # нс, оценка интервала измерения

    def q(self, tau):
        return q_of_tau(self.SNR, self.Delta_t, tau)


@dataclass
class ZenoEstimate:
    angular_ns: float
    linear_ns: float
    reference_ns: float = REFERENCE_ZENO_NS

    @property
    def matches_reference(self) -> bool:
        return any(math.isclose(v, self.reference_ns, rel_tol=0.1) for v in (self.angular_ns, self.linear_ns))


def snr_fidelity(probe: ProbeSpec, phases: ProbePhases, Delta_t: float) -> Dict[str, float]:
    """SNR = √(κ_b⟨n_b⟩Δt/4)·|e^{iθ_g} − e^{iθ_e}|, F = erf(SNR/√2)"""
    photons = probe.photon_flux(phases.kappa_b) * max(Delta_t, 0.0)
    snr = math.sqrt(photons) * phases.separation
    return {"SNR": snr, "F": float(special.erf(snr / math.sqrt(2.0)))}


def quadrature_means(probe: ProbeSpec, phases: ProbePhases, Delta_t: float) -> Dict[str, float]:
    """Средние x̄ = Im[e^{−i(θ_g+θ_e)/2} c̄] для g и e; шум вакуума σ = 1/2"""
    amplitude = probe.amplitude(phases.kappa_b) * math.sqrt(max(Delta_t, 0.0))
    half = math.sin(0.5 * (phases.theta_e - phases.theta_g))
    return {"g": -amplitude * half, "e": amplitude * half}


def quadrature_snr(probe: ProbeSpec, phases: ProbePhases, Delta_t: float) -> float:
    means = quadrature_means(probe, phases, Delta_t)
    return abs(means["e"] - means["g"])


def readout_model(probe: ProbeSpec, phases: ProbePhases, Delta_t: float) -> ReadoutModel:
    values = snr_fidelity(probe, phases, Delta_t)
    zeno = zeno_time(probe, phases.kappa_b) if probe.enabled else None
    return ReadoutModel(probe=probe, phases=phases, Delta_t=Delta_t, SNR=values["SNR"], F=values["F"],
                        Delta_t_m=zeno.angular_ns if zeno else math.inf)


def efficiency_eta1(pbar_max: float, F: float) -> float:
    """η = p̄(1+F)/2 + (1−p̄)(1−F)/2"""
    return pbar_max * (1.0 + F) / 2.0 + (1.0 - pbar_max) * (1.0 - F) / 2.0


def q_of_tau(SNR: float, Delta_t: float, tau):
    """Вероятность решения "e" при пребывании в |2̃⟩ в течение τ"""
    tau = np.asarray(tau, dtype=float)
    F = special.erf(SNR / math.sqrt(2.0))
    if Delta_t <= 0:
        return np.full_like(tau, 0.5 * (1.0 + F))
    inside = 0.5 * (1.0 - special.erf(SNR / math.sqrt(2.0) * (1.0 - 2.0 * np.minimum(tau, Delta_t) / Delta_t)))
    return np.where(tau < Delta_t, inside, 0.5 * (1.0 + F))


def q_step(SNR: float, Delta_t: float, tau):
    """Ступенчатое приближение q(τ) с порогом Δt/2"""
    tau = np.asarray(tau, dtype=float)
    F = special.erf(SNR / math.sqrt(2.0))
    return np.where(tau < 0.5 * Delta_t, 0.5 * (1.0 - F), 0.5 * (1.0 + F))


@dataclass
class DurationDistribution:
    """Распределение Q(τ) времени пребывания в |2̃⟩"""

    tau: np.ndarray  # нс
    density: np.ndarray  # 1/нс
    residual_mass: float = 0.0  # масса за концом сетки
    Gamma: Optional[float] = None  # 1/нс, для экспоненциальной модели

    @classmethod
    def exponential(cls, Gamma_per_us: float, horizon_ns: Optional[float] = None,
                    points: int = SIMPSON_POINTS) -> "DurationDistribution":
        """Q(τ) = Γe^{−Γτ}"""
        rate = Gamma_per_us / NS_PER_US
        horizon = horizon_ns if horizon_ns is not None else 20.0 / max(rate, 1e-12)
        tau = np.linspace(0.0, horizon, points)
        return cls(tau=tau, density=rate * np.exp(-rate * tau),
                   residual_mass=math.exp(-rate * horizon), Gamma=rate)

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> Tuple["DurationDistribution", float]:
        """Q = −dp_e/dτ от максимума p_e; возвращает (Q, p_max)"""
        peak = int(np.argmax(traj.p_e))
        p_max = float(traj.p_e[peak])
        if p_max <= 0:
            raise QuadratureError("Trajectory never populates the excited branch", {"p_max": p_max})
        if len(traj.t) - peak < 3:
            raise QuadratureError("Excited population peaks at the end of the trajectory; extend tmax",
                                  {"t_peak": float(traj.t[peak]), "t_end": float(traj.t[-1])})
        tau = traj.t[peak:] - traj.t[peak]
        survival = traj.p_e[peak:] / p_max
        density = np.clip(-np.gradient(survival, tau), 0.0, None)
        residual = float(np.clip(survival[-1], 0.0, 1.0))
        mass = float(integrate.trapezoid(density, tau))
        if mass > 0:
            density = density * (1.0 - residual) / mass
        return cls(tau=tau, density=density, residual_mass=residual), p_max

    @property
    def horizon(self) -> float:
        return float(self.tau[-1])

    def total(self) -> float:
        if self.Gamma is not None:
            return 1.0
        return float(integrate.trapezoid(self.density, self.tau)) + self.residual_mass

    def survival(self, t: float) -> float:
        """S(t) = ∫_t^∞ Q"""
        if self.Gamma is not None:
            return math.exp(-self.Gamma * t)
        if t >= self.horizon:
            return self.residual_mass
        grid = np.concatenate([[t], self.tau[self.tau > t]])
        values = np.interp(grid, self.tau, self.density)
        return float(integrate.trapezoid(values, grid)) + self.residual_mass

    def sample(self, Delta_t: float, points: int = SIMPSON_POINTS) -> Tuple[np.ndarray, np.ndarray]:
        grid = np.linspace(0.0, Delta_t, points)
        if self.Gamma is not None:
            return grid, self.Gamma * np.exp(-self.Gamma * grid)
        return grid, np.interp(grid, self.tau, self.density)

    def validate(self) -> None:
        if np.any(self.density < 0):
            raise QuadratureError("Duration density has negative values",
                                  {"min_density": float(self.density.min())})
        total = self.total()
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise QuadratureError(f"Duration distribution not normalized: integral {total:.8f}",
                                  {"integral": total, "tolerance": NORMALIZATION_TOLERANCE})


def efficiency_eta2(Q: DurationDistribution, readout: ReadoutModel, step: bool = False) -> float:
    """η₂ = ∫₀^∞ Q(τ)q(τ)dτ: Симпсон на [0, Δt] и хвост (1+F)/2·S(Δt)"""
    Q.validate()
    Delta_t, F = readout.Delta_t, readout.F
    if Q.Gamma is None and Delta_t > Q.horizon:
        raise QuadratureError(
            f"Readout window {Delta_t} ns exceeds the duration grid {Q.horizon:.1f} ns",
            {"Delta_t": Delta_t, "horizon": Q.horizon},
        )
    if step:
        s_half = Q.survival(0.5 * Delta_t)
        return 0.5 * (1.0 - F) * (1.0 - s_half) + 0.5 * (1.0 + F) * s_half
    if Delta_t <= 0:
        return 0.5 * (1.0 + F)
    grid, density = Q.sample(Delta_t)
    body = float(integrate.simpson(density * q_of_tau(readout.SNR, Delta_t, grid), x=grid))
    return body + 0.5 * (1.0 + F) * Q.survival(Delta_t)


def eta1_closed_form(Gamma_per_us: float, SNR: float, Delta_t: float) -> float:
    """η₁ для p_e = e^{−Γt}: p̄_e(t_m) = (1 − e^{−ΓΔt})/(ΓΔt)"""
    x = Gamma_per_us / NS_PER_US * Delta_t
    pbar = 1.0 if x == 0 else -math.expm1(-x) / x
    return efficiency_eta1(pbar, float(special.erf(SNR / math.sqrt(2.0))))


@dataclass
class EfficiencyResult:
    eta1: float
    eta2: Optional[float]
    pbar_max: float
    F: float
    SNR: float
    Delta_t: float
    components: Dict[str, float] = field(default_factory=dict)
    distribution: Optional[DurationDistribution] = None

    def within_bounds(self) -> bool:
        lo, hi = 0.5 * (1.0 - self.F) - 1e-12, 0.5 * (1.0 + self.F) + 1e-12
        values = [self.eta1] + ([self.eta2] if self.eta2 is not None else [])
        return all(lo <= v <= hi for v in values)


def trajectory_efficiency(traj: Trajectory, readout: ReadoutModel) -> EfficiencyResult:
    """η₁ по скользящему среднему и η₂ по распределению длительностей из траектории"""
    averaged = moving_average(traj, readout.Delta_t)
    eta1 = efficiency_eta1(averaged.pbar_max, readout.F)

    eta2 = None
    distribution = None
    try:
        Q, p_max = DurationDistribution.from_trajectory(traj)
    except QuadratureError as e:
        logger.debug(f"eta2 unavailable: {e.message}")
        Q, p_max = None, averaged.pbar_max
    if Q is not None and readout.Delta_t <= Q.horizon:
        distribution = Q
        # без фотона в |2̃⟩ детектор ошибается с вероятностью (1−F)/2
        eta2 = p_max * efficiency_eta2(Q, readout) + (1.0 - p_max) * 0.5 * (1.0 - readout.F)

    return EfficiencyResult(
        eta1=eta1, eta2=eta2, pbar_max=averaged.pbar_max, F=readout.F, SNR=readout.SNR,
        Delta_t=readout.Delta_t,
        components={"hit": averaged.pbar_max * (1.0 + readout.F) / 2.0,
                    "false": (1.0 - averaged.pbar_max) * (1.0 - readout.F) / 2.0,
                    "t_m_ns": averaged.t_m, "p_max": p_max},
        distribution=distribution,
    )


def efficiency_point(dp: DispersiveParams, probe: ProbeSpec, Delta_ts: Sequence[float],
                     tmax: float, dt: float, record_dt: float,
                     point: Tuple[float, float, float, float]) -> List[Dict[str, Any]]:
    """Конвейер одной точки (ω_d, Ω_d, ω_s, l): траектория -> p̄_e -> η для каждого Δt"""
    omega_d, Omega_d, omega_s, length = point
    drive = DriveSpec(omega_d=omega_d, Omega_d=Omega_d)
    pulse = PulseSpec(omega_s=omega_s, length=length)
    traj = evolve_single_photon(dp, drive, probe, pulse, tmax, dt, record_dt, verify=False)
    phases = probe_phases(dp, probe.omega_p)
    rows = []
    for Delta_t in Delta_ts:
        result = trajectory_efficiency(traj, readout_model(probe, phases, Delta_t))
        rows.append({
            "omega_d_GHz": omega_d,
            "Omega_d_MHz": Omega_d,
            "omega_s_GHz": omega_s,
            "l_ns": length,
            "Delta_t_ns": Delta_t,
            "F": result.F,
            "pbar_max": result.pbar_max,
            "eta1": result.eta1,
            "eta2": np.nan if result.eta2 is None else result.eta2,
        })
    return rows


def zeno_time(probe: ProbeSpec, kappa_b: float) -> ZenoEstimate:
    """Δt_m ~ 1/(κ_b⟨n_b⟩) для угловой и линейной κ_b"""
    if not probe.enabled:
        raise ValueError("Zeno time requires a nonzero probe power")
    estimate = ZenoEstimate(angular_ns=1.0 / (angular(kappa_b, "MHz") * probe.n_b_mean),
                            linear_ns=1.0 / (kappa_b / NS_PER_US * probe.n_b_mean))
    if not estimate.matches_reference:
        logger.debug(f"Zeno time {estimate.angular_ns:.0f} ns (angular) / {estimate.linear_ns:.0f} ns "
                     f"(linear) differs from the reference {REFERENCE_ZENO_NS:.0f} ns")
    return estimate


@dataclass
class BandResult:
    center: float  # ГГц
    peak_eta: float
    widths: Dict[float, float]  # порог -> ширина, МГц
    edges: Dict[float, Tuple[float, float]]  # порог -> (низ, верх), ГГц
    peaks: List[float]  # локальные максимумы, ГГц


def _crossing(x0: float, y0: float, x1: float, y1: float, level: float) -> float:
    return x0 + (level - y0) * (x1 - x0) / (y1 - y0)


def detection_band(omega_s: Sequence[float], eta: Sequence[float],
                   thresholds: Sequence[float] = (0.9, 0.8)) -> BandResult:
    """Центр и ширина полосы η > порог с линейной интерполяцией пересечений"""
    x = np.asarray(omega_s, dtype=float)
    y = np.asarray(eta, dtype=float)
    if x.size < 2 or np.any(np.diff(x) <= 0):
        raise ValueError("omega_s grid must be strictly increasing with at least two points")

    top = int(np.argmax(y))
    widths: Dict[float, float] = {}
    edges: Dict[float, Tuple[float, float]] = {}
    for level in thresholds:
        if y[top] <= level:
            raise ThresholdError(f"Efficiency threshold {level} never crossed (max {y[top]:.4f})",
                                 {"threshold": level, "max_eta": float(y[top])})
        lo = top
        while lo > 0 and y[lo - 1] > level:
            lo -= 1
        hi = top
        while hi < len(y) - 1 and y[hi + 1] > level:
            hi += 1
        if lo == 0 or hi == len(y) - 1:
            raise ThresholdError(f"Band above {level} is not closed inside the omega_s grid",
                                 {"threshold": level, "grid_GHz": [float(x[0]), float(x[-1])]})
        left = _crossing(x[lo - 1], y[lo - 1], x[lo], y[lo], level)
        right = _crossing(x[hi], y[hi], x[hi + 1], y[hi + 1], level)
        edges[level] = (float(left), float(right))
        widths[level] = float((right - left) * 1e3)

    peak_idx, _ = signal.find_peaks(y)
    return BandResult(center=float(x[top]), peak_eta=float(y[top]), widths=widths, edges=edges,
                      peaks=[float(x[i]) for i in peak_idx])


def dead_time(Gamma_per_us: float) -> float:
    """Среднее время нечувствительности после срабатывания, мкс"""
    return math.inf if Gamma_per_us <= 0 else 1.0 / Gamma_per_us


def optimal_pulse_length(l_list: Sequence[float], eta_list: Sequence[float]) -> Dict[str, Any]:
    """Максимум η(l) с параболическим уточнением по трем точкам"""
    lengths = np.asarray(l_list, dtype=float)
    values = np.asarray(eta_list, dtype=float)
    k = int(np.argmax(values))
    if 0 < k < len(values) - 1:
        coeffs = np.polyfit(lengths[k - 1:k + 2], values[k - 1:k + 2], 2)
        if coeffs[0] < 0:
            vertex = -coeffs[1] / (2.0 * coeffs[0])
            vertex = float(np.clip(vertex, lengths[k - 1], lengths[k + 1]))
            return {"length_ns": vertex, "eta": float(np.polyval(coeffs, vertex)), "refined": True}
    return {"length_ns": float(lengths[k]), "eta": float(values[k]), "refined": False}


__all__ = [
    'ProbePhases',
    'ReadoutModel',
    'ZenoEstimate',
    'DurationDistribution',
    'EfficiencyResult',
    'BandResult',
    'reflection_phase',
    'probe_phases',
    'snr_fidelity',
    'quadrature_means',
    'quadrature_snr',
    'readout_model',
    'efficiency_eta1',
    'q_of_tau',
    'q_step',
    'efficiency_eta2',
    'eta1_closed_form',
    'trajectory_efficiency',
    'efficiency_point',
    'zeno_time',
    'detection_band',
    'dead_time',
    'optimal_pulse_length',
]
