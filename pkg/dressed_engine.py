"""
Статический гамильтониан во вращающейся системе и одетые состояния.

Базис: |q, n_a, n_b⟩, q ∈ {g, e}, индекс строки q·(N_a·N_b) + n_a·N_b + n_b.
Гамильтониан сохраняет a†a и b†b, поэтому блоки (n_a, n_b) имеют размер 2×2.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from core_model import (
    MHZ_PER_GHZ,
    DispersiveParams,
    DriveSpec,
    angular,
    check_nesting_window,
    linear,
)
from simulation_errors import BracketError, DegenerateSpectrumError, FrameError

logger = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-12
DOMINANT_OVERLAP = 0.5
TIE_TOLERANCE = 1e-9  # рад/нс

QUBIT_LABELS = ("g", "e")
SUBSYSTEMS = ("qubit", "a", "b")

# Одно-фотонное многообразие в порядке голых энергий режима вложенности
MANIFOLD_STATES: Tuple[Tuple[int, int, int], ...] = (
    (0, 0, 0), (1, 0, 0),
    (0, 1, 0), (1, 1, 0),
    (0, 0, 1), (1, 0, 1),
)

# Пары для углов смешивания: (состояние с cos, состояние с −sin) для нижнего уровня
MIXING_PAIRS = {
    "theta_12": (1, (0, 0, 0), (1, 0, 0)),
    "theta_34": (3, (1, 1, 0), (0, 1, 0)),
    "theta_56": (5, (0, 0, 1), (1, 0, 1)),
}

DECAY_CHANNELS = {
    "a": ((3, 1), (3, 2), (4, 1), (4, 2)),
    "b": ((5, 1), (5, 2), (6, 1), (6, 2)),
}

TRANSITIONS = ((3, 1), (4, 1), (5, 1), (6, 1), (2, 1), (3, 2), (4, 2))


def bare_label(state: Tuple[int, int, int]) -> str:
    q, n_a, n_b = state
    return f"|{QUBIT_LABELS[q]},{n_a},{n_b}>"


@dataclass(frozen=True)
class FrameSpec:
    """Частоты вращения подсистем, ГГц"""

    qubit: float
    a: Optional[float] = None
    b: Optional[float] = None

    @classmethod
    def from_rotations(cls, rotations: Dict[str, float]) -> "FrameSpec":
        """Создание из словаря {подсистема: частота}"""
        unknown = sorted(set(rotations) - set(SUBSYSTEMS))
        if unknown:
            raise FrameError(
                f"Frame rotation requested on absent subsystem(s): {', '.join(unknown)}",
                {"requested": sorted(rotations), "available": list(SUBSYSTEMS)},
            )
        if "qubit" not in rotations:
            raise FrameError("Qubit rotation frequency is required", {"requested": sorted(rotations)})
        return cls(qubit=rotations["qubit"], a=rotations.get("a"), b=rotations.get("b"))

    def offsets_rad(self) -> Tuple[float, float]:
        """Сдвиги для a†a и b†b в рад/нс"""
        return (angular(self.a) if self.a is not None else 0.0,
                angular(self.b) if self.b is not None else 0.0)

    def merge(self, subsystem: str, frequency: float) -> "FrameSpec":
        """Добавление вращения с проверкой согласованности"""
        if subsystem not in SUBSYSTEMS:
            raise FrameError(f"Unknown subsystem '{subsystem}'", {"available": list(SUBSYSTEMS)})
        current = getattr(self, subsystem)
        if current is not None and not math.isclose(current, frequency, rel_tol=0, abs_tol=1e-12):
            raise FrameError(
                f"Inconsistent frame: subsystem '{subsystem}' already rotates at {current} GHz, "
                f"requested {frequency} GHz",
                {"subsystem": subsystem, "existing_GHz": current, "requested_GHz": frequency},
            )
        values = {"qubit": self.qubit, "a": self.a, "b": self.b}
        values[subsystem] = frequency
        return FrameSpec(**values)


class Operators:
    """Операторы a, b, σ в полном пространстве"""

    def __init__(self, n_a_max: int, n_b_max: int):
        self.dims = (2, n_a_max + 1, n_b_max + 1)
        eye_q = np.eye(2)
        eye_a = np.eye(n_a_max + 1)
        eye_b = np.eye(n_b_max + 1)
        destroy_a = np.diag(np.sqrt(np.arange(1, n_a_max + 1)), 1)
        destroy_b = np.diag(np.sqrt(np.arange(1, n_b_max + 1)), 1)
        lower = np.array([[0.0, 1.0], [0.0, 0.0]])

        self.a = np.kron(eye_q, np.kron(destroy_a, eye_b)).astype(complex)
        self.b = np.kron(eye_q, np.kron(eye_a, destroy_b)).astype(complex)
        self.sigma = np.kron(lower, np.kron(eye_a, eye_b)).astype(complex)
        self.num_a = (self.a.conj().T @ self.a).real
        self.num_b = (self.b.conj().T @ self.b).real
        self.proj_g = np.kron(np.diag([1.0, 0.0]), np.kron(eye_a, eye_b))
        self.proj_e = np.kron(np.diag([0.0, 1.0]), np.kron(eye_a, eye_b))

    @property
    def dim(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def index(self, q: int, n_a: int, n_b: int) -> int:
        return q * self.dims[1] * self.dims[2] + n_a * self.dims[2] + n_b

    def basis(self, q: int, n_a: int, n_b: int) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=complex)
        vec[self.index(q, n_a, n_b)] = 1.0
        return vec


@dataclass
class HamiltonianMatrix:
    """Эрмитова матрица гамильтониана с картой базиса и системой отсчета"""

    matrix: np.ndarray
    ops: Operators
    frame: FrameSpec
    dp: DispersiveParams
    drive: DriveSpec

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def index(self, q: int, n_a: int, n_b: int) -> int:
        return self.ops.index(q, n_a, n_b)

    def element(self, bra: Tuple[int, int, int], ket: Tuple[int, int, int]) -> complex:
        return self.matrix[self.index(*bra), self.index(*ket)]

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        scale = max(np.abs(self.matrix).max(), 1.0)
        return bool(np.abs(self.matrix - self.matrix.conj().T).max() <= rtol * scale
                    and np.abs(np.diag(self.matrix).imag).max() == 0.0)

    def block(self, n_a: int, n_b: int) -> np.ndarray:
        """Блок 2×2 в базисе (|g,n_a,n_b⟩, |e,n_a,n_b⟩)"""
        idx = [self.index(0, n_a, n_b), self.index(1, n_a, n_b)]
        return self.matrix[np.ix_(idx, idx)]


def build_hamiltonian(dp: DispersiveParams, drive: DriveSpec,
                      frame: Optional[FrameSpec] = None) -> HamiltonianMatrix:
    """Гамильтониан с накачкой в системе, вращающейся на ω_d"""
    if frame is None:
        frame = FrameSpec(qubit=drive.omega_d)
    elif not math.isclose(frame.qubit, drive.omega_d, rel_tol=0, abs_tol=1e-12):
        raise FrameError(
            f"Qubit frame must rotate at the drive frequency {drive.omega_d} GHz, got {frame.qubit} GHz",
            {"omega_d": drive.omega_d, "frame_qubit": frame.qubit},
        )

    ops = Operators(dp.n_a_max, dp.n_b_max)
    offset_a, offset_b = frame.offsets_rad()

    detuning_q = dp.omega_q_rad - drive.omega_d_rad
    ground_branch = dp.omega_a_rad * ops.num_a + dp.omega_b_rad * ops.num_b
    excited_branch = (detuning_q * np.eye(ops.dim)
                      + (dp.omega_a_rad - 2.0 * dp.chi_a_rad) * ops.num_a
                      + (dp.omega_b_rad - 2.0 * dp.chi_b_rad) * ops.num_b)

    matrix = (ops.proj_g @ ground_branch + ops.proj_e @ excited_branch
              - offset_a * ops.num_a - offset_b * ops.num_b).astype(complex)
    matrix += drive.Omega_d_rad * (ops.sigma + ops.sigma.conj().T)

    return HamiltonianMatrix(matrix=matrix, ops=ops, frame=frame, dp=dp, drive=drive)


@dataclass
class DressedSpectrum:
    """Помеченные одетые состояния 1̃..6̃"""

    energies: np.ndarray  # рад/нс, система отсчета только кубита
    vectors: np.ndarray  # D×6, столбцы в полном пространстве
    dominant: List[Tuple[int, int, int]]
    overlaps: np.ndarray
    theta_12: float
    theta_34: float
    theta_56: float
    omega_d: float
    ops: Operators

    def state(self, label: int) -> np.ndarray:
        return self.vectors[:, label - 1]

    def energy(self, label: int) -> float:
        return float(self.energies[label - 1])

    def cos2(self) -> Dict[str, float]:
        return {name: math.cos(getattr(self, name)) ** 2 for name in MIXING_PAIRS}

    def projector(self, label: int) -> np.ndarray:
        vec = self.state(label)
        return np.outer(vec, vec.conj())


def diagonalize_dressed(H: HamiltonianMatrix) -> DressedSpectrum:
    """Диагонализация многообразия n_a + n_b ≤ 1 и присвоение меток"""
    if not H.is_hermitian():
        raise ValueError("Hamiltonian is not Hermitian")

    offset_a, offset_b = H.frame.offsets_rad()
    idx = [H.index(*state) for state in MANIFOLD_STATES]
    sub = H.matrix[np.ix_(idx, idx)].copy()
    # Возврат к системе отсчета только кубита
    for k, (_, n_a, n_b) in enumerate(MANIFOLD_STATES):
        sub[k, k] += n_a * offset_a + n_b * offset_b

    energies, local = linalg.eigh(sub)

    gaps = np.diff(energies)
    for k, gap in enumerate(gaps):
        if gap < TIE_TOLERANCE:
            raise DegenerateSpectrumError(
                f"Degenerate dressed levels {k + 1} and {k + 2} (gap {gap:.3e} rad/ns)",
                {"pair": [k + 1, k + 2], "gap_rad_per_ns": float(gap)},
            )

    overlaps = np.abs(local) ** 2
    dominant: List[Tuple[int, int, int]] = []
    for col in range(local.shape[1]):
        row = int(np.argmax(overlaps[:, col]))
        if overlaps[row, col] <= DOMINANT_OVERLAP:
            raise DegenerateSpectrumError(
                f"Dressed level {col + 1} has no dominant bare component "
                f"(max overlap {overlaps[row, col]:.3f})",
                {"label": col + 1, "max_overlap": float(overlaps[row, col])},
            )
        # Фиксация фазы: доминирующая компонента вещественна и положительна
        phase = local[row, col] / abs(local[row, col])
        local[:, col] = local[:, col] / phase
        dominant.append(MANIFOLD_STATES[row])

    if len(set(dominant)) != len(dominant):
        raise DegenerateSpectrumError(
            "Dressed labeling is ambiguous: repeated dominant bare state",
            {"dominant": [bare_label(s) for s in dominant]},
        )

    vectors = np.zeros((H.dim, len(MANIFOLD_STATES)), dtype=complex)
    vectors[idx, :] = local

    thetas = {}
    for name, (label, cos_state, sin_state) in MIXING_PAIRS.items():
        vec = local[:, label - 1]
        c = vec[MANIFOLD_STATES.index(cos_state)].real
        s = -vec[MANIFOLD_STATES.index(sin_state)].real
        thetas[name] = math.atan2(s, c)

    return DressedSpectrum(
        energies=energies,
        vectors=vectors,
        dominant=dominant,
        overlaps=overlaps,
        omega_d=H.drive.omega_d,
        ops=H.ops,
        **thetas,
    )


@dataclass
class DecayTable:
    """Радиационные скорости между одетыми уровнями"""

    rates: Dict[Tuple[str, int, int], float]  # рад/нс
    kappa: Dict[str, float] = field(default_factory=dict)  # рад/нс

    def rate(self, resonator: str, j: int, i: int) -> float:
        return self.rates[(resonator, j, i)]

    def linear_mhz(self) -> Dict[Tuple[str, int, int], float]:
        return {key: linear(value, "MHz") for key, value in self.rates.items()}

    def normalized(self) -> Dict[str, float]:
        """κ̃ᵃ/κ_a и κ̃ᵇ/κ_b, ключи ka31, ..., kb62"""
        return {f"k{r}{j}{i}": value / self.kappa[r] for (r, j, i), value in self.rates.items()}

    def identity_residuals(self) -> Dict[str, float]:
        """Относительные невязки равенств пар и правил сумм"""
        res = {}
        for r, (lo, hi) in (("a", (3, 4)), ("b", (5, 6))):
            k = self.kappa[r]
            res[f"{r}_pair_{lo}1_{hi}2"] = abs(self.rate(r, lo, 1) - self.rate(r, hi, 2)) / k
            res[f"{r}_pair_{lo}2_{hi}1"] = abs(self.rate(r, lo, 2) - self.rate(r, hi, 1)) / k
            res[f"{r}_sum_{lo}"] = abs(self.rate(r, lo, 1) + self.rate(r, lo, 2) - k) / k
            res[f"{r}_sum_{hi}"] = abs(self.rate(r, hi, 1) + self.rate(r, hi, 2) - k) / k
        return res


def decay_table(spec: DressedSpectrum, dp: DispersiveParams) -> DecayTable:
    """κ̃ʳ_ji = κ_r |⟨j̃|r†|ĩ⟩|²"""
    kappa = {"a": dp.kappa_a_rad, "b": dp.kappa_b_rad}
    creation = {"a": spec.ops.a.conj().T, "b": spec.ops.b.conj().T}
    rates = {}
    for r, pairs in DECAY_CHANNELS.items():
        for j, i in pairs:
            amplitude = np.vdot(spec.state(j), creation[r] @ spec.state(i))
            rates[(r, j, i)] = kappa[r] * abs(amplitude) ** 2
    return DecayTable(rates=rates, kappa=kappa)


def dressed_at(dp: DispersiveParams, omega_d: float, Omega_d: float) -> DressedSpectrum:
    return diagonalize_dressed(build_hamiltonian(dp, DriveSpec(omega_d=omega_d, Omega_d=Omega_d)))


def impedance_mismatch(dp: DispersiveParams, omega_d: float, Omega_d: float) -> float:
    """κ̃ᵃ_31 − κ̃ᵃ_32 в рад/нс"""
    table = decay_table(dressed_at(dp, omega_d, Omega_d), dp)
    return table.rate("a", 3, 1) - table.rate("a", 3, 2)


def find_impedance_match(dp: DispersiveParams, omega_d: float,
                         bracket: Tuple[float, float] = (0.1, 40.0),
                         tol: float = 1e-3, max_iter: int = 200) -> float:
    """Мощность накачки Ω_d^imp (МГц), при которой κ̃ᵃ_31 = κ̃ᵃ_32"""
    check_nesting_window(dp, DriveSpec(omega_d=omega_d))

    lo, hi = bracket
    f_lo = impedance_mismatch(dp, omega_d, lo)
    f_hi = impedance_mismatch(dp, omega_d, hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(
            f"No sign change of ka31 - ka32 on [{lo}, {hi}] MHz; "
            "enlarge the bracket (drive too far from omega_q - 2 chi_a)",
            {"bracket_MHz": [lo, hi], "f_lo": f_lo, "f_hi": f_hi, "omega_d": omega_d},
        )

    iteration = 0
    while hi - lo > tol and iteration < max_iter:
        mid = 0.5 * (lo + hi)
        f_mid = impedance_mismatch(dp, omega_d, mid)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        iteration += 1

    root = 0.5 * (lo + hi)
    spec = dressed_at(dp, omega_d, root)
    theta_sum = spec.theta_12 + spec.theta_34
    if abs(theta_sum - math.pi / 4) > 1e-3:
        logger.warning(f"⚠️ theta_12 + theta_34 = {theta_sum:.6f} rad deviates from pi/4 at Omega_d={root:.4f} MHz")
    logger.info(f"✅ Impedance match at omega_d={omega_d} GHz: Omega_d={root:.4f} MHz ({iteration} bisections)")
    return root


def transition_frequencies(spec: DressedSpectrum) -> Dict[str, float]:
    """ω̃_ji в ГГц как разности помеченных энергий"""
    return {f"omega_{j}{i}": linear(spec.energy(j) - spec.energy(i))
            for j, i in TRANSITIONS}


def excited_projector(H: HamiltonianMatrix, max_n_a: Optional[int] = None) -> np.ndarray:
    """Проектор на возбужденную ветвь кубита в каждом блоке (n_a, n_b), n_a ≤ max_n_a"""
    proj = np.zeros((H.dim, H.dim), dtype=complex)
    n_a_levels, n_b_levels = H.ops.dims[1], H.ops.dims[2]
    if max_n_a is not None:
        n_a_levels = min(n_a_levels, max_n_a + 1)
    for n_a in range(n_a_levels):
        for n_b in range(n_b_levels):
            _, vecs = linalg.eigh(H.block(n_a, n_b))
            col = int(np.argmax(np.abs(vecs[1, :]) ** 2))
            full = np.zeros(H.dim, dtype=complex)
            full[[H.index(0, n_a, n_b), H.index(1, n_a, n_b)]] = vecs[:, col]
            proj += np.outer(full, full.conj())
    return proj


def captured_projector(H: HamiltonianMatrix) -> np.ndarray:
    """Населенность |2̃⟩ при любом числе фотонов пробы в B.

    Блоки с фотоном в резонаторе A (|3̃⟩, |4̃⟩) не входят: фотон еще не поглощен.
    """
    return excited_projector(H, max_n_a=0)


def closed_form_theta(Omega_d: float, gap: float) -> float:
    """θ = arctan(2Ω_d/щель)/2 для двухуровневого блока"""
    return 0.5 * math.atan(2.0 * Omega_d / gap)


def closed_form_gaps(dp: DispersiveParams, omega_d: float) -> Dict[str, float]:
    """Щели блоков без накачки, МГц"""
    detuning = (dp.omega_q - omega_d) * MHZ_PER_GHZ
    return {
        "theta_12": detuning,
        "theta_34": 2.0 * dp.chi_a - detuning,
        "theta_56": detuning - 2.0 * dp.chi_b,
    }


def closed_form_impedance_match(dp: DispersiveParams, omega_d: float) -> float:
    """Решение θ₁₂ + θ₃₄ = π/4: Ω = √(щель₁₂·щель₃₄)/2, МГц"""
    gaps = closed_form_gaps(dp, omega_d)
    return 0.5 * math.sqrt(gaps["theta_12"] * gaps["theta_34"])


def dressed_rates_row(dp: DispersiveParams, omega_d: float, Omega_d: float) -> Dict[str, float]:
    """Строка таблицы для развертки скоростей по Ω_d"""
    spec = dressed_at(dp, omega_d, Omega_d)
    row = {"omega_drive_GHz": omega_d, "Omega_d_MHz": Omega_d}
    row.update(decay_table(spec, dp).normalized())
    return row


__all__ = [
    'MANIFOLD_STATES',
    'FrameSpec',
    'Operators',
    'HamiltonianMatrix',
    'DressedSpectrum',
    'DecayTable',
    'build_hamiltonian',
    'diagonalize_dressed',
    'decay_table',
    'dressed_at',
    'impedance_mismatch',
    'find_impedance_match',
    'transition_frequencies',
    'excited_projector',
    'captured_projector',
    'closed_form_theta',
    'closed_form_gaps',
    'closed_form_impedance_match',
    'dressed_rates_row',
]
