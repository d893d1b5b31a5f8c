"""
Параметры устройства, единицы измерения и дисперсионное преобразование.

Все внешние значения задаются в линейных единицах "/2π" (ГГц, МГц),
вся динамика внутри работает в угловых единицах рад/нс.
"""

import logging
import math
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from simulation_errors import DispersiveValidityError, NestingWindowError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
MHZ_PER_GHZ = 1e3
DISPERSIVE_RATIO_LIMIT = 0.2

# Опорные значения по умолчанию
REFERENCE_DEVICE = {
    "omega_bar_a": 10.0,
    "omega_bar_b": 12.0,
    "omega_bar_q": 5.0,
    "g_a": 0.5,
    "g_b": 0.4,
    "kappa_a": 20.0,
    "kappa_b": 46.0,
    "gamma": 0.01,
    "n_a_max": 3,
    "n_b_max": 3,
}
REFERENCE_OMEGA_D = 4.832
REFERENCE_OMEGA_D_IMP = 10.75
REFERENCE_N_B = 0.05


def angular(value: float, unit: str = "GHz") -> float:
    """Линейная частота -> угловая скорость в рад/нс"""
    if unit == "GHz":
        return TWO_PI * value
    if unit == "MHz":
        return TWO_PI * value / MHZ_PER_GHZ
    raise ValueError(f"Unknown frequency unit: {unit}")


def linear(value: float, unit: str = "GHz") -> float:
    """Угловая скорость в рад/нс -> линейная частота"""
    if unit == "GHz":
        return value / TWO_PI
    if unit == "MHz":
        return value * MHZ_PER_GHZ / TWO_PI
    raise ValueError(f"Unknown frequency unit: {unit}")


class BareParams(BaseModel):
    """Голые параметры кубита и двух резонаторов"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    omega_bar_a: float = Field(..., gt=0, description="GHz")
    omega_bar_b: float = Field(..., gt=0, description="GHz")
    omega_bar_q: float = Field(..., gt=0, description="GHz")
    g_a: float = Field(..., ge=0, description="GHz")
    g_b: float = Field(..., ge=0, description="GHz")
    kappa_a: float = Field(..., gt=0, description="MHz")
    kappa_b: float = Field(..., gt=0, description="MHz")
    gamma: float = Field(..., gt=0, description="MHz")
    n_a_max: int = Field(3, ge=2)
    n_b_max: int = Field(3, ge=2)

    @field_validator("omega_bar_a", "omega_bar_b", "omega_bar_q", "g_a", "g_b",
                     "kappa_a", "kappa_b", "gamma")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value

    def dispersive_ratios(self) -> Dict[str, float]:
        """Отношения g_r/|Δ_r| для проверки дисперсионного режима"""
        ratios = {}
        for name, omega_bar, g in (("a", self.omega_bar_a, self.g_a),
                                   ("b", self.omega_bar_b, self.g_b)):
            detuning = abs(omega_bar - self.omega_bar_q)
            ratios[name] = math.inf if detuning == 0 else g / detuning
        return ratios

    def with_truncation(self, n_a_max: Optional[int] = None,
                        n_b_max: Optional[int] = None) -> "BareParams":
        """Копия с другим обрезанием пространства Фока"""
        update: Dict[str, Any] = {}
        if n_a_max is not None:
            update["n_a_max"] = n_a_max
        if n_b_max is not None:
            update["n_b_max"] = n_b_max
        return BareParams(**{**self.model_dump(), **update})


class DispersiveParams(BaseModel):
    """Перенормированные параметры в дисперсионном режиме"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    chi_a: float  # MHz
    chi_b: float  # MHz
    omega_a: float  # GHz
    omega_b: float  # GHz
    omega_q: float  # GHz
    kappa_a: float  # MHz
    kappa_b: float  # MHz
    gamma: float  # MHz
    n_a_max: int
    n_b_max: int

    @property
    def dims(self) -> tuple:
        return (2, self.n_a_max + 1, self.n_b_max + 1)

    @property
    def hilbert_dim(self) -> int:
        return 2 * (self.n_a_max + 1) * (self.n_b_max + 1)

    # Угловые величины, рад/нс
    @property
    def chi_a_rad(self) -> float:
        return angular(self.chi_a, "MHz")

    @property
    def chi_b_rad(self) -> float:
        return angular(self.chi_b, "MHz")

    @property
    def omega_a_rad(self) -> float:
        return angular(self.omega_a)

    @property
    def omega_b_rad(self) -> float:
        return angular(self.omega_b)

    @property
    def omega_q_rad(self) -> float:
        return angular(self.omega_q)

    @property
    def kappa_a_rad(self) -> float:
        return angular(self.kappa_a, "MHz")

    @property
    def kappa_b_rad(self) -> float:
        return angular(self.kappa_b, "MHz")

    @property
    def gamma_rad(self) -> float:
        return angular(self.gamma, "MHz")

    def nesting_window(self) -> tuple:
        """Окно ω_q−2χ_a < ω_d < ω_q−2χ_b в ГГц"""
        return (self.omega_q - 2.0 * self.chi_a / MHZ_PER_GHZ,
                self.omega_q - 2.0 * self.chi_b / MHZ_PER_GHZ)

    def operating_probe_frequency(self) -> float:
        """Рабочая частота пробы ω_b − 2χ_b, ГГц"""
        return self.omega_b - 2.0 * self.chi_b / MHZ_PER_GHZ

    def with_rates(self, **rates: float) -> "DispersiveParams":
        """Копия с измененными скоростями затухания или сдвигами"""
        return DispersiveParams(**{**self.model_dump(), **rates})

    def with_truncation(self, n_a_max: int, n_b_max: int) -> "DispersiveParams":
        """Копия с другим обрезанием пространства Фока"""
        return self.with_rates(n_a_max=n_a_max, n_b_max=n_b_max)


class DriveSpec(BaseModel):
    """Непрерывная накачка кубита"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    omega_d: float = Field(..., gt=0, description="GHz")
    Omega_d: float = Field(0.0, ge=0, description="MHz")

    @property
    def omega_d_rad(self) -> float:
        return angular(self.omega_d)

    @property
    def Omega_d_rad(self) -> float:
        return angular(self.Omega_d, "MHz")

    def with_power(self, Omega_d: float) -> "DriveSpec":
        return DriveSpec(omega_d=self.omega_d, Omega_d=Omega_d)


class ProbeSpec(BaseModel):
    """Непрерывная проба резонатора B"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    omega_p: float = Field(..., gt=0, description="GHz")
    n_b_mean: float = Field(0.0, ge=0)

    @property
    def enabled(self) -> bool:
        return self.n_b_mean > 0

    @property
    def omega_p_rad(self) -> float:
        return angular(self.omega_p)

    def photon_flux(self, kappa_b: float) -> float:
        """|E_p|² = κ_b⟨n_b⟩/4 (κ_b в МГц), фотонов в нс"""
        return angular(kappa_b, "MHz") * self.n_b_mean / 4.0

    def amplitude(self, kappa_b: float) -> float:
        """|E_p| в √(фотон/нс)"""
        return math.sqrt(self.photon_flux(kappa_b))

    def with_power(self, n_b_mean: float) -> "ProbeSpec":
        return ProbeSpec(omega_p=self.omega_p, n_b_mean=n_b_mean)


def derive_dispersive(bare: BareParams) -> DispersiveParams:
    """Дисперсионные сдвиги и перенормированные частоты"""
    for name, ratio in bare.dispersive_ratios().items():
        if not ratio < DISPERSIVE_RATIO_LIMIT:
            raise DispersiveValidityError(
                f"Dispersive regime violated for resonator {name}: "
                f"g_{name}/|omega_bar_{name} - omega_bar_q| = {ratio:.4g} >= {DISPERSIVE_RATIO_LIMIT}",
                {"resonator": name, "ratio": ratio, "limit": DISPERSIVE_RATIO_LIMIT},
            )

    chi_a = bare.g_a ** 2 / (bare.omega_bar_a - bare.omega_bar_q)
    chi_b = bare.g_b ** 2 / (bare.omega_bar_b - bare.omega_bar_q)

    dp = DispersiveParams(
        chi_a=chi_a * MHZ_PER_GHZ,
        chi_b=chi_b * MHZ_PER_GHZ,
        omega_a=bare.omega_bar_a + chi_a,
        omega_b=bare.omega_bar_b + chi_b,
        omega_q=bare.omega_bar_q - chi_a - chi_b,
        kappa_a=bare.kappa_a,
        kappa_b=bare.kappa_b,
        gamma=bare.gamma,
        n_a_max=bare.n_a_max,
        n_b_max=bare.n_b_max,
    )
    logger.debug(f"chi_a={dp.chi_a:.6f} MHz, chi_b={dp.chi_b:.6f} MHz")
    return dp


def check_nesting_window(dp: DispersiveParams, drive: DriveSpec) -> None:
    """Проверка ω_q−2χ_a < ω_d < ω_q−2χ_b (строго)"""
    low, high = dp.nesting_window()
    if not low < drive.omega_d < high:
        raise NestingWindowError(
            f"Drive frequency {drive.omega_d} GHz outside nesting window ({low:.6f}, {high:.6f}) GHz",
            {"omega_d": drive.omega_d, "window_GHz": [low, high]},
        )


def reference_bare_params(**overrides: Any) -> BareParams:
    """Опорные параметры устройства"""
    return BareParams(**{**REFERENCE_DEVICE, **overrides})


def operating_probe(dp: DispersiveParams, n_b_mean: float = REFERENCE_N_B) -> ProbeSpec:
    """Проба на частоте ω_b − 2χ_b"""
    return ProbeSpec(omega_p=dp.operating_probe_frequency(), n_b_mean=n_b_mean)


__all__ = [
    'TWO_PI',
    'MHZ_PER_GHZ',
    'REFERENCE_DEVICE',
    'REFERENCE_OMEGA_D',
    'REFERENCE_OMEGA_D_IMP',
    'REFERENCE_N_B',
    'angular',
    'linear',
    'BareParams',
    'DispersiveParams',
    'DriveSpec',
    'ProbeSpec',
    'derive_dispersive',
    'check_nesting_window',
    'reference_bare_params',
    'operating_probe',
]
