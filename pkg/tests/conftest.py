"""Общие фикстуры: опорные параметры устройства и рабочая точка детектора"""

import pytest

from core_model import REFERENCE_OMEGA_D, DriveSpec, derive_dispersive, operating_probe, reference_bare_params
from dressed_engine import find_impedance_match


@pytest.fixture(scope="session")
def bare():
    return reference_bare_params()


@pytest.fixture(scope="session")
def dp(bare):
    return derive_dispersive(bare)


@pytest.fixture(scope="session")
def small_dp(dp):
    # два фотона на резонатор достаточно для однофотонных задач
    return dp.with_truncation(2, 2)


@pytest.fixture(scope="session")
def Omega_imp(dp):
    return find_impedance_match(dp, REFERENCE_OMEGA_D)


@pytest.fixture(scope="session")
def drive(Omega_imp):
    return DriveSpec(omega_d=REFERENCE_OMEGA_D, Omega_d=Omega_imp)


@pytest.fixture(scope="session")
def idle_drive():
    return DriveSpec(omega_d=REFERENCE_OMEGA_D, Omega_d=0.0)


@pytest.fixture(scope="session")
def probe(dp):
    return operating_probe(dp)
