"""
🚀 Окружение запуска: каталоги, логирование, проверка зависимостей, баннер
"""

import logging
import os
from typing import List, Optional

from simulation_errors import ConfigError

REQUIRED_MODULES = ['numpy', 'scipy', 'pandas', 'pydantic', 'jsonschema', 'yaml', 'psutil', 'rich']
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'


def setup_environment(out_dir: str, log_file: str = 'logs/lambda_scope.log',
                      level: str = 'INFO') -> None:
    """Создание каталогов и настройка логирования"""
    for directory in (os.path.dirname(log_file) or '.', out_dir):
        os.makedirs(directory, exist_ok=True)

    if not os.access(out_dir, os.W_OK):
        raise ConfigError(f"Output directory is not writable: {out_dir}", {"out": out_dir})

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler()
        ],
        force=True,
    )


def check_dependencies(modules: Optional[List[str]] = None) -> List[str]:
    """Список отсутствующих модулей"""
    missing_modules = []
    for module in modules or REQUIRED_MODULES:
        try:
            __import__(module)
        except ImportError:
            missing_modules.append(module)

    if missing_modules:
        print(f"❌ Отсутствуют модули: {', '.join(missing_modules)}")
        print("📦 Установите их командой: pip install -r requirements.txt")
    return missing_modules


def show_startup_banner() -> None:
    """Отображение стартового баннера"""
    banner = """
╔══════════════════════════════════════════════════════════════╗
║                                                              ║
║        🔬 LAMBDA-SCOPE: непрерывный детектор фотонов         ║
║                                                              ║
║  ✨ Импеданс-согласованная Λ-система в схеме                 ║
║     кубит + резонатор A (сигнал) + резонатор B (проба)       ║
║                                                              ║
║  🎯 Подкоманды:                                              ║
║     • dressed-rates   скорости распада одетых уровней        ║
║     • reflection-map  коэффициент отражения |r_s|            ║
║     • pulse-response  захват однофотонного импульса          ║
║     • efficiency      эффективность детектирования           ║
║     • appendix        сравнение η₁ и η₂                      ║
║     • regression      проверка по опорным значениям          ║
║                                                              ║
╚══════════════════════════════════════════════════════════════╝
"""
    print(banner)


__all__ = ['setup_environment', 'check_dependencies', 'show_startup_banner']
