# Исключения симулятора lambda-scope
from typing import Any, Dict, Optional


class LambdaScopeError(Exception):
    """Базовая ошибка симулятора"""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def __reduce__(self):
        # для передачи между процессами пула
        return (type(self), (self.message, self.details))

    def to_dict(self) -> Dict[str, Any]:
        """Представление для JSON отчета"""
        return {
            "error": self.message,
            "type": type(self).__name__,
            "details": self.details,
        }


class ConfigError(LambdaScopeError):
    """Ошибка конфигурации"""
    exit_code = 2


class DispersiveValidityError(ConfigError):
    """Нарушено условие дисперсионного режима"""


class NestingWindowError(ConfigError):
    """Частота накачки вне окна вложенности"""


class FrameError(LambdaScopeError):
    """Несогласованная вращающаяся система отсчета"""


class DegenerateSpectrumError(LambdaScopeError):
    """Вырожденные уровни в одно-фотонном многообразии"""


class BracketError(LambdaScopeError):
    """Нет смены знака на интервале поиска корня"""


class SteadyStateError(LambdaScopeError):
    """Стационарное состояние не единственно"""


class WeakDriveError(LambdaScopeError):
    """Нарушен режим слабого сигнала"""


class ConvergenceError(LambdaScopeError):
    """Интегрирование не сошлось"""
    exit_code = 3


class FitError(LambdaScopeError):
    """Неудачная аппроксимация"""


class ThresholdError(LambdaScopeError):
    """Порог эффективности не пересечен"""


class QuadratureError(LambdaScopeError):
    """Некорректное распределение длительностей"""


class RegressionFailure(LambdaScopeError):
    """Регрессионная проверка не пройдена"""
    exit_code = 4


__all__ = [
    'LambdaScopeError',
    'ConfigError',
    'DispersiveValidityError',
    'NestingWindowError',
    'FrameError',
    'DegenerateSpectrumError',
    'BracketError',
    'SteadyStateError',
    'WeakDriveError',
    'ConvergenceError',
    'FitError',
    'ThresholdError',
    'QuadratureError',
    'RegressionFailure',
]
