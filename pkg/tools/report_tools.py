"""
Выходные файлы: CSV с единицами в заголовке, JSON сводка, таблицы rich.
"""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

logger = logging.getLogger(__name__)
console = Console()


@dataclass
class Headline:
    """Итоговое значение вместе с полосой допуска"""

    value: float
    expected: Optional[float] = None
    tolerance: Optional[float] = None
    unit: str = ""

    @property
    def within(self) -> Optional[bool]:
        if self.expected is None or self.tolerance is None:
            return None
        return bool(abs(self.value - self.expected) <= self.tolerance)

    def to_dict(self) -> Dict[str, Any]:
        return {**asdict(self), "within": self.within}


@dataclass
class FigureReport:
    """Результат одной подкоманды"""

    name: str
    csv_paths: List[str] = field(default_factory=list)
    headline: Dict[str, Headline] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None

    def add(self, key: str, value: float, expected: Optional[float] = None,
            tolerance: Optional[float] = None, unit: str = "") -> Headline:
        self.headline[key] = Headline(value=float(value), expected=expected, tolerance=tolerance, unit=unit)
        return self.headline[key]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "csv_paths": self.csv_paths,
            "headline": {k: h.to_dict() for k, h in self.headline.items()},
            "metadata": self.metadata,
            "error": self.error,
        }


def _json_default(value: Any) -> Any:
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, tuple):
        return list(value)
    return str(value)


def _clean(value: Any) -> Any:
    """NaN и бесконечности -> None для корректного JSON"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_csv(frame: pd.DataFrame, path: str, units: Dict[str, str]) -> str:
    """CSV, первая строка: # units: колонка=единица, ..."""
    missing = [c for c in frame.columns if c not in units]
    if missing:
        raise ValueError(f"Units missing for columns: {', '.join(missing)}")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    header = "# units: " + ", ".join(f"{c}={units[c]}" for c in frame.columns)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(header + "\n")
        frame.to_csv(f, index=False, float_format="%.10g")
    logger.info(f"✅ Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def write_summary(report: FigureReport, out_dir: str) -> str:
    path = os.path.join(out_dir, f"{report.name}_summary.json")
    os.makedirs(out_dir, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_clean(report.to_dict()), f, indent=2, ensure_ascii=False, default=_json_default)
    return path


def print_report(report: FigureReport) -> None:
    table = Table(title=f"📊 {report.name}")
    table.add_column("Quantity")
    table.add_column("Value", justify="right")
    table.add_column("Expected", justify="right")
    table.add_column("Status")
    for key, item in report.headline.items():
        expected = "" if item.within is None else f"{item.expected:g} ± {item.tolerance:g}"
        status = {True: "✅", False: "❌", None: "·"}[item.within]
        table.add_row(key, f"{item.value:.6g} {item.unit}".strip(), expected, status)
    console.print(table)


def print_checks(checks: List[Dict[str, Any]]) -> None:
    table = Table(title="🔬 Regression checks")
    table.add_column("#", justify="right")
    table.add_column("Check")
    table.add_column("Result")
    table.add_column("Details")
    for item in checks:
        table.add_row(str(item["id"]), item["name"], "✅ pass" if item["passed"] else "❌ FAIL",
                      item.get("message", ""))
    console.print(table)


__all__ = [
    'Headline',
    'FigureReport',
    'write_csv',
    'read_csv',
    'write_summary',
    'print_report',
    'print_checks',
    'console',
]
