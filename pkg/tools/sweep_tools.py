"""
Пул процессов для независимых точек сетки.
Результаты собираются по индексу точки, а не по порядку завершения.
"""

import logging
import os
import time
from multiprocessing import Pool
from typing import Any, Callable, Dict, Iterable, List, Optional

import psutil


def default_workers() -> int:
    """Число физических ядер (или логических, если неизвестно)"""
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


class SweepRunner:
    """Параллельное отображение функции на точки сетки"""

    def __init__(self, workers: Optional[int] = None, chunksize: int = 1):
        self.workers = max(1, workers or default_workers())
        self.chunksize = chunksize
        self.logger = logging.getLogger(__name__)
        self.points_done = 0
        self.elapsed = 0.0

    def map(self, func: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        points = list(items)
        started = time.time()
        if self.workers == 1 or len(points) <= 1:
            results = [func(point) for point in points]
        else:
            processes = min(self.workers, len(points))
            self.logger.debug(f"Dispatching {len(points)} points to {processes} workers")
            with Pool(processes=processes) as pool:
                # Pool.map сохраняет порядок входных точек
                results = pool.map(func, points, chunksize=self.chunksize)
        self.points_done += len(points)
        self.elapsed += time.time() - started
        return results

    __call__ = map

    def metadata(self) -> Dict[str, Any]:
        """Сведения о запуске для отчета"""
        process = psutil.Process(os.getpid())
        return {
            "workers": self.workers,
            "points": self.points_done,
            "sweep_seconds": round(self.elapsed, 3),
            "cpu_count": psutil.cpu_count(),
            "rss_mb": round(process.memory_info().rss / 2 ** 20, 1),
        }


__all__ = ['SweepRunner', 'default_workers']
