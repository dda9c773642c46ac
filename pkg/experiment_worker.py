"""
Background workers for independent seeds and grid cells.
"""

from typing import Any, Callable, Dict, Hashable, List, Tuple

import psutil
from PyQt5.QtCore import QCoreApplication, Qt, QThread, pyqtSignal

from log_utils import get_logger, log_activity

logger = get_logger("worker")

Task = Tuple[Hashable, Callable[[], Any]]


class SeedWorker(QThread):
    """Runs a slice of tasks; failures are captured per task, never raised across the thread."""

    progress_updated = pyqtSignal(str)
    task_finished = pyqtSignal(object)
    error_occurred = pyqtSignal(str)

    def __init__(self, tasks: List[Task]):
        super().__init__()
        self.tasks = tasks
        self.results: Dict[Hashable, Any] = {}
        self.errors: Dict[Hashable, BaseException] = {}
        self.should_stop = False

    def run(self):
        for key, fn in self.tasks:
            if self.should_stop:
                break
            try:
                self.progress_updated.emit(f"running {key}")
                self.results[key] = fn()
                self.task_finished.emit(key)
            except Exception as e:
                self.errors[key] = e
                self.error_occurred.emit(f"{key}: {e}")

    def stop(self):
        self.should_stop = True


def default_jobs() -> int:
    return psutil.cpu_count(logical=False) or 1


def run_tasks(tasks: List[Task], jobs: int = 1) -> Dict[Hashable, Any]:
    """Run ``tasks`` and return results by key; the first failure in task order is re-raised."""
    if jobs <= 1 or len(tasks) <= 1:
        results = {}
        for key, fn in tasks:
            logger.debug(f"running {key}")
            results[key] = fn()
        return results

    QCoreApplication.instance() or QCoreApplication([])
    jobs = min(jobs, len(tasks))
    workers = [SeedWorker(tasks[i::jobs]) for i in range(jobs)]
    for worker in workers:
        worker.progress_updated.connect(lambda text: log_activity(text, "DEBUG", "worker"), Qt.DirectConnection)
        worker.error_occurred.connect(lambda text: log_activity(text, "ERROR", "worker"), Qt.DirectConnection)
        worker.start()
    for worker in workers:
        worker.wait()

    results, errors = {}, {}
    for worker in workers:
        results.update(worker.results)
        errors.update(worker.errors)
    for key, _ in tasks:
        if key in errors:
            raise errors[key]
    return {key: results[key] for key, _ in tasks}
