"""
Logging utilities for MetaSDF Shape Lab

Messages are printed as they arrive and buffered until the command that
produced them flushes the buffers into its output directory.
"""
import os
import threading
from typing import List

from metasdf import config
from metasdf.utils.file_utils import atomic_write_text

debug_log: List[str] = []
problem_cases: List[str] = []
_lock = threading.Lock()


def log_debug(message: str) -> None:
    """Add a message to the debug log (only when METASDF_DEBUG is set)"""
    if config.DEBUG_MODE:
        with _lock:
            debug_log.append(message)
        print(f"DEBUG: {message}")


def log_problem(message: str) -> None:
    """Add a message to the problem cases log"""
    with _lock:
        problem_cases.append(message)
    print(f"PROBLEM: {message}")


def clear_logs() -> None:
    with _lock:
        debug_log.clear()
        problem_cases.clear()


def _flush(buffer: List[str], output_dir: str, name: str, label: str) -> None:
    with _lock:
        lines = list(buffer)
    if not lines:
        return
    path = os.path.join(output_dir, name)
    atomic_write_text(path, "\n".join(lines) + "\n")
    print(f"{label} saved to {path}")


def save_debug_log(output_dir: str) -> None:
    if config.DEBUG_MODE:
        _flush(debug_log, output_dir, "debug_log.txt", "Debug log")


def save_problem_cases(output_dir: str) -> None:
    _flush(problem_cases, output_dir, "problem_cases.txt", "Problem cases")
