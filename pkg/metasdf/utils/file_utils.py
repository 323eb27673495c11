"""
File handling utilities for MetaSDF Shape Lab
"""
import datetime
import os
import subprocess
import tempfile
from typing import Dict, Optional

from metasdf import __version__, config


def create_output_directory(output_dir: Optional[str] = None, prefix: str = "run") -> str:
    """
    Create output directory if it doesn't exist

    Args:
        output_dir: Requested directory, or None for a timestamped folder under RESULTS_BASE
        prefix: Folder name prefix used for timestamped folders

    Returns:
        Path to the output directory
    """
    if not output_dir:
        timestamp = datetime.datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
        output_dir = os.path.join(config.RESULTS_BASE, f"{prefix}_{timestamp}")
    if not os.path.exists(output_dir):
        os.makedirs(output_dir)
        print(f"Created output directory: {output_dir}")
    return output_dir


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """
    Write a file through a temporary sibling and rename it into place

    Args:
        path: Destination path
        payload: File contents
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(payload)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def atomic_write_text(path: str, text: str) -> None:
    """Text variant of atomic_write_bytes (UTF-8, '\\n' newlines)"""
    atomic_write_bytes(path, text.encode("utf-8"))


def save_input_copy(output_dir: str, source_file: str, name: Optional[str] = None) -> None:
    """
    Save a copy of an input file in the output directory for reference

    Args:
        output_dir: Output directory path
        source_file: File to copy
        name: Name of the copy (defaults to the source's base name)
    """
    output_file = os.path.join(output_dir, name or os.path.basename(source_file))
    try:
        with open(source_file, 'rb') as src:
            atomic_write_bytes(output_file, src.read())
        print(f"Saved copy of input file to {output_file}")
    except OSError as e:
        print(f"Warning: Could not save input file copy: {e}")


_version_cache: Optional[str] = None


def version_string() -> str:
    """
    Package version, extended with git describe when run from a checkout

    Returns:
        Version string such as '1.0.0' or '1.0.0+v0.3-2-gabc123'
    """
    global _version_cache
    if _version_cache is None:
        described = ""
        try:
            result = subprocess.run(
                ["git", "describe", "--always", "--dirty"],
                cwd=config.PROJECT_ROOT, capture_output=True, text=True, timeout=5,
            )
            if result.returncode == 0:
                described = result.stdout.strip()
        except (OSError, subprocess.SubprocessError):
            described = ""
        _version_cache = f"{__version__}+{described}" if described else __version__
    return _version_cache


def create_readme(output_dir: str, title: str, files: Dict[str, str]) -> None:
    """
    Create README file with information about this run

    Args:
        output_dir: Output directory path
        title: First line of the README
        files: Mapping of produced file names to descriptions
    """
    readme_file = os.path.join(output_dir, "README.txt")
    try:
        lines = [title, f"Version: {version_string()}", "", "Output Files:"]
        for name, description in files.items():
            if os.path.exists(os.path.join(output_dir, name)):
                lines.append(f"- {name}: {description}")
        for name, description in (("debug_log.txt", "Detailed processing log"),
                                  ("problem_cases.txt", "Special cases requiring attention")):
            if os.path.exists(os.path.join(output_dir, name)):
                lines.append(f"- {name}: {description}")
        atomic_write_text(readme_file, "\n".join(lines) + "\n")
        print(f"Created README file: {readme_file}")
    except OSError as e:
        print(f"Warning: Could not create README file: {e}")
