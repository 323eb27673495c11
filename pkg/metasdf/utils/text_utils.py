"""
Text processing utilities for MetaSDF Shape Lab
"""
import re
from typing import List, Optional


def parse_int_list(text: Optional[str]) -> List[int]:
    """
    Parse a comma separated list of integers, allowing ranges

    Args:
        text: Text such as '6,7,8,9' or '6-9'

    Returns:
        Sorted list of unique integers
    """
    if not text:
        return []
    values = set()
    for part in re.split(r'[,\s]+', text.strip()):
        if not part:
            continue
        match = re.fullmatch(r'(-?\d+)-(-?\d+)', part)
        if match:
            lo, hi = int(match.group(1)), int(match.group(2))
            values.update(range(min(lo, hi), max(lo, hi) + 1))
        elif re.fullmatch(r'-?\d+', part):
            values.add(int(part))
        else:
            raise ValueError(f"Not an integer list: '{text}'")
    return sorted(values)


def extract_class_label(filename: str) -> Optional[int]:
    """
    Extract the class label from a raster file name

    Args:
        filename: File name such as '7_00012.pgm' or 'digit3-a.pgm'

    Returns:
        Class label as integer or None
    """
    match = re.match(r'^(?:[A-Za-z]*?)(\d+)[_\-.]', filename)
    if match:
        return int(match.group(1))
    return None


def shape_id(index: int, prefix: str = "shape") -> str:
    """Stable identifier for the index-th shape of a corpus"""
    return f"{prefix}_{index:05d}"


def format_ms(milliseconds: float) -> str:
    """Human readable duration"""
    if milliseconds >= 1000.0:
        return f"{milliseconds / 1000.0:.2f} s"
    return f"{milliseconds:.1f} ms"
