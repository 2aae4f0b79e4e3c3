import os
from typing import Tuple


def normalize_path(raw_path: str) -> str:
    """
    Cleans inputs like:
    - '"runs/out"'  (quoted shell artifact)
    - 'runs//out/'  (redundant separators)

    Args:
        raw_path: Raw path string to normalize

    Returns:
        Normalized path string, "" for empty input
    """
    if raw_path is None:
        return ""

    path = raw_path.strip('"').strip("'").strip()
    if not path:
        return ""
    return os.path.normpath(path)


def validate_output_dir(path: str) -> Tuple[bool, str]:
    """
    Checks that an output directory exists and is writable, or can be created.

    Args:
        path: Directory that will receive artifacts

    Returns:
        Tuple of (success: bool, message: str)
    """
    clean = normalize_path(path)

    if not clean:
        return False, "Output path cannot be empty."

    if os.path.exists(clean):
        if not os.path.isdir(clean):
            return False, f"Output target is not a directory: {clean}"
        if not os.access(clean, os.W_OK):
            return False, f"Permission denied writing to: {clean}"
        return True, "OK"

    # Walk up to the first existing ancestor; it must be writable
    parent = os.path.dirname(os.path.abspath(clean))
    while parent and not os.path.exists(parent):
        next_parent = os.path.dirname(parent)
        if next_parent == parent:
            break
        parent = next_parent
    if not os.path.isdir(parent):
        return False, f"Cannot create output directory under: {parent}"
    if not os.access(parent, os.W_OK):
        return False, f"Permission denied creating: {clean}"
    return True, "OK"


def validate_input_file(path: str) -> Tuple[bool, str]:
    """
    Checks that an input file (config, dataset, pulse set) exists and is readable.

    Returns:
        Tuple of (success: bool, message: str)
    """
    clean = normalize_path(path)

    if not clean:
        return False, "Input path cannot be empty."
    if not os.path.exists(clean):
        return False, f"File does not exist: {clean}"
    if not os.path.isfile(clean):
        return False, f"Not a file: {clean}"
    if not os.access(clean, os.R_OK):
        return False, f"Permission denied reading: {clean}"
    return True, "OK"
