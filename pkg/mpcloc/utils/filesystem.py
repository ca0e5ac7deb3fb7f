import os


def ensure_parent_dir(path: str) -> str:
    """
    Creates the parent directory of a file path when missing.

    Args:
        path (str): File path about to be written.

    Returns:
        str: The absolute file path.
    """

    path = os.path.abspath(path)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    return path


def is_yaml_path(path: str) -> bool:
    """Whether a config path should be parsed as YAML rather than JSON."""

    return os.path.splitext(path)[1].lower() in (".yml", ".yaml")
