"""Bundled example case files."""

from pathlib import Path

_HERE = Path(__file__).parent


def case_path(name: str) -> Path:
    """Filesystem path of a bundled case, e.g. case_path('ieee24_rts')."""
    if not name.endswith(".m"):
        name += ".m"
    path = _HERE / name
    if not path.exists():
        available = ", ".join(sorted(p.stem for p in _HERE.glob("*.m")))
        raise FileNotFoundError(f"no bundled case {name!r} (available: {available})")
    return path
