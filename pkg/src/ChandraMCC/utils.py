"""Utility functions for ChandraMCC.

This module provides logging setup, process priority and CPU pinning for
timing runs, trajectory fingerprints, and text rendering helpers.
"""

from __future__ import annotations

import hashlib
import io
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import psutil
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .exceptions import SchemaError
from .statespace import Trajectory

__all__ = [
    "configure_logging",
    "set_high_priority",
    "pin_process",
    "timing_environment",
    "trajectory_digest",
    "render_table",
    "write_text",
]

logger = logging.getLogger(__name__)

# Width used when rendering tables to text so output does not depend on the terminal
RENDER_WIDTH = 120


# --- LOGGING ---


def configure_logging(verbosity: int = 0) -> None:
    """Install a single rich handler on the root logger (stderr).

    Args:
        verbosity: 0 for WARNING, 1 for INFO, 2 or more for DEBUG.
    """
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    handler = RichHandler(
        console=Console(stderr=True),
        show_path=False,
        rich_tracebacks=verbosity >= 2,
    )
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.setLevel(level)


# --- PROCESS CONTROL ---


def set_high_priority() -> bool:
    """Raise the process priority so timing runs are not preempted.

    Returns:
        True if the priority was changed.
    """
    try:
        p = psutil.Process()
        if hasattr(psutil, "HIGH_PRIORITY_CLASS"):
            p.nice(psutil.HIGH_PRIORITY_CLASS)
        else:
            p.nice(-10)
        logger.info("Process priority raised.")
        return True
    except (psutil.Error, OSError) as e:
        logger.warning("Failed to set process priority: %s", e)
        return False


def pin_process(cpu: int | None = None) -> list[int] | None:
    """Pin the current process to one CPU.

    Args:
        cpu: CPU index; defaults to the first CPU the process may run on.

    Returns:
        The previous affinity list, or None if affinity is unsupported or denied.
    """
    p = psutil.Process()
    try:
        previous = p.cpu_affinity()
    except (AttributeError, psutil.Error, OSError) as e:
        logger.warning("CPU affinity is not available: %s", e)
        return None
    if not previous:
        return None
    target = previous[0] if cpu is None else cpu
    try:
        p.cpu_affinity([target])
    except (psutil.Error, OSError, ValueError) as e:
        logger.warning("Failed to pin process to CPU %d: %s", target, e)
        return None
    logger.debug("Pinned to CPU %d", target)
    return list(previous)


@contextmanager
def timing_environment(enabled: bool = True) -> Iterator[None]:
    """Raise priority and pin to one CPU for the duration of the block.

    The previous affinity is restored on exit; priority is left raised.
    """
    if not enabled:
        yield
        return
    set_high_priority()
    previous = pin_process()
    try:
        yield
    finally:
        if previous is not None:
            try:
                psutil.Process().cpu_affinity(previous)
            except (psutil.Error, OSError) as e:
                logger.warning("Failed to restore CPU affinity: %s", e)


# --- FINGERPRINTS ---


def trajectory_digest(t: Trajectory) -> str:
    """Return a SHA-256 fingerprint of a trajectory's states and measurements."""
    h = hashlib.sha256()
    h.update(np.int64(t.seed).tobytes())
    h.update(np.ascontiguousarray(t.states, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(t.measurements, dtype=np.float64).tobytes())
    return h.hexdigest()


# --- TEXT OUTPUT ---


def render_table(table: Table) -> str:
    """Render a rich table to plain text."""
    buf = io.StringIO()
    console = Console(file=buf, width=RENDER_WIDTH, color_system=None, force_terminal=False)
    console.print(table)
    return buf.getvalue()


def write_text(text: str, path: str | Path) -> None:
    """Write text output to ``path``.

    Raises:
        SchemaError: If the file cannot be written.
    """
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise SchemaError(f"Failed to write {path}: {e}") from e
