import logging
from unittest.mock import MagicMock, patch

import psutil
import pytest
from rich.logging import RichHandler
from rich.table import Table

from ChandraMCC.exceptions import SchemaError
from ChandraMCC.statespace import simulate
from ChandraMCC.utils import (
    configure_logging,
    pin_process,
    render_table,
    set_high_priority,
    timing_environment,
    trajectory_digest,
    write_text,
)


@pytest.fixture
def mock_process():
    with patch("ChandraMCC.utils.psutil.Process") as mock:
        proc = MagicMock()
        proc.cpu_affinity.return_value = [2, 3]
        mock.return_value = proc
        yield proc


def test_configure_logging_levels():
    configure_logging(0)
    assert logging.getLogger().level == logging.WARNING
    configure_logging(1)
    assert logging.getLogger().level == logging.INFO
    configure_logging(3)
    assert logging.getLogger().level == logging.DEBUG
    handlers = [h for h in logging.getLogger().handlers if isinstance(h, RichHandler)]
    assert len(handlers) == 1


def test_set_high_priority(mock_process):
    assert set_high_priority() is True
    mock_process.nice.assert_called_once()


def test_set_high_priority_denied(mock_process, caplog):
    mock_process.nice.side_effect = psutil.AccessDenied()
    with caplog.at_level(logging.WARNING):
        assert set_high_priority() is False
    assert "priority" in caplog.text


def test_pin_process(mock_process):
    assert pin_process() == [2, 3]
    mock_process.cpu_affinity.assert_called_with([2])


def test_pin_process_unsupported(mock_process):
    mock_process.cpu_affinity.side_effect = AttributeError("no affinity")
    assert pin_process() is None


def test_timing_environment_restores_affinity(mock_process):
    with timing_environment():
        mock_process.cpu_affinity.assert_called_with([2])
    mock_process.cpu_affinity.assert_called_with([2, 3])


def test_timing_environment_disabled(mock_process):
    with timing_environment(False):
        pass
    mock_process.nice.assert_not_called()
    mock_process.cpu_affinity.assert_not_called()


def test_trajectory_digest(sat_benchmark):
    a = simulate(sat_benchmark, 30, seed=1)
    assert trajectory_digest(a) == trajectory_digest(simulate(sat_benchmark, 30, seed=1))
    assert trajectory_digest(a) != trajectory_digest(simulate(sat_benchmark, 30, seed=2))
    assert len(trajectory_digest(a)) == 64


def test_render_table():
    table = Table(title="Demo")
    table.add_column("name")
    table.add_row("alg2")
    text = render_table(table)
    assert "Demo" in text and "alg2" in text
    assert "\x1b[" not in text


def test_write_text(tmp_path):
    path = tmp_path / "out.txt"
    write_text("hello\n", path)
    assert path.read_text() == "hello\n"
    with pytest.raises(SchemaError):
        write_text("x", tmp_path / "missing" / "out.txt")
