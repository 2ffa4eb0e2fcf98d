"""Unit tests for the Logger module"""

import os.path
import datetime
import time
import pytest
from tqdm import tqdm
from logger import Logger, LogLevel


@pytest.fixture
def logs_path(tmp_path):
    """Fresh Logger state writing into a temporary folder"""
    Logger.reset_logger()
    yield str(tmp_path / "test_logs")
    Logger.reset_logger()


def test_logger_constructor(logs_path):
    """
    Test the Logger constructor and initialization
    """
    now = datetime.datetime.now().replace(microsecond=0)

    logger = Logger(logs_path=logs_path)
    assert isinstance(logger, Logger)
    assert logger.component == "Main"

    # Check if log file path is correctly set
    assert os.path.exists(logs_path)
    assert os.path.basename(logger.log_file).startswith("ids_")

    last_log_date_str = logger.log_file.rsplit("_", maxsplit=1)[-1].replace(".log", "")
    last_log_date = datetime.datetime.strptime(last_log_date_str, "%Y.%m.%d-%H.%M.%S")

    assert last_log_date >= now


def test_logger_log_levels(logs_path):
    """
    Test the Logger log level getters and initialization
    """
    Logger(
        logs_path=logs_path,
        file_log_level=LogLevel.ERROR,
        print_log_level=LogLevel.DEBUG,
    )
    assert Logger.get_file_log_level() == LogLevel.ERROR
    assert Logger.get_print_log_level() == LogLevel.DEBUG

    # Create another logger instance with different levels
    Logger(
        logs_path=logs_path,
        file_log_level=LogLevel.WARNING,
        print_log_level=LogLevel.INFO,
    )
    # The log levels should remain as set by the first instance
    assert Logger.get_file_log_level() == LogLevel.ERROR
    assert Logger.get_print_log_level() == LogLevel.DEBUG


def test_logger_logging(logs_path):
    """
    Test the logging functionality of Logger
    """
    logger = Logger(
        logs_path=logs_path,
        file_log_level=LogLevel.DEBUG,
        print_log_level=LogLevel.DEBUG,
    )

    # Test logging at different levels
    logger.log_debug("This is a debug message.")
    logger.log_info("This is an info message.")
    logger.log_warning("This is a warning message.")
    logger.log_error("This is an error message.")
    logger.log_success("This is a success message.")

    # Check if log file is created and contains the messages
    assert os.path.exists(logger.log_file)

    with open(logger.log_file, "r", encoding="utf-8") as f:
        log_contents = f.read()
        assert "This is a debug message." in log_contents
        assert "This is an info message." in log_contents
        assert "This is a warning message." in log_contents
        assert "This is an error message." in log_contents
        assert "This is a success message." in log_contents


def test_logger_components_share_one_file(logs_path):
    """
    Component loggers write tagged lines to the file of the first instance
    """
    first = Logger("Train", logs_path=logs_path, print_log_level=LogLevel.NONE)
    second = Logger("Dataset", logs_path="elsewhere")
    assert second.log_file == first.log_file

    first.log_info("epoch 1")
    second.log_warning("constant feature")

    with open(first.log_file, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert "@    Train] => epoch 1" in lines[0]
    assert "[WARNING @  Dataset] => constant feature" in lines[1]


def test_logger_file_level_filters(logs_path):
    """
    Messages below the file level are not written
    """
    logger = Logger(logs_path=logs_path, file_log_level=LogLevel.WARNING, print_log_level=LogLevel.NONE)
    logger.log_info("hidden")
    logger.log_error("shown")
    with open(logger.log_file, "r", encoding="utf-8") as f:
        contents = f.read()
    assert "hidden" not in contents and "shown" in contents


def test_logger_prunes_old_logs(logs_path):
    """
    Log files older than the retention period are removed on start-up
    """
    os.makedirs(logs_path)
    old = os.path.join(logs_path, "ids_old.log")
    recent = os.path.join(logs_path, "ids_recent.log")
    for path in (old, recent):
        with open(path, "w", encoding="utf-8") as f:
            f.write("x\n")
    stale = time.time() - 8 * 24 * 3600
    os.utime(old, (stale, stale))

    Logger(logs_path=logs_path)
    assert not os.path.exists(old)
    assert os.path.exists(recent)


def test_logger_progress_hidden_by_default(logs_path):
    """
    Progress bars are disabled unless the console shows INFO
    """
    quiet = Logger(logs_path=logs_path).progress(range(3), total=3, desc="epoch 1")
    assert isinstance(quiet, tqdm) and quiet.disable
    assert list(quiet) == [0, 1, 2]

    Logger.reset_logger()
    loud = Logger(logs_path=logs_path, print_log_level=LogLevel.INFO).progress(
        range(3), total=3, desc="epoch 1"
    )
    assert not loud.disable
    loud.close()
