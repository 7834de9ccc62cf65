import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--full",
        action="store_true",
        default=False,
        help="run full-scale benchmark reproductions (long; needs the real datasets)",
    )


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "full: full-scale reproduction runs, enabled with --full"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--full"):
        return
    skip_full = pytest.mark.skip(reason="pass --full to run full-scale reproductions")
    for item in items:
        if "full" in item.keywords:
            item.add_marker(skip_full)
