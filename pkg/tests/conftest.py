import logging

import pytest

logging.getLogger("qdtomo").setLevel(logging.ERROR)


@pytest.fixture(autouse=True)
def _quiet_solver(caplog):
    caplog.set_level(logging.ERROR, logger="qdtomo")
