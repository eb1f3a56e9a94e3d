import os
import sys

import pytest

# modules import each other as siblings, the way main.py runs
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'propsurro'))

RUN_SLOW = os.environ.get("PROPSURRO_SLOW_TESTS", "0") == "1"


def pytest_configure(config):
	config.addinivalue_line("markers", "slow: acceptance-scale experiment, set PROPSURRO_SLOW_TESTS=1 to run")


def pytest_collection_modifyitems(config, items):
	if RUN_SLOW:
		return
	skip = pytest.mark.skip(reason="set PROPSURRO_SLOW_TESTS=1 to run")
	for item in items:
		if "slow" in item.keywords:
			item.add_marker(skip)
