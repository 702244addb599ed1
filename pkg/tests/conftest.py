from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from partialexec.clock import VirtualClock
from partialexec.tools import builtin_registry

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def registry():
    return builtin_registry()


@pytest.fixture
def vclock():
    return VirtualClock()
