import pytest
from hypothesis import settings

from kernelratio import DEFAULT_PAIR, KernelSpec

# Derandomized so reruns of the suite are bit-for-bit repeatable.
settings.register_profile("repeatable", derandomize=True, deadline=None)
settings.load_profile("repeatable")


@pytest.fixture(scope="session")
def pair():
    return DEFAULT_PAIR


@pytest.fixture(scope="session")
def kspec():
    return KernelSpec()
