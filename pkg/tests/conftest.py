import pytest

from bregmanopt import _kernels


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    """Pay any JIT compilation cost once, before timed tests run."""
    _kernels.warm_up()
