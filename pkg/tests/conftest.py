import warnings

import pytest

from beamcsi.evaluation import compile_scenario, default_scenario, reference_scenario


@pytest.fixture(scope="session")
def paper_stats():
    """Compiled statistics of the headline 100-element scenario."""
    return compile_scenario(default_scenario())


@pytest.fixture(scope="session")
def ref_stats():
    """Compiled statistics of the small rank-one reference instance."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return compile_scenario(reference_scenario())
