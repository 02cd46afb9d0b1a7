import os
import warnings

import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture(scope="session", autouse=True)
def reference_cache(tmp_path_factory):
    """Share reference solutions between tests through one cache directory."""
    if not os.environ.get("FGASH_CACHE_DIR"):
        os.environ["FGASH_CACHE_DIR"] = str(tmp_path_factory.mktemp("reference_cache"))
    yield os.environ["FGASH_CACHE_DIR"]
