import os
import pathlib
import subprocess

import pytest

DATA = pathlib.Path(os.environ.get("EVB_TEST_DATA", pathlib.Path(__file__).parents[1] / "data"))


@pytest.fixture
def data():
    return DATA


@pytest.fixture
def cli():
    exe = os.environ.get("EVB_CLI")
    if not exe:
        pytest.skip("EVB_CLI not set")

    def run(*args, env=None):
        full_env = {k: v for k, v in os.environ.items() if not k.startswith("EVB_")}
        full_env.update(env or {})
        return subprocess.run([exe, *map(str, args)], capture_output=True, text=True, env=full_env)

    return run
