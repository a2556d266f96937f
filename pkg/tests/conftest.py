import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "src"))

FIXTURES = os.path.join(os.path.dirname(__file__), os.pardir,
                        "src", "nswalloc", "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)
