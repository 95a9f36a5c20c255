import os
import sys

import pytest

os.environ.setdefault("MIW_THREADS", "1")

if __name__ == "__main__":
    command, *rest = sys.argv
    sys.exit(pytest.main(["tests", *rest]))
