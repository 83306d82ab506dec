from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from memfabric import PrincipalDirectory


@pytest.fixture
def directory() -> PrincipalDirectory:
    d = PrincipalDirectory()
    for name in ("u1", "u2", "u3"):
        d.add_user(name)
    for name in ("a1", "a2", "a3"):
        d.add_agent(name)
    for name in ("r1", "r2", "r3"):
        d.add_resource(name)
    return d
