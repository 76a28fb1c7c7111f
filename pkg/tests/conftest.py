from __future__ import annotations

import pytest

from util import make_diamond_workspace


@pytest.fixture
def diamond_ws(tmp_path):
    ws = tmp_path / "ws"
    return make_diamond_workspace(ws)
