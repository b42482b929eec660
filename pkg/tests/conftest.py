import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from cptr.blockmat import FieldLayout, assemble  # noqa: E402

#: one "[PASS]/[FAIL] criterion N: ..." line per acceptance criterion
ACCEPTANCE_LINES: list = []

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_block_system(n_cells=5, n_s=2, seed=0, thermal=True, coupling=0.3, decoupled=False, chain=True):
    """Random diagonally dominant block system on a 1D chain of cells.

    Returns ``(A, b)`` with per-cell order ``(s..., P, T)``.
    """
    rng = np.random.default_rng(seed)
    lay = FieldLayout.uniform(n_cells, n_s, thermal)
    nb = n_s + 1 + int(thermal)
    entries = []
    for c in range(n_cells):
        blk = rng.uniform(-1.0, 1.0, (nb, nb))
        np.fill_diagonal(blk, 0.0)
        np.fill_diagonal(blk, np.abs(blk).sum(axis=1) + 2.0 * nb * coupling + rng.uniform(1.0, 2.0, nb))
        entries.append((c, c, blk))
        if not decoupled and chain and c + 1 < n_cells:
            entries.append((c, c + 1, -coupling * rng.uniform(0.5, 1.0, (nb, nb))))
            entries.append((c + 1, c, -coupling * rng.uniform(0.5, 1.0, (nb, nb))))
    A = assemble(entries, lay)
    b = rng.uniform(-1.0, 1.0, lay.n_unknowns)
    return A, b


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
