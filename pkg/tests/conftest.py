"""Shared fixtures: analytic curves and a reusable speckle acquisition."""

import numpy as np
import pytest

from specklescope import (
    DetectorArray,
    EvidenceTable,
    SourceGeometry,
    SpeckleRun,
    distinct_frequencies,
    g_m_analytic,
    sample_frames,
    surviving_frequencies,
    uniform_grid,
)


def magic_curve(x, m, samples=None):
    """Noiseless order-m curve with fixed detectors at the magic offsets."""
    geometry = SourceGeometry(tuple(x))
    if samples is None:
        samples = max(8 * (geometry.span + 1), 64)
    return g_m_analytic(geometry, DetectorArray.magic_scan(m, samples))


def evidence_for(x, orders):
    """Noiseless evidence a perfect pipeline would produce for gaps x."""
    geometry = SourceGeometry(tuple(x))
    present = sorted(
        {f for m in orders for f in surviving_frequencies(geometry, m)}
    )
    hint = max(present, default=0)
    distances = set(distinct_frequencies(geometry))
    absent = [
        f
        for f in range(1, hint + 1)
        if f not in distances and any(f % (m - 1) == 0 for m in orders)
    ]
    return EvidenceTable.from_sets(present, absent=absent, orders_measured=orders)


@pytest.fixture(scope="session")
def two_gap_stack():
    """3000 frames of x=(1,3) on a 120-pixel grid, shared across tests."""
    run = SpeckleRun(
        geometry=SourceGeometry((1, 3)),
        frames=3000,
        seed=7,
        delta_axis=uniform_grid(120),
    )
    return sample_frames(run)
