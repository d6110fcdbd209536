import numpy as np
import pytest

import osteoforge as of

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Register one acceptance line for the terminal summary, then assert."""
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"criterion {number} {status}: {detail}")
    assert passed, f"criterion {number} failed: {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_disk_case(seed: int, n: int = 64, noise: float = 3.0, margin: int = 2):
    """One bimodal test slice: a bright disk on a dark background.

    Returns (image u8, analytic disk mask, SeedGeometry with the bbox grown
    by `margin` pixels around the diameter-derived bounds).
    """
    rng = np.random.default_rng(seed)
    r = rng.uniform(8, 13)
    cx = rng.uniform(n / 2 - 6, n / 2 + 6)
    cy = rng.uniform(n / 2 - 6, n / 2 + 6)
    lo = int(rng.integers(20, 60))
    hi = lo + int(rng.integers(150, 190))
    xs, ys = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    disk = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    img = np.full((n, n), float(lo))
    img[disk] = hi
    img += rng.normal(0.0, noise, size=(n, n))
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    m = of.RecistMeasurement(
        f"D{seed}", "synthetic", 0,
        ((cx - r, cy), (cx + r, cy)),
        ((cx, cy - r), (cx, cy + r)),
    )
    g = of.seed_geometry(m, (n, n))
    x0, y0, x1, y1 = g.bbox
    grown = of.SeedGeometry(
        bbox=(max(x0 - margin, 0), max(y0 - margin, 0),
              min(x1 + margin, n - 1), min(y1 + margin, n - 1)),
        quad=g.quad,
        slice_index=0,
    )
    return img, disk, grown


@pytest.fixture
def disk_case():
    return make_disk_case
