import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lpsace.data import TRUNCATED, Dataset, FirmRecord  # noqa: E402


def random_dataset(rng, N=50, K=3, T=3, binary=False) -> Dataset:
    recs = []
    for i in range(N):
        w = int(rng.integers(2))
        h = int(rng.integers(T + 1))
        s = (1,) * h + (0,) * (T - h)
        y = tuple(int(rng.integers(2)) if v else TRUNCATED for v in s)
        x = rng.integers(2, size=K).astype(float) if binary else rng.normal(size=K)
        recs.append(FirmRecord(f"u{i}", tuple(x), w, s, y))
    return Dataset.from_records(recs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
