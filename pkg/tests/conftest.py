import itertools

import numpy as np
import pytest

from cbswap.state import build_model


def brute_force_law(probs, target):
    """Independent oracle: {support tuple: probability} by direct product of odds."""
    w = [p / (1 - p) for p in probs]
    weights = {}
    for s in itertools.combinations(range(len(probs)), target):
        prod = 1.0
        for k in s:
            prod *= w[k]
        weights[s] = prod
    z = sum(weights.values())
    return {s: v / z for s, v in weights.items()}


def bits_to_support(bits):
    return tuple(int(k) for k in np.flatnonzero(bits))


def empirical_tv(codes_a, codes_b):
    keys = np.union1d(codes_a, codes_b)
    a = np.searchsorted(keys, codes_a)
    b = np.searchsorted(keys, codes_b)
    fa = np.bincount(a, minlength=len(keys)) / len(codes_a)
    fb = np.bincount(b, minlength=len(keys)) / len(codes_b)
    return 0.5 * float(np.abs(fa - fb).sum())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_model():
    return build_model([0.1, 0.2, 0.3, 0.4], 2)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
