import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def naive_conv2d(x, w, b=None, stride=1, padding=0):
    """Direct loop cross-correlation with zero padding (test oracle)."""
    bsz, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((bsz, cout, ho, wo))
    for n in range(bsz):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[n, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[n, o, i, j] = np.sum(patch * w[o]) + (0.0 if b is None else b[o])
    return out


TINY = dict(
    epochs=2, decay_start_epoch=1, patch_size=32, base_channels=4, ndf=4,
    reverse_base_channels=4, num_blocks=2, dtype="float64", prefetch=2,
)


@pytest.fixture
def tiny_cfg():
    from s2o_tdn.train import TrainConfig

    return TrainConfig(**TINY)


@pytest.fixture(scope="session")
def tiny_pairs():
    from s2o_tdn.data import SpeckleParams, synth_pairs

    return synth_pairs(4, 32, SpeckleParams(seed=3))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def verdict(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, f"{name}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
