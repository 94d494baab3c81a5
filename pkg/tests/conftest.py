import numpy as np
import pytest

from mtstrack.sequences import SynthSpec, generate_synth


def moving_spec(seed: int, length: int = 40, speed: float = 0.5, **kw) -> SynthSpec:
    rng = np.random.default_rng(1000 + seed)
    ang = rng.uniform(0, 2 * np.pi)
    x0, y0 = 60.0, 44.0
    end = (x0 + speed * np.cos(ang) * (length - 1), y0 + speed * np.sin(ang) * (length - 1))
    base = dict(
        name=f"moving{seed}",
        length=length,
        image_size=(120, 152),
        waypoints=[(1, x0, y0), (length, *end)],
        noise_sigma=0.01,
        texture_seed=seed,
        seed=seed,
        background_blur=0.7,
    )
    base.update(kw)
    return SynthSpec(**base)


def static_spec(length: int = 30, **kw) -> SynthSpec:
    base = dict(
        name="static",
        length=length,
        image_size=(100, 120),
        waypoints=[(1, 44.0, 34.0)],
        texture_seed=7,
        seed=7,
    )
    base.update(kw)
    return SynthSpec(**base)


@pytest.fixture(scope="session")
def static_seq():
    return generate_synth(static_spec())


@pytest.fixture(scope="session")
def moving_seq():
    return generate_synth(moving_spec(0))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
