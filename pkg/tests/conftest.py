import numpy as np
import pytest

from tclevy import kernels
from tclevy.models import builtin_cubic, builtin_linear, time_modulated, weierstrass_envelope
from tclevy.noise import NoisePanel, no_jumps, two_point_jumps, uniform_jumps
from tclevy.subordinator import StableSpec, SubordinatorPath

BACKENDS = ["generic", "python"] + (["compiled"] if "compiled" in kernels.available() else [])


def reference_linear(lam=1.0, a=-1.0, sigma=0.5, gamma=0.2, x0=1.0):
    """Linear test model: uniform marks on (-0.5, 0.5) with rate ``lam``."""
    return builtin_linear(a, sigma, gamma, uniform_jumps(lam, 0.5), x0)


def deterministic_path(n_steps, delta=0.1, spacing=0.09, horizon=None):
    """Subordinator path with equally spaced values and exactly ``n_steps`` steps."""
    values = spacing * np.arange(n_steps + 2)
    if horizon is None:
        horizon = spacing * (n_steps + 0.5)
    return SubordinatorPath.from_values(StableSpec(0.8, delta, horizon), values)


def quiet_panel(n_steps, delta=0.1):
    return NoisePanel(delta, np.zeros(n_steps), np.zeros(n_steps, dtype=np.int64), np.zeros(0))


def random_model(rng):
    jumps = uniform_jumps(rng.uniform(0, 3), 0.5) if rng.random() < 0.5 else two_point_jumps(rng.uniform(0, 3), 0.5, 0.3)
    kind = rng.integers(3)
    if kind == 0:
        return builtin_linear(rng.uniform(-2, 0.5), rng.uniform(-1, 1), rng.uniform(-1, 1), jumps, rng.uniform(-2, 2))
    if kind == 1:
        return builtin_cubic(rng.uniform(0, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), jumps, rng.uniform(-2, 2))
    base = builtin_linear(rng.uniform(-2, 0), rng.uniform(-1, 1), rng.uniform(-1, 1), jumps, rng.uniform(-2, 2))
    return time_modulated(base, (weierstrass_envelope(rng.uniform(0.2, 0.9)), weierstrass_envelope(0.5), None))


def explicit_euler(model, sub, noise):
    """Independent explicit recursion X + F delta + G dB + sum H."""
    tau = sub.values
    x = model.x0
    out = [x]
    off = noise.offsets
    for k in range(noise.n_steps):
        t = float(tau[k])
        jsum = 0.0
        for z in noise.marks[off[k]:off[k + 1]]:
            jsum += model.H(t, x, float(z))
        x = x + model.F(t, x) * noise.delta + model.G(t, x) * float(noise.gauss[k]) + jsum
        out.append(x)
    return np.array(out)


@pytest.fixture
def linear():
    return reference_linear()


@pytest.fixture
def cubic():
    return builtin_cubic(1.0, 0.5, 0.2, uniform_jumps(1.0, 0.5), 1.0)


@pytest.fixture
def frozen():
    return builtin_linear(0.0, 0.0, 0.0, no_jumps(), 1.0)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
