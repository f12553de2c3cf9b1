import numpy as np
import pytest

from sparsebip.model import ChannelSpec, Interaction, SensorLayout
from sparsebip.synth import ScenarioConfig, generate_dataset


def small_layout(n_obs=2, n_ctrl=1):
    chans = [ChannelSpec(f"o{k}", "joint", "observed") for k in range(n_obs)]
    chans += [ChannelSpec(f"c{k}", "joint", "controlled") for k in range(n_ctrl)]
    return SensorLayout(chans)


def make_interaction(samples, layout=None, timestep=1.0 / 30.0):
    samples = np.asarray(samples, dtype=float)
    if layout is None:
        layout = small_layout(samples.shape[1] - 1, 1)
    return Interaction(layout, samples, timestep)


@pytest.fixture(scope="session")
def small_dataset():
    """24 demos on the default layout; enough for pipeline and CLI smoke checks."""
    return generate_dataset(ScenarioConfig(n_demos=24, seed=7))


@pytest.fixture(scope="session")
def default_dataset():
    return generate_dataset(ScenarioConfig())


def selection_problem(seed, n_demos=40, informative=(2, 5), n_candidates=8, n_targets=3,
                      dependent=True, B=4):
    """Latent models where target magnitudes are affine in two candidate magnitudes.

    Returns ``(demos, layout, candidate names, target names)``.  With
    ``dependent=False`` every target is independent of every candidate.
    """
    from sparsebip.basis import uniform_basis
    from sparsebip.model import LatentModel

    rng = np.random.default_rng(seed)
    cands = [ChannelSpec(f"in{k}", "force", "observed") for k in range(n_candidates)]
    targs = [ChannelSpec(f"out{k}", "force", "controlled") for k in range(n_targets)]
    layout = SensorLayout(cands + targs)
    basis = uniform_basis(len(layout), B)
    shapes = rng.uniform(0.2, 1.0, (len(layout), B))
    amp = rng.uniform(0.5, 1.5, (n_demos, n_candidates))
    coef = rng.uniform([0.1, 0.2, 0.2], [0.4, 0.9, 0.9], (n_targets, 3))
    if dependent:
        u1, u2 = amp[:, informative[0]], amp[:, informative[1]]
        t_amp = np.column_stack([c0 + a * u1 + b * u2 for c0, a, b in coef])
    else:
        t_amp = rng.uniform(0.5, 1.5, (n_demos, n_targets))
    amps = np.hstack([amp, t_amp])
    demos = [LatentModel((amps[j][:, None] * shapes).ravel(), basis) for j in range(n_demos)]
    return demos, layout, [c.name for c in cands], [c.name for c in targs]


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
