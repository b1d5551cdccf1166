import numpy as np
import pytest

import sparsehawkes as sh


@pytest.fixture(scope="session")
def bench3d() -> sh.ModelParams:
    """Three-component benchmark truth: four silent cross edges."""
    return sh.ModelParams(
        mu=[0.2, 0.1, 0.1],
        kernel=sh.ScalarExpKernel(
            alpha=[[0.0, 0.2, 0.0], [0.2, 0.1, 0.4], [0.0, 0.0, 0.2]],
            beta=[[1.0, 0.9, 1.0], [0.5, 1.2, 0.6], [1.0, 1.0, 0.7]],
        ),
        beta_nuisance=[
            [True, False, True],
            [False, False, False],
            [True, True, False],
        ],
    )


@pytest.fixture(scope="session")
def topic1d() -> sh.ModelParams:
    """One-component topic-marked truth: the middle topic is silent."""
    return sh.ModelParams(
        mu=[1.5],
        kernel=sh.ScalarExpKernel(beta=[[0.5]]),
        mark_weights=[[[0.4, 0.0, 0.4]]],
    )


@pytest.fixture(scope="session")
def topic_kernel() -> sh.DirichletMarks:
    return sh.DirichletMarks([2.0, 2.0, 5.0])


@pytest.fixture(scope="session")
def blocks4d() -> sh.ModelParams:
    """Four-component block truth with unit decays everywhere."""
    alpha = np.array(
        [
            [0.15, 0.0, 0.0, 0.0],
            [0.15, 0.0, 0.0, 0.0],
            [0.0, 0.1, 0.1, 0.1],
            [0.0, 0.1, 0.1, 0.1],
        ]
    )
    return sh.ModelParams(
        mu=[0.05] * 4, kernel=sh.ScalarExpKernel(alpha=alpha, beta=np.ones((4, 4)))
    )


@pytest.fixture(scope="session")
def log3d(bench3d) -> sh.EventLog:
    return sh.simulate(bench3d, sh.NoMarks(), 200.0, np.random.default_rng(11))


@pytest.fixture(scope="session")
def log_topic(topic1d, topic_kernel) -> sh.EventLog:
    return sh.simulate(topic1d, topic_kernel, 60.0, np.random.default_rng(12))


def brute_force_intensity(
    t: float, log: sh.EventLog, params: sh.ModelParams
) -> np.ndarray:
    """Direct kernel-sum oracle over all past events (no recursion)."""
    d = params.dim
    out = np.array(params.mu, float)
    for k in range(log.n_events):
        if log.times[k] >= t:
            break
        j = int(log.components[k])
        if params.mark_dim:
            w = params.mark_weights @ log.marks[k]
        else:
            w = params.kernel.alpha
        for i in range(d):
            out[i] += w[i, j] * np.exp(-params.kernel.beta[i, j] * (t - log.times[k]))
    return out


def state_at(t: float, log: sh.EventLog, params: sh.ModelParams) -> sh.ExcitationState:
    """Run the excitation recursion over all events strictly before t."""
    state = sh.empty_state(params)
    for k in range(log.n_events):
        if log.times[k] >= t:
            break
        state = sh.decay_state(state, log.times[k] - state.t, params)
        mark = log.marks[k] if log.marks is not None else None
        state = sh.apply_jump(state, int(log.components[k]), mark, params)
    return sh.decay_state(state, t - state.t, params)
