"""Tractable analysis of the initialization bias in a scalar setting.

This module studies a chain of length t where the deflection coefficient
is a constant scalar applied at every step, so everything unrolls in
closed form.  Three scenarios are covered:

``valid``        generated with coefficient m, inverted with the same m;
                 the bias is driven purely by the two noise streams.
``wrong``        generated with m, inverted with a different coefficient n
                 and compared against the wrong key's start.
``plain_claim``  plain (undeflected) content inverted with coefficient q
                 under some claimed key.

With c_i(u) = sqrt(1 - abar_i) - sqrt(a_i - abar_i) / u and forward /
inverse noise streams e_i, v_i, unrolling the step recurrences gives

    delta_t(valid) = sum_i sqrt(abar_t / abar_i) m^{i-t} c_i(m) (v_i - e_i)

    delta_t(wrong) = (m/n)^t x_start - x_ref
                     + sum_i sqrt(abar_t / abar_i) n^{i-t}
                           [c_i(n) v_i - (m/n)^i c_i(m) e_i]

    delta_t(plain_claim) = q^{-t} x_start - x_ref
                     + sum_i sqrt(abar_t / abar_i) q^{i-t}
                           [c_i(q) v_i - q^{-i} c_i(1) e_i]

Treating the streams as i.i.d. standard normal and the start / reference
latents as independent standard normals yields the expected squared-bias
formulas implemented below.  At n = m the wrong-key formula collapses to
exactly 2 plus the valid one: the constant 2 is the energy of the two
unrelated start latents.

Everything here is independent of the production pipeline, which deflects
only a few steps with an elementwise coefficient; the step-by-step
simulators in this module exist so the closed forms can be checked
against an implementation that knows nothing about the unrolled algebra.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .sampling import ddim_step, deflected_step
from .inversion import inverse_ddim_step, inverse_deflected_step
from .schedule import DiffusionSchedule, make_linear_schedule


def _check_chain(schedule: DiffusionSchedule, t: int) -> np.ndarray:
    if not 1 <= t <= schedule.num_steps:
        raise ParameterError(f"chain length {t} outside 1..{schedule.num_steps}")
    return np.arange(1, t + 1)


def _c(schedule: DiffusionSchedule, i: np.ndarray, u: float) -> np.ndarray:
    """c_i(u) = sqrt(1 - abar_i) - sqrt(a_i - abar_i) / u."""
    abar = schedule.alpha_bar[i]
    return np.sqrt(1.0 - abar) - np.sqrt(schedule.alpha[i] - abar) / u


def _weights(schedule: DiffusionSchedule, t: int, i: np.ndarray, u: float) -> np.ndarray:
    """sqrt(abar_t / abar_i) * u^{i-t}, the survival factor of step i at t."""
    return np.sqrt(schedule.alpha_bar[t] / schedule.alpha_bar[i]) * u ** (i - t)


# --------------------------------------------------------------------------
# closed-form biases for explicit noise streams (trailing axis = step)

def closed_form_bias_valid(schedule: DiffusionSchedule, t: int, m: float,
                           eps_fwd: np.ndarray, eps_inv: np.ndarray) -> np.ndarray:
    i = _check_chain(schedule, t)
    w = _weights(schedule, t, i, m) * _c(schedule, i, m)
    return np.sum(w * (np.asarray(eps_inv) - np.asarray(eps_fwd)), axis=-1)


def closed_form_bias_wrong(schedule: DiffusionSchedule, t: int, m: float, n: float,
                           x_start, x_ref,
                           eps_fwd: np.ndarray, eps_inv: np.ndarray) -> np.ndarray:
    i = _check_chain(schedule, t)
    w = _weights(schedule, t, i, n)
    stream = _c(schedule, i, n) * np.asarray(eps_inv) \
        - (m / n) ** i * _c(schedule, i, m) * np.asarray(eps_fwd)
    return (m / n) ** t * np.asarray(x_start) - np.asarray(x_ref) + np.sum(w * stream, axis=-1)


def closed_form_bias_plain_claim(schedule: DiffusionSchedule, t: int, q: float,
                                 x_start, x_ref,
                                 eps_fwd: np.ndarray, eps_inv: np.ndarray) -> np.ndarray:
    i = _check_chain(schedule, t)
    w = _weights(schedule, t, i, q)
    stream = _c(schedule, i, q) * np.asarray(eps_inv) \
        - q ** (-i) * _c(schedule, i, 1.0) * np.asarray(eps_fwd)
    return q ** (-t) * np.asarray(x_start) - np.asarray(x_ref) + np.sum(w * stream, axis=-1)


# --------------------------------------------------------------------------
# step-by-step simulators sharing the same noise streams

def simulate_bias_valid(schedule: DiffusionSchedule, t: int, m: float,
                        eps_fwd: np.ndarray, eps_inv: np.ndarray,
                        x_start=0.0) -> np.ndarray:
    _check_chain(schedule, t)
    x = np.asarray(x_start, dtype=np.float64)
    for i in range(t, 0, -1):
        x = deflected_step(x, eps_fwd[..., i - 1], schedule, i, m)
    for i in range(1, t + 1):
        x = inverse_deflected_step(x, eps_inv[..., i - 1], schedule, i, m)
    return x - np.asarray(x_start)


def simulate_bias_wrong(schedule: DiffusionSchedule, t: int, m: float, n: float,
                        x_start, x_ref,
                        eps_fwd: np.ndarray, eps_inv: np.ndarray) -> np.ndarray:
    _check_chain(schedule, t)
    x = np.asarray(x_start, dtype=np.float64)
    for i in range(t, 0, -1):
        x = deflected_step(x, eps_fwd[..., i - 1], schedule, i, m)
    for i in range(1, t + 1):
        x = inverse_deflected_step(x, eps_inv[..., i - 1], schedule, i, n)
    return x - np.asarray(x_ref)


def simulate_bias_plain_claim(schedule: DiffusionSchedule, t: int, q: float,
                              x_start, x_ref,
                              eps_fwd: np.ndarray, eps_inv: np.ndarray) -> np.ndarray:
    _check_chain(schedule, t)
    x = np.asarray(x_start, dtype=np.float64)
    for i in range(t, 0, -1):
        x = ddim_step(x, eps_fwd[..., i - 1], schedule, i)
    for i in range(1, t + 1):
        x = inverse_deflected_step(x, eps_inv[..., i - 1], schedule, i, q)
    return x - np.asarray(x_ref)


# --------------------------------------------------------------------------
# expected squared biases under the independence assumptions

def second_moment_valid(schedule: DiffusionSchedule, t: int, m: float) -> float:
    i = _check_chain(schedule, t)
    w = _weights(schedule, t, i, m)
    return float(np.sum(2.0 * w * w * _c(schedule, i, m) ** 2))


def second_moment_wrong(schedule: DiffusionSchedule, t: int, m: float, n: float) -> float:
    i = _check_chain(schedule, t)
    w = _weights(schedule, t, i, n)
    per_step = _c(schedule, i, n) ** 2 + (m / n) ** (2 * i) * _c(schedule, i, m) ** 2
    return float((m / n) ** (2 * t) + 1.0 + np.sum(w * w * per_step))


def second_moment_plain_claim(schedule: DiffusionSchedule, t: int, q: float) -> float:
    i = _check_chain(schedule, t)
    w = _weights(schedule, t, i, q)
    per_step = _c(schedule, i, q) ** 2 + q ** (-2.0 * i) * _c(schedule, i, 1.0) ** 2
    return float(q ** (-2.0 * t) + 1.0 + np.sum(w * w * per_step))


# --------------------------------------------------------------------------
# Monte-Carlo estimates via the simulators

def mc_second_moment(schedule: DiffusionSchedule, t: int, scenario: str,
                     n_trials: int, rng: np.random.Generator,
                     m: float = 1.1, n: float = 0.9, q: float = 0.9,
                     shared_salt: bool = False) -> float:
    """Empirical E[delta_t^2] over fresh trials of the chosen scenario.

    ``shared_salt`` draws the start and reference latents with a common
    Box-Muller amplitude, mimicking a salt reused between the true and
    the mismatched key instead of two independent latents.
    """
    if n_trials < 1:
        raise ParameterError("n_trials must be positive")
    eps_fwd = rng.standard_normal((n_trials, t))
    eps_inv = rng.standard_normal((n_trials, t))
    if shared_salt:
        amp = np.sqrt(-2.0 * np.log(np.clip(rng.uniform(size=n_trials), 1e-12, None)))
        x_start = amp * np.cos(2.0 * np.pi * rng.uniform(size=n_trials))
        x_ref = amp * np.cos(2.0 * np.pi * rng.uniform(size=n_trials))
    else:
        x_start = rng.standard_normal(n_trials)
        x_ref = rng.standard_normal(n_trials)
    if scenario == "valid":
        delta = simulate_bias_valid(schedule, t, m, eps_fwd, eps_inv, x_start)
    elif scenario == "wrong":
        delta = simulate_bias_wrong(schedule, t, m, n, x_start, x_ref, eps_fwd, eps_inv)
    elif scenario == "plain_claim":
        delta = simulate_bias_plain_claim(schedule, t, q, x_start, x_ref, eps_fwd, eps_inv)
    else:
        raise ParameterError(f"unknown scenario {scenario!r}")
    return float(np.mean(delta * delta))


def theory_report(schedule: DiffusionSchedule | None = None,
                  m: float = 1.1, q: float = 0.9,
                  n_grid: np.ndarray | None = None,
                  t_values: tuple[int, ...] = (1, 5, 25, 50),
                  n_trials: int = 4000, seed: int = 0) -> dict:
    """Closed forms, Monte-Carlo cross-checks, and ordering facts as JSON-able data."""
    if schedule is None:
        schedule = make_linear_schedule()
    if n_grid is None:
        n_grid = np.linspace(0.75, 1.5, 11)
    n_grid = np.asarray(n_grid, dtype=np.float64)
    rng = np.random.default_rng(seed)
    t_values = tuple(int(t) for t in t_values)

    per_t = {}
    for t in t_values:
        smc = second_moment_valid(schedule, t, m)
        smw = second_moment_wrong(schedule, t, m, float(n_grid[len(n_grid) // 2]))
        smq = second_moment_plain_claim(schedule, t, q)
        mc_c = mc_second_moment(schedule, t, "valid", n_trials, rng, m=m)
        mc_w = mc_second_moment(schedule, t, "wrong", n_trials, rng, m=m,
                                n=float(n_grid[len(n_grid) // 2]))
        mc_q = mc_second_moment(schedule, t, "plain_claim", n_trials, rng, q=q)
        per_t[t] = {
            "closed_form": {"valid": smc, "wrong": smw, "plain_claim": smq},
            "monte_carlo": {"valid": mc_c, "wrong": mc_w, "plain_claim": mc_q},
            "gap_at_equal_coef": second_moment_wrong(schedule, t, m, m) - smc,
        }

    t_max = max(t_values)
    grid_rows = []
    for n in n_grid:
        smw = second_moment_wrong(schedule, t_max, m, float(n))
        grid_rows.append({"n": float(n), "wrong": smw,
                          "exceeds_valid": smw > second_moment_valid(schedule, t_max, m)})

    curve = [second_moment_valid(schedule, t, m) for t in range(1, schedule.num_steps + 1)]
    monotone = bool(np.all(np.diff(curve) >= -1e-15))

    shared = mc_second_moment(schedule, t_max, "wrong", n_trials, rng, m=m, n=m,
                              shared_salt=True)
    independent = mc_second_moment(schedule, t_max, "wrong", n_trials, rng, m=m, n=m,
                                   shared_salt=False)
    formula = second_moment_wrong(schedule, t_max, m, m)

    return {
        "m": m,
        "q": q,
        "t_values": list(t_values),
        "per_t": per_t,
        "wrong_key_grid": grid_rows,
        "plain_claim_exceeds_valid": bool(
            second_moment_plain_claim(schedule, t_max, q)
            > second_moment_valid(schedule, t_max, m)),
        "valid_moment_monotone_in_t": monotone,
        "shared_salt_check": {
            "mc_shared_amplitude": shared,
            "mc_independent": independent,
            "formula_independent": formula,
            "rel_gap_shared_vs_formula": abs(shared - formula) / formula,
        },
    }
