"""
Linear least-squares oracle for the validation floor.

Data y_i = a + b x_i + e_i with e_i ~ N(0, p / S) mimic population estimates
from S shots. The in-sample validation error of the closed-form fit splits
exactly into the mean-residual term e_bar^2 and a slope term. V_opt is the
mean-residual term, whose expectation is p / (P S); the slope term has the same
expectation, so the full error averages 2 p / (P S).
"""
import logging
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np
from numpy.typing import NDArray

from common.constants import LOGGER_NAME, ErrorMessage

logger = logging.getLogger(f"{LOGGER_NAME}.lsq")

TRUE_INTERCEPT = 0.3
TRUE_SLOPE = 0.7


@dataclass(frozen=True)
class LsqResult:
    P: int
    S: int
    p: float
    trials: int
    mean_v_opt: float
    mean_v_slope: float
    mean_v_full: float
    predicted: float

    def to_row(self) -> dict:
        return asdict(self)


def least_squares_line(x: NDArray, y: NDArray) -> Tuple[NDArray, NDArray]:
    """
    Closed-form intercept and slope along the last axis.

    b = cov(x, y) / var(x) and a = mean(y) - b mean(x), batched over leading axes.
    """
    x_bar = x.mean(axis=-1, keepdims=True)
    y_bar = y.mean(axis=-1, keepdims=True)
    sxx = np.mean((x - x_bar) ** 2, axis=-1)
    sxy = np.mean((x - x_bar) * (y - y_bar), axis=-1)
    slope = sxy / sxx
    intercept = y_bar[..., 0] - slope * x_bar[..., 0]
    return intercept, slope


def lsq_trials(P: int, S: int, p: float, trials: int, seed: int) -> Tuple[NDArray, NDArray]:
    """
    Per-trial V_opt (the mean-residual term e_bar^2) and the full in-sample error.

    Returns:
        (v_opt, v_full), each of length `trials`
    """
    if P < 3:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="P", bounds="[3, inf)", value=P))
    if S < 1 or trials < 1:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="S and trials", bounds="[1, inf)", value=(S, trials)))
    if not 0.0 <= p <= 1.0:
        raise ValueError(ErrorMessage.VALUE_RANGE.format(name="p", bounds="[0, 1]", value=p))

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(P, S))))
    x = rng.standard_normal((trials, P))
    noise = np.sqrt(p / S) * rng.standard_normal((trials, P))
    y_true = TRUE_INTERCEPT + TRUE_SLOPE * x
    intercept, slope = least_squares_line(x, y_true + noise)

    fitted = intercept[:, None] + slope[:, None] * x
    v_full = np.mean((y_true - fitted) ** 2, axis=1)
    v_opt = noise.mean(axis=1) ** 2
    return v_opt, v_full


def lsq_experiment(P: int, S: int, p: float, trials: int, seed: int) -> LsqResult:
    """Monte-Carlo means of V_opt and of the full error over `trials` independent datasets."""
    v_opt, v_full = lsq_trials(P, S, p, trials, seed)
    mean_v_opt = float(v_opt.mean())
    mean_v_full = float(v_full.mean())
    result = LsqResult(P=P, S=S, p=p, trials=trials, mean_v_opt=mean_v_opt,
                       mean_v_slope=mean_v_full - mean_v_opt, mean_v_full=mean_v_full, predicted=p / (P * S))
    logger.info(f"lsq P={P} S={S}: mean V_opt={result.mean_v_opt:.3e} full={result.mean_v_full:.3e} "
                f"p/(PS)={result.predicted:.3e}")
    return result
