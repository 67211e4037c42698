"""Constant-velocity Kalman filter over (x, y, aspect, h) and their rates.

Everything here works on plain numpy arrays: a state is an 8-vector mean
plus an 8x8 covariance, a measurement is a 4-vector (cx, cy, w/h, h). The
``*_batch`` methods process N states at once with stacked arrays and are
the ones the tracker uses per frame.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError, NumericalError

NDIM = 4
# chi-square 0.95 quantile with 4 degrees of freedom
CHI2_GATE_4DOF = 9.4877

STD_WEIGHT_POSITION = 1.0 / 20
STD_WEIGHT_VELOCITY = 1.0 / 160
ASPECT_MEASUREMENT_STD = 1e-1
ASPECT_INIT_STD = 1e-2
ASPECT_PROCESS_STD = 1e-2
ASPECT_RATE_STD = 1e-5


class MotionState(NamedTuple):
    mean: np.ndarray
    covariance: np.ndarray


def _motion_matrix(dt: float = 1.0) -> np.ndarray:
    f = np.eye(2 * NDIM)
    f[:NDIM, NDIM:] = dt * np.eye(NDIM)
    return f


def _check_measurement(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float).reshape(-1, NDIM)
    if np.any(m[:, 3] <= 0) or np.any(m[:, 2] <= 0):
        raise DomainError("measurement needs positive height and aspect ratio")
    return m


class KalmanFilter:
    """Height-scaled noise model: position/height std is h/20, rate std h/160.

    ``measurement_noise_scale`` multiplies the measurement std; shrinking it
    towards zero makes updates snap onto the measurement.
    """

    def __init__(self, measurement_noise_scale: float = 1.0):
        self.motion_mat = _motion_matrix()
        self.update_mat = np.eye(NDIM, 2 * NDIM)
        self.measurement_noise_scale = measurement_noise_scale

    # noise schedules, vectorised over a batch of heights
    def _process_std(self, h: np.ndarray) -> np.ndarray:
        wp, wv = STD_WEIGHT_POSITION * h, STD_WEIGHT_VELOCITY * h
        ap = np.full_like(h, ASPECT_PROCESS_STD)
        av = np.full_like(h, ASPECT_RATE_STD)
        return np.stack([wp, wp, ap, wp, wv, wv, av, wv], axis=-1)

    def _measurement_std(self, h: np.ndarray) -> np.ndarray:
        wp = STD_WEIGHT_POSITION * h
        a = np.full_like(h, ASPECT_MEASUREMENT_STD)
        return self.measurement_noise_scale * np.stack([wp, wp, a, wp], axis=-1)

    def initiate(self, measurement) -> MotionState:
        m = _check_measurement(measurement)[0]
        mean = np.r_[m, np.zeros(NDIM)]
        h = m[3]
        std = np.array([
            2 * STD_WEIGHT_POSITION * h,
            2 * STD_WEIGHT_POSITION * h,
            ASPECT_INIT_STD,
            2 * STD_WEIGHT_POSITION * h,
            10 * STD_WEIGHT_VELOCITY * h,
            10 * STD_WEIGHT_VELOCITY * h,
            ASPECT_RATE_STD,
            10 * STD_WEIGHT_VELOCITY * h,
        ])
        return MotionState(mean, np.diag(std**2))

    def predict(self, state: MotionState) -> MotionState:
        mean, cov = state
        q = np.diag(self._process_std(np.asarray(mean[3])) ** 2)
        f = self.motion_mat
        return MotionState(f @ mean, f @ cov @ f.T + q)

    def predict_batch(self, means: np.ndarray, covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Predict N states at once; ``means`` is (N, 8), ``covs`` (N, 8, 8)."""
        means = np.asarray(means, dtype=float)
        covs = np.asarray(covs, dtype=float)
        if len(means) == 0:
            return means.reshape(0, 2 * NDIM), covs.reshape(0, 2 * NDIM, 2 * NDIM)
        std = self._process_std(means[:, 3])
        q = np.zeros_like(covs)
        idx = np.arange(2 * NDIM)
        q[:, idx, idx] = std**2
        f = self.motion_mat
        new_means = means @ f.T
        new_covs = f @ covs @ f.T + q
        return new_means, new_covs

    def predict_states(self, states: Sequence[MotionState]) -> list[MotionState]:
        if not states:
            return []
        means, covs = self.predict_batch(
            np.stack([s.mean for s in states]), np.stack([s.covariance for s in states])
        )
        return [MotionState(m, c) for m, c in zip(means, covs)]

    def project_batch(self, means: np.ndarray, covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Measurement-space mean (N, 4) and innovation covariance S (N, 4, 4)."""
        std = self._measurement_std(means[:, 3])
        r = np.zeros((len(means), NDIM, NDIM))
        idx = np.arange(NDIM)
        r[:, idx, idx] = std**2
        h = self.update_mat
        return means @ h.T, h @ covs @ h.T + r

    def project(self, state: MotionState) -> tuple[np.ndarray, np.ndarray]:
        m, s = self.project_batch(state.mean[None], state.covariance[None])
        return m[0], s[0]

    def update(self, state: MotionState, measurement) -> MotionState:
        means, covs = self.update_batch(
            state.mean[None], state.covariance[None], _check_measurement(measurement)
        )
        return MotionState(means[0], covs[0])

    def update_batch(self, means, covs, measurements) -> tuple[np.ndarray, np.ndarray]:
        """Kalman correction of N states with their N measurements."""
        means = np.asarray(means, dtype=float)
        covs = np.asarray(covs, dtype=float)
        z = _check_measurement(measurements)
        if len(means) == 0:
            return means, covs
        proj_mean, s = self.project_batch(means, covs)
        chol = _cholesky(s)
        # K = P H^T S^-1, solved as S K^T = H P
        pht = covs @ self.update_mat.T  # (N, 8, 4)
        gain = np.swapaxes(_cho_solve(chol, np.swapaxes(pht, 1, 2)), 1, 2)
        innovation = z - proj_mean
        new_means = means + np.einsum("nij,nj->ni", gain, innovation)
        new_covs = covs - gain @ s @ np.swapaxes(gain, 1, 2)
        new_covs = 0.5 * (new_covs + np.swapaxes(new_covs, 1, 2))
        return new_means, new_covs

    def gating_distance_batch(self, means, covs, measurements) -> np.ndarray:
        """Squared Mahalanobis distance of every measurement to every state, (N, M)."""
        means = np.asarray(means, dtype=float).reshape(-1, 2 * NDIM)
        covs = np.asarray(covs, dtype=float).reshape(-1, 2 * NDIM, 2 * NDIM)
        z = np.asarray(measurements, dtype=float).reshape(-1, NDIM)
        if len(means) == 0 or len(z) == 0:
            return np.zeros((len(means), len(z)))
        proj_mean, s = self.project_batch(means, covs)
        chol = _cholesky(s)
        d = z[None, :, :] - proj_mean[:, None, :]  # (N, M, 4)
        # L y = d^T, squared distance = |y|^2
        y = np.linalg.solve(chol, np.swapaxes(d, 1, 2))
        return np.einsum("nkm,nkm->nm", y, y)

    def gating_distance(self, states: Sequence[MotionState], measurements) -> np.ndarray:
        if not states:
            return np.zeros((0, len(np.asarray(measurements).reshape(-1, NDIM))))
        return self.gating_distance_batch(
            np.stack([s.mean for s in states]),
            np.stack([s.covariance for s in states]),
            measurements,
        )


def _cholesky(s: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("innovation covariance is not positive definite") from exc


def _cho_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.linalg.solve(chol, b)
    return np.linalg.solve(np.swapaxes(chol, 1, 2), y)


_default = KalmanFilter()


def kf_initiate(measurement) -> MotionState:
    return _default.initiate(measurement)


def kf_predict_batch(states: Sequence[MotionState]) -> list[MotionState]:
    return _default.predict_states(states)


def kf_update(state: MotionState, measurement) -> MotionState:
    return _default.update(state, measurement)


def gating_distance_batch(states: Sequence[MotionState], measurements) -> np.ndarray:
    return _default.gating_distance(states, measurements)
