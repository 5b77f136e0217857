"""Two-photon indistinguishability versus emission-time separation.

Model (our choice; the functional form is not fixed by the measurement):
spectral diffusion adds dephasing that saturates on a correlation time,

    M(tau) = Gamma / (Gamma + 2 * (g_star + g_sd * (1 - exp(-tau / tau_c))))

with rates in ns^-1 and ``tau``, ``tau_c`` in microseconds.
"""
import numpy as np
from scipy.optimize import least_squares, minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import NumericalError, PreconditionError, check_positive
from .dynamics import DEFAULT_GAMMA, EmitterParams

# Corrected HOM visibility at four delays (us) and their quoted uncertainties.
DELAY_POINTS_US = np.array([0.0131, 0.67, 1.31, 2.67])
DELAY_VISIBILITIES = np.array([0.9856, 0.985, 0.970, 0.959])
DELAY_UNCERTAINTIES = np.array([0.0013, 0.001, 0.002, 0.001])


def _model(delay, gamma, g_star, g_sd, tau_c):
    extra = g_star + g_sd * -np.expm1(-np.asarray(delay, dtype=float) / tau_c)
    return gamma / (gamma + 2.0 * extra)


def indistinguishability(e, delay):
    """Indistinguishability of photons emitted ``delay`` microseconds apart."""
    delay = np.asarray(delay, dtype=float)
    if np.any(delay < 0):
        raise PreconditionError("delay: must be >= 0")
    out = _model(delay, e.gamma, e.gamma_dephase, e.gamma_sd, e.tau_c)
    return float(out) if out.ndim == 0 else out


class IndistinguishabilityModel(RegressorMixin, BaseEstimator):
    """Calibrates dephasing and spectral-diffusion rates on (delay, M) data.

    Parameters
    ----------
    gamma : float
        Radiative rate (ns^-1), held fixed.
    loss : {"squared", "minimax"}
        ``"squared"`` minimises the (optionally weighted) sum of squared
        residuals; ``"minimax"`` minimises the largest absolute residual.
    tau_c_grid : array-like
        Starting values (us) for the correlation time; the best local
        optimum over all starts is kept.
    """

    def __init__(self, gamma=DEFAULT_GAMMA, loss="squared", tau_c_grid=None):
        self.gamma = gamma
        self.loss = loss
        self.tau_c_grid = tau_c_grid

    def fit(self, X, y, sample_weight=None):
        delay = np.asarray(X, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if delay.size != y.size or delay.size < 3:
            raise PreconditionError("X, y: need at least three matching points")
        if np.any(delay < 0) or np.any((y <= 0) | (y > 1)):
            raise PreconditionError("X, y: delays must be >= 0 and visibilities in (0, 1]")
        check_positive(self.gamma, "gamma")
        w = np.ones_like(y) if sample_weight is None else np.sqrt(np.asarray(sample_weight, float))
        starts = np.logspace(-2, 3, 26) if self.tau_c_grid is None else np.asarray(self.tau_c_grid)
        g0 = max(self.gamma * (1.0 / y.max() - 1.0) / 2.0, 1e-6)

        # log-space parameters stay positive; the box keeps exp() finite when
        # the optimum drifts towards the linear (tau_c -> inf) limit
        lo, hi = np.log(1e-9), np.log(1e6)

        def pred(p):
            return _model(delay, self.gamma, *np.exp(np.clip(p, lo, hi)))

        best = None
        for tc in starts:
            p0 = np.clip(np.log([g0, g0, tc]), lo, hi)
            if self.loss == "squared":
                r = least_squares(lambda p: w * (pred(p) - y), p0, bounds=(lo, hi), max_nfev=5000)
                cost = float(np.sum(r.fun**2))
            elif self.loss == "minimax":
                r = minimize(lambda p: np.max(np.abs(pred(p) - y)), p0, method="Nelder-Mead",
                             options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
                cost = float(r.fun)
            else:
                raise PreconditionError(f"loss: unknown loss {self.loss!r}")
            x = np.clip(r.x, lo, hi)
            if np.all(np.isfinite(x)) and (best is None or cost < best[0]):
                best = (cost, x)
        if best is None:
            raise NumericalError("IndistinguishabilityModel: fit did not converge")
        self.gamma_dephase_, self.gamma_sd_, self.tau_c_ = (float(v) for v in np.exp(best[1]))
        self.residuals_ = pred(best[1]) - y
        return self

    def predict(self, X):
        check_is_fitted(self, "tau_c_")
        return _model(np.asarray(X, dtype=float).reshape(-1), self.gamma,
                      self.gamma_dephase_, self.gamma_sd_, self.tau_c_)

    def to_params(self, **overrides):
        check_is_fitted(self, "tau_c_")
        kw = dict(gamma=self.gamma, gamma_dephase=self.gamma_dephase_,
                  gamma_sd=self.gamma_sd_, tau_c=self.tau_c_)
        kw.update(overrides)
        return EmitterParams(**kw)
