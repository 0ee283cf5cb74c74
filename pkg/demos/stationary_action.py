"""The action is stationary on a computed solution and not on a bent path."""
import numpy as np

from vakonomic.integrate import IntegratorConfig, integrate
from vakonomic.models import MODELS
from vakonomic.variational import (Bump, action_derivative, admissible_path,
                                   endpoint_compatible_variation)

entry = MODELS["sphere"]
sys = entry.build({})
tr = integrate(sys, entry.initial(sys), IntegratorConfig((0, 1), "rk4", 1e-3))
base = Bump(0, 1, np.array([1.0, -0.5]), 0)
u0 = sys.m + sys.mbar


def bent_controls(t, amp):
    return tr.interpolate(t)[u0:] + amp * np.array([1.0, -0.5]) * np.cos(3 * t)


for amp in (0.0, 0.01, 0.1, 1.0):
    ctrl = lambda t: bent_controls(t, amp)
    rate = lambda t: (ctrl(t + 1e-6) - ctrl(t - 1e-6)) / 2e-6
    path = admissible_path(sys, tr.times, tr.x[0], ctrl, rate)
    v, _ = endpoint_compatible_variation(sys, path, base)
    r = action_derivative(sys, path, v, 1e-4)
    print(f"bend {amp:<5g} dS/ds = {r.fd_derivative:+.3e}  (analytic {r.analytic_derivative:+.3e})")
