"""Rolling sphere on a turntable: integrate, halve the step, watch the invariants."""
import numpy as np

from vakonomic.integrate import IntegratorConfig, admissibility_defect, integrate
from vakonomic.models import MODELS

entry = MODELS["sphere"]
sys = entry.build({"omega0": 1.0, "omega1": 0.3, "omega_freq": 2.0})
start = entry.initial(sys)

prev = None
for h in (1e-2, 5e-3, 2.5e-3):
    tr = integrate(sys, start, IntegratorConfig((0.0, 2.0), "rk4", h))
    w1p = tr.w1prime_defect.max()
    ratio = "" if prev is None else f"  ratio {prev / w1p:5.2f}"
    print(f"h={h:<7g} max|phi|={tr.phi_max.max():.1e}  W1' defect={w1p:.2e}{ratio}"
          f"  admissibility={admissibility_defect(sys.spec, tr):.2e}")
    prev = w1p

x, y = tr.final_state.x, tr.final_state.controls
print("final contact point", np.round(x[1:], 6), "controls", np.round(y, 6))
