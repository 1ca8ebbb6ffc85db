import json
import os
import subprocess
import sys

import numpy as np

from fracgreen._accel import BACKEND

SCRIPT = """
import json, math
import numpy as np
from fracgreen._accel import BACKEND
from fracgreen.fractional import TimeGrid
from fracgreen.levi import CoefficientField, OperatorSpec, SpaceTimeGrid, solve_Q
from fracgreen.solver import CauchyProblem, solve_cauchy
op = OperatorSpec.isotropic(0.5, 1, CoefficientField.trig(1.0, 0.3, [1.0]))
g = SpaceTimeGrid.periodic_box(TimeGrid.graded(1.0, 3, 4.0), [-math.pi], [math.pi], [8])
q = solve_Q(op, g, g.points[2]).values[1:]
u = solve_cauchy(CauchyProblem(0.5, 1.0, op, CoefficientField.bump(0.0, 1.0, [0.0], 0.8)), g,
                 estimate_error=False).u
print(json.dumps({"backend": BACKEND, "q": q.ravel().tolist(), "u": u.ravel().tolist()}))
"""


def run_with(env_update):
    env = dict(os.environ)
    env.pop("FRACGREEN_BACKEND", None)
    env.pop("FRACGREEN_DISABLE_NUMBA", None)
    env.update(env_update)
    proc = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True)
    return proc


def test_numpy_fallback_matches_compiled_backend():
    fast = run_with({"FRACGREEN_BACKEND": "numba"})
    slow = run_with({"FRACGREEN_DISABLE_NUMBA": "1"})
    assert fast.returncode == 0 and slow.returncode == 0, fast.stderr + slow.stderr
    a, b = json.loads(fast.stdout), json.loads(slow.stdout)
    assert b["backend"] == "numpy"
    for key in ("q", "u"):
        x, y = np.array(a[key]), np.array(b[key])
        assert np.allclose(x, y, rtol=1e-12, atol=1e-12 * np.max(np.abs(x)))


def test_unknown_backend_is_rejected():
    proc = run_with({"FRACGREEN_BACKEND": "cuda"})
    assert proc.returncode != 0 and "FRACGREEN_BACKEND" in proc.stderr


def test_default_backend_is_known():
    assert BACKEND in ("numba", "numpy")
