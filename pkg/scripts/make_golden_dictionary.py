"""Reference CBM dictionary from a general-purpose conic solver.

Solves the epigraph form

    minimize eps  s.t. |w^H a(theta_i)| <= eps on the sidelobe grid,
                       w^H a(theta_t) = 1, w^H a(theta_c) = Delta e^{j phi}

with cvxpy (CLARABEL) for every (Delta, phi) pair of the default config and
writes tests/fixtures/golden_dictionary.txt. Run once offline:

    python scripts/make_golden_dictionary.py
"""

from pathlib import Path

import cvxpy as cp
import numpy as np

from jrdap.array_beam import ArrayGeometry, BeamDictionary, sidelobe_grid, steering_vector
from jrdap.config import default_config
from jrdap.io import save_dictionary

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "golden_dictionary.txt"


def solve_entry(geometry, theta_t, theta_c, level, phase, grid):
    A = steering_vector(geometry, grid)                  # rows a(theta_i)^T
    at = steering_vector(geometry, theta_t)
    ac = steering_vector(geometry, theta_c)
    w = cp.Variable(geometry.num_elements, complex=True)
    eps = cp.Variable()
    # w^H a = a^T conj(w)
    cons = [cp.abs(A @ cp.conj(w)) <= eps,
            at @ cp.conj(w) == 1.0,
            ac @ cp.conj(w) == level * np.exp(1j * phase)]
    prob = cp.Problem(cp.Minimize(eps), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status != "optimal":
        raise RuntimeError(f"reference solve failed: {prob.status}")
    wv = np.asarray(w.value)
    return wv, float(np.max(np.abs(A @ wv.conj())))


def main():
    cfg = default_config()
    c = cfg.comm
    geometry = ArrayGeometry(cfg.array.M, cfg.array.spacing)
    grid = sidelobe_grid(c.sidelobe_region_deg, c.grid_step_deg)
    ws, lv, ph, psl = [], [], [], []
    for level_db in c.sll_db_list:
        for phase in c.phase_list:
            level = 10.0 ** (level_db / 20.0)
            w, p = solve_entry(geometry, c.theta_t_deg, c.theta_c_deg, level, phase, grid)
            ws.append(w)
            lv.append(level)
            ph.append(phase)
            psl.append(p)
            print(f"Delta={level_db} dB phi={phase:.4f}: PSL {20 * np.log10(p):.4f} dB")
    d = BeamDictionary(np.array(ws), np.array(lv), np.array(ph), np.array(psl))
    OUT.parent.mkdir(parents=True, exist_ok=True)
    save_dictionary(OUT, d, {"solver": f"cvxpy {cp.__version__} CLARABEL", "grid_step_deg": c.grid_step_deg})
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
