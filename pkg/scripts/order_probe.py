"""Local error order of the example 2 fit near the origin.

The data closest to the origin sits at |x| ~ 0.022 (the center coordinate
decays like x0 / sqrt(1 + 2 x0^2 t)), so the probe window is swept to show
where the fit interpolates and where it extrapolates.
"""
import numpy as np

from kcm.analysis import local_order_probe
from kcm.dynsys import reference_manifold, register_example
from kcm.experiments import default_config, select_and_fit
from kcm.integrate import generate_dataset

if __name__ == "__main__":
    cfg = default_config(2)
    data = generate_dataset(register_example(2), cfg.integrator)
    print(f"N = {data.N}, min |x| in data = {np.min(np.abs(data.X)):.4f}")
    exact = reference_manifold(2).evaluate_many
    for run in cfg.runs:
        fk = select_and_fit(data, run, cfg)
        print(f"{fk.label}: {fk.greedy.n_selected} centers")
        for half in (0.01, 0.02, 0.03, 0.05, 0.1):
            probe = local_order_probe(fk.hhat, exact, inner=(-half, half))
            q = "n/a" if probe.q is None else f"{probe.q:.3f}"
            print(f"  window [-{half}, {half}]: q = {q}, max err = {probe.error.max():.2e}")
