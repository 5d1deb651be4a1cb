"""The complete replicated experiment suite on one synthetic dataset.

Latent-space probes, projected label propagation, and pseudo-label
training all run from one config; results, embeddings, scatterplots,
checkpoints, and a digest manifest land in the output directory. The
entire run is a pure function of the config and base seed.
"""

import tempfile
from pathlib import Path

from epl import ExperimentConfig
from epl.pipeline import aggregate_rows, run_experiment

out_dir = Path(tempfile.mkdtemp(prefix="epl_demo_")) / "experiment"
config = ExperimentConfig(
    classes=4, per_class=100, dims=8, spread=5.0, center_dist=10.0,
    dataset_seed=3, dataset_name="demo_blobs",
    s_frac=0.02, u_frac=0.68, t_frac=0.30,
    base_seed=7, replicas=2,
    epochs=20, batch_size=64,
    iterations=400, exaggeration_iters=100, momentum_switch=100,
    out_dir=str(out_dir),
)

rows, exit_code = run_experiment("all", config)
print(f"{len(rows)} result rows, exit code {exit_code}\n")

print(f"{'experiment':<12}{'classifier':<14}{'accuracy':<22}{'kappa'}")
for entry in aggregate_rows(rows):
    print(f"{entry['experiment']:<12}{entry['classifier']:<14}"
          f"{entry['accuracy_mean']:.4f} +- {entry['accuracy_std']:.4f}     "
          f"{entry['kappa_mean']:.4f} +- {entry['kappa_std']:.4f}")

print(f"\nartifacts in {out_dir}:")
for path in sorted(out_dir.iterdir()):
    print(f"  {path.name}")
