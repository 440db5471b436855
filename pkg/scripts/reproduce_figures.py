"""Run the bundled figure scenarios and the diffusion sweep; writes plot-ready CSVs under --out."""
import argparse
from pathlib import Path

from rdpattern.experiments import Config, bundled, load_scenario, run_scenario, run_sweep, sweep_from_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="figures_out")
    ap.add_argument("--grid", type=int, default=512)
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()
    out = Path(args.out)

    for name in ("fig3_3", "fig3_5"):
        res = run_scenario(load_scenario(bundled(name), n=args.grid), out / name)
        print(f"{name}: reason={res['reason']} t={res['t_final']:.4g} jumps={res['jumps']}")

    plan = sweep_from_config(Config.load(bundled("fig3_4")), n=args.grid)
    for row in run_sweep(plan, out / "fig3_4", workers=args.workers):
        print(f"fig3_4 D={row['value']:g}: jumps={row['jump_count']} status={row['status']}")


if __name__ == "__main__":
    main()
