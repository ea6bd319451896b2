"""Activation and parameter-budget sweeps on the default OFDM stimulus.

Writes ``sweep_activations.csv`` and ``sweep_budgets.csv`` to ``--out`` and
prints both tables. Full-length runs take hours on one core; ``--epochs``
and ``--seeds`` trade fidelity for time.
"""

import argparse
from pathlib import Path

from tcndpd.harness import TrainConfig, ofdm_splits, sweep_activations, sweep_budgets, write_table
from tcndpd.pa import PaChain, make_reference_pa
from tcndpd.signals import OfdmConfig
from tcndpd.tcn import TcnArch, solve_width_for_budget


def show(rows, cols):
    print("  ".join(f"{c:>14}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:>14.3f}" if isinstance(r[c], float) else f"{r[c]!s:>14}"
                        for c in cols))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--budgets", type=int, nargs="+", default=[200, 500, 1000])
    ap.add_argument("--budget", type=int, default=500, help="budget for the activation sweep")
    ap.add_argument("--skip", choices=["act", "budget"])
    ap.add_argument("--n-jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("runs/sweeps"))
    args = ap.parse_args()

    splits = ofdm_splits(OfdmConfig())
    pa = PaChain(make_reference_pa(0, "moderate"))
    cfg = TrainConfig(epochs=args.epochs)
    common = dict(pa=pa, cfg=cfg, stimulus=splits["train"], val=splits["val"],
                  test=splits["test"], n_jobs=args.n_jobs)
    args.out.mkdir(parents=True, exist_ok=True)

    if args.skip != "act":
        arch = solve_width_for_budget(args.budget, TcnArch()).apply(TcnArch())
        rows = sweep_activations(None, args.seeds, arch, **common)
        write_table(rows, args.out / "sweep_activations.csv")
        show(rows, ["id", "activation", "nmse_mean_db", "nmse_std_db", "acpr_mean_dbc",
                    "acpr_std_dbc"])
    if args.skip != "budget":
        rows = sweep_budgets(args.budgets, args.seeds, TcnArch(), **common)
        write_table(rows, args.out / "sweep_budgets.csv")
        show(rows, ["budget", "n_params", "nmse_mean", "acpr_left_mean", "acpr_right_mean",
                    "evm_mean", "train_loss_mean"])


if __name__ == "__main__":
    main()
