"""Train the default 500-parameter TCN predistorter on the moderate PA surrogate.

Prints test-split metrics with and without the predistorter and writes the
model, history and reports to ``--out``.
"""

import argparse
import json
from pathlib import Path

from tcndpd.export import save_history, save_report
from tcndpd.harness import TrainConfig, evaluate_chain, ofdm_splits, train_dpd
from tcndpd.pa import PaChain, make_reference_pa
from tcndpd.signals import OfdmConfig
from tcndpd.tcn import TcnArch, save_model, solve_width_for_budget


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--budget", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=500)
    ap.add_argument("--activation", default="hardswish")
    ap.add_argument("--difficulty", default="moderate", choices=["mild", "moderate", "severe"])
    ap.add_argument("--pa-seed", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/linearization"))
    args = ap.parse_args()

    splits = ofdm_splits(OfdmConfig())
    pa = PaChain(make_reference_pa(args.pa_seed, args.difficulty))
    template = TcnArch(activation=args.activation)
    arch = solve_width_for_budget(args.budget, template).apply(template)
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    model, rec = train_dpd(pa, splits["train"], arch, cfg, splits["val"])

    before = evaluate_chain(None, pa, splits["test"])
    after = evaluate_chain(model, pa, splits["test"])
    args.out.mkdir(parents=True, exist_ok=True)
    save_model(model, args.out / "model.txt")
    save_history(rec.history, args.out / "history.csv")
    save_report(before, args.out, prefix="baseline_")
    save_report(after, args.out, prefix="test_")

    summary = {
        "n_params": rec.n_params,
        "widths": list(arch.widths),
        "wall_clock_s": round(rec.wall_clock_s, 1),
        "without_dpd": before.scalars(),
        "with_dpd": after.scalars(),
        "acpr_improvement_db": [after.acpr_left_dbc - before.acpr_left_dbc,
                                after.acpr_right_dbc - before.acpr_right_dbc],
        "evm_improvement_db": after.evm_db - before.evm_db,
    }
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
