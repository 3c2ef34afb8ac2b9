"""Script to run the trace-error table and the OT verification table end to end."""

import sys
import os
import argparse
import logging

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from dotenv import load_dotenv

from src.diffusion.schedules import NoiseSchedule, ScheduleKind
from src.ot.experiment import OTConfig, compare_variants, convergence_in_m, ot_experiment
from src.training.checkpoint import save_checkpoint
from src.training.datasets import builtin_law, gen_chessboard
from src.training.evaluation import TABLE_COLUMNS, eval_trace_table
from src.training.trainer import TrainConfig, train_eps, train_tm
from src.utils.csv_io import write_csv

OT_DATASETS = ('gaussian', 'affine3', 'nonaffine3')
OT_COLUMNS = ['schedule', 'data', 's', 'max_asym', 'min_eig_sym', 'verdict']
VARIANT_COLUMNS = ['schedule', 'default_max_asym', 'transpose_max_asym', 'default_verdict', 'transpose_verdict']
CONVERGENCE_COLUMNS = ['schedule', 'traj', 'asym_M', 'asym_2M', 'rel_change']


def reproduce(out_dir: str = './results', n_steps: int = 20000, m: int = 1000, n_traj: int = 16, seed: int = 0):
    """
    Train the toy nets on chessboard data, tabulate trace errors, then run the OT sweep.

    Args:
        out_dir: Where CSVs and checkpoints go
        n_steps: Training steps per net
        m: Euler steps per OT chain
        n_traj: OT chains per (schedule, data) cell
        seed: Root seed
    """
    print("=" * 60)
    print("📊 DIFFUSION FISHER TABLES")
    print("=" * 60)
    os.makedirs(out_dir, exist_ok=True)

    # Step 1: Data
    print("\n[1/6] 🎲 Sampling chessboard data...")
    ds = gen_chessboard(5000, seed)
    ds.to_csv(os.path.join(out_dir, 'chessboard.csv'))
    print(f"✅ {ds.N} points, D_y = {ds.D_y:.3f}")

    # Step 2: Training
    sched = NoiseSchedule(kind=ScheduleKind.VE)
    cfg = TrainConfig(n_steps=n_steps, seed=seed)
    print(f"\n[2/6] 🔧 Training epsilon and trace nets ({sched.describe()}, {n_steps} steps each)...")
    eps = train_eps(ds, sched, cfg)
    tm = train_tm(ds, sched, cfg)
    save_checkpoint(eps.net, os.path.join(out_dir, 'eps.ckpt'))
    save_checkpoint(tm.net, os.path.join(out_dir, 'tm.ckpt'))
    print(f"✅ Final losses: eps {eps.final_loss:.4f}, tm {tm.final_loss:.4f}")

    # Step 3: Trace table
    print("\n[3/6] 📐 Evaluating trace errors...")
    rows = eval_trace_table(eps.net, tm.net, ds, sched, seed=seed, show_progress=True)
    write_csv(os.path.join(out_dir, 'trace_table.csv'), TABLE_COLUMNS, (r.as_row() for r in rows))
    print(f"\n   {'t':>5} {'VJP':>10} {'DF-TM':>10}")
    for r in rows:
        print(f"   {r.t:>5.1f} {100 * r.vjp_rel_error:>9.2f}% {100 * r.df_tm_rel_error:>9.2f}%")

    # Step 4: OT sweep
    print(f"\n[4/6] 🧭 OT verification (M={m}, {n_traj} chains per cell)...")
    ot_cfg = OTConfig(M=m, n_traj=n_traj, seed=seed)
    ot_rows = []
    for kind in ScheduleKind:
        for name in OT_DATASETS:
            report = ot_experiment(builtin_law(name), NoiseSchedule.experiment(kind), ot_cfg)
            ot_rows.append([kind.value, name, report.s, report.max_asym, report.min_eig, report.verdict])
            print(f"   {kind.value:>6} {name:>11}: asym {100 * report.max_asym:6.2f}%  -> {report.verdict}")
    write_csv(os.path.join(out_dir, 'ot_table.csv'), OT_COLUMNS, ot_rows)

    # Step 5: Non-affine diagnostics
    print("\n[5/6] 🔍 Non-affine data: transposed update and step refinement...")
    law = builtin_law('nonaffine3')
    variant_rows, convergence_rows = [], []
    for kind in ScheduleKind:
        sched = NoiseSchedule.experiment(kind)
        reports = compare_variants(law, sched, ot_cfg)
        variant_rows.append([kind.value, reports['default'].max_asym, reports['transpose'].max_asym,
                             reports['default'].verdict, reports['transpose'].verdict])
        for row in convergence_in_m(law, sched, ot_cfg):
            convergence_rows.append([kind.value, row['traj'], row['asym_M'], row['asym_2M'], row['rel_change']])
        worst = max(r[4] for r in convergence_rows if r[0] == kind.value)
        print(f"   {kind.value:>6}: asym {100 * reports['default'].max_asym:6.2f}% "
              f"(transposed {100 * reports['transpose'].max_asym:6.2f}%), "
              f"max change M->2M {100 * worst:5.2f}%")
    write_csv(os.path.join(out_dir, 'ot_variants.csv'), VARIANT_COLUMNS, variant_rows)
    write_csv(os.path.join(out_dir, 'ot_convergence.csv'), CONVERGENCE_COLUMNS, convergence_rows)

    # Step 6: Summary
    print("\n[6/6] 📄 Outputs:")
    for name in ('chessboard.csv', 'eps.ckpt', 'tm.ckpt', 'trace_table.csv', 'ot_table.csv',
                 'ot_variants.csv', 'ot_convergence.csv'):
        print(f"   {os.path.join(out_dir, name)}")

    print("\n" + "=" * 60)
    print("✅ ALL TABLES COMPLETE!")
    print("=" * 60)


if __name__ == "__main__":
    load_dotenv()
    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        level=logging.WARNING
    )
    parser = argparse.ArgumentParser(description='Reproduce the trace-error and OT tables')
    parser.add_argument('--out-dir', default='./results')
    parser.add_argument('--n-steps', type=int, default=20000)
    parser.add_argument('--m', type=int, default=1000)
    parser.add_argument('--n-traj', type=int, default=16)
    parser.add_argument('--seed', type=int, default=0)
    args = parser.parse_args()

    reproduce(args.out_dir, args.n_steps, args.m, args.n_traj, args.seed)
