"""Inertial minus inertialess <qq> in homogeneous shear as the bead mass shrinks."""
from _common import parser, save

from dumbbellflow.acceptance import epsilon_ladder

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.2, 0.1, 0.05])
    ap.add_argument("--dt-ratio", type=float, default=0.05, help="dt / lambda_B")
    ap.add_argument("--shear-rate", type=float, default=1.0)
    a = ap.parse_args()
    v = epsilon_ladder(a.quick, tuple(a.eps), a.shear_rate, a.dt_ratio)
    print(f"{'eps':>6} {'|<qq>_m - <qq>_0|':>18} {'closed form':>12}")
    for r in v["rows"]:
        print(f"{r['eps']:6.3f} {r['error']:18.3e} {r['exact_error']:12.3e}")
    print(f"fitted order {v['order']:.2f}")
    save(a.out, "epsilon_ladder.json", v)
